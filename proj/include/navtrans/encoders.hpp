#pragma once

// Bi-directional GRU encoders for the instruction (word embeddings) and the
// navigation graph (one-hot triplets).
//
// Batches are handled with padding: inputs are laid out step-major (row
// t * batch + i holds position t of sequence i) and padded positions leave
// the hidden state untouched, so every sequence sees exactly its own tokens.

#include <span>
#include <string>
#include <vector>

#include "navtrans/graph.hpp"
#include "navtrans/rng.hpp"
#include "navtrans/tensor.hpp"

namespace navtrans {

// z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
// c = tanh(x Wc + (r * h) Uc + bc), h' = (1 - z) * h + z * c.
// Gate blocks are stored side by side in [z | r | c] order.
struct GruParams {
  ad::Tensor w_input;  // D x 3H
  ad::Tensor w_gates;  // H x 2H, hidden -> [z | r]
  ad::Tensor w_cand;   // H x H, (r * h) -> c
  ad::Tensor bias;     // 1 x 3H

  // Uniform in [-1/sqrt(H), 1/sqrt(H)].
  static GruParams init(std::size_t input_dim, std::size_t hidden, Rng& rng);
  static GruParams zeros(std::size_t input_dim, std::size_t hidden);

  std::size_t input_dim() const { return w_input.rows(); }
  std::size_t hidden() const { return w_cand.rows(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w_input", w_input);
    f(prefix + ".w_gates", w_gates);
    f(prefix + ".w_cand", w_cand);
    f(prefix + ".bias", bias);
  }
};

// x: B x D, h: B x H -> B x H.
ad::Tensor gru_cell(const ad::Tensor& x, const ad::Tensor& h, const GruParams& p);
// Same update with the input projection x W + b precomputed (B x 3H).
ad::Tensor gru_step(const ad::Tensor& projected, const ad::Tensor& h, const GruParams& p);

struct EncoderOutput {
  // Per-position [forward | backward] states; rows of sequence i follow
  // those of sequence i - 1 (offsets[i] is the first row of sequence i).
  ad::Tensor states;
  // [last forward | last backward] per sequence, one row each.
  ad::Tensor final;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;

  std::size_t sequences() const { return lengths.size(); }
  ad::Tensor sequence_states(std::size_t i) const;
};

// Bi-GRU over already projected inputs (step-major, padded; forward and
// backward projections come from their own parameter sets).
EncoderOutput bigru_encode_projected(const ad::Tensor& projected_fwd, const ad::Tensor& projected_bwd,
                                     std::span<const std::size_t> lengths, const GruParams& fwd,
                                     const GruParams& bwd);

// Single dense sequence (L x D rows).
EncoderOutput bigru_encode(const ad::Tensor& sequence, const GruParams& fwd, const GruParams& bwd);
// Several dense sequences of varying length, encoded as one padded batch.
EncoderOutput bigru_encode(std::span<const ad::Tensor> sequences, const GruParams& fwd,
                           const GruParams& bwd);

struct InstructionEncoder {
  ad::Tensor embedding;  // vocab x D
  GruParams fwd, bwd;

  static InstructionEncoder init(std::size_t vocab, std::size_t embed_dim, std::size_t hidden, Rng& rng);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".embedding", embedding);
    fwd.visit(prefix + ".fwd", f);
    bwd.visit(prefix + ".bwd", f);
  }
};

EncoderOutput encode_instructions(std::span<const std::vector<std::size_t>> token_ids,
                                  const InstructionEncoder& enc);
EncoderOutput encode_instruction(const std::vector<std::size_t>& token_ids, const InstructionEncoder& enc);

struct GraphEncoder {
  std::size_t node_capacity = 0;
  std::size_t behaviors = 0;
  GruParams fwd, bwd;  // input width 2 * node_capacity + behaviors

  static GraphEncoder init(std::size_t node_capacity, std::size_t behaviors, std::size_t hidden, Rng& rng);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    fwd.visit(prefix + ".fwd", f);
    bwd.visit(prefix + ".bwd", f);
  }
};

// One-hot rows times the input weights, computed as sums of the three
// selected weight rows (identical to encode_triplets(g) * W + b).
EncoderOutput encode_graphs(std::span<const TripletFeatures> graphs, const GraphEncoder& enc);
EncoderOutput encode_graph(const BehaviorGraph& graph, const GraphEncoder& enc);

}  // namespace navtrans
