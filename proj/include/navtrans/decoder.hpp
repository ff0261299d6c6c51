#pragma once

// Attentive GRU decoder producing behavior plans.
//
// Token ids: behaviors 0..B-1, end-of-plan B, start-of-plan B + 1. Logits
// cover the B behaviors plus end-of-plan. The initial hidden state is a
// learned embedding of the start node, and every step soft-attends the fused
// context with an additive score v . tanh(C_j Wc + h Wh + b).

#include <span>
#include <string>
#include <vector>

#include "navtrans/encoders.hpp"
#include "navtrans/fusion.hpp"
#include "navtrans/graph.hpp"
#include "navtrans/rng.hpp"
#include "navtrans/tensor.hpp"

namespace navtrans {

class UnknownStartNode : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct DecoderParams {
  std::size_t behaviors = 0;
  ad::Tensor embedding;       // (B + 2) x E
  GruParams gru;              // input E + d_ctx
  ad::Tensor attn_context;    // d_ctx x A
  ad::Tensor attn_hidden;     // H x A
  ad::Tensor attn_bias;       // 1 x A
  ad::Tensor attn_score;      // A x 1
  ad::Tensor w_out;           // H x (B + 1)
  ad::Tensor b_out;           // 1 x (B + 1)
  ad::Tensor start_embedding; // node capacity x H

  static DecoderParams init(std::size_t behaviors, std::size_t node_capacity, std::size_t embed_dim,
                            std::size_t context_dim, std::size_t hidden, std::size_t attention_dim, Rng& rng);

  std::size_t end_token() const { return behaviors; }
  std::size_t start_token() const { return behaviors + 1; }
  std::size_t output_dim() const { return behaviors + 1; }
  std::size_t hidden() const { return gru.hidden(); }
  std::size_t node_capacity() const { return start_embedding.rows(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".embedding", embedding);
    gru.visit(prefix + ".gru", f);
    f(prefix + ".attn_context", attn_context);
    f(prefix + ".attn_hidden", attn_hidden);
    f(prefix + ".attn_bias", attn_bias);
    f(prefix + ".attn_score", attn_score);
    f(prefix + ".w_out", w_out);
    f(prefix + ".b_out", b_out);
    f(prefix + ".start_embedding", start_embedding);
  }
};

// Decoder state for a batch: row i of hidden belongs to sample i.
struct DecodeState {
  ad::Tensor hidden;              // batch x H
  std::vector<std::size_t> last;  // last emitted token per sample
  std::size_t step = 0;

  std::size_t batch() const { return last.size(); }
};

// Throws UnknownStartNode for a node index outside the embedding table.
DecodeState init_state(std::span<const std::size_t> start_nodes, const DecoderParams& params);
DecodeState init_state(std::size_t start_node, const DecoderParams& params);

// Step-invariant parts of the attention over C, computed once per batch.
struct PreparedContext {
  ad::Tensor context;    // sum(L) x d_ctx
  ad::Tensor projected;  // context * attn_context + attn_bias
  ad::Tensor owner;      // batch x sum(L), 1 where row j belongs to sample i
  ad::Tensor mask;       // batch x max(L), 0 or a large negative number
  std::vector<std::size_t> row_owner;   // sum(L): sample index of row j
  std::vector<std::size_t> padded_src;  // batch * max(L): source row of each padded cell
  std::vector<std::size_t> flat_cell;   // sum(L): padded cell of row j
  std::vector<std::size_t> lengths;
  std::size_t max_length = 0;

  std::size_t batch() const { return lengths.size(); }
};

PreparedContext prepare_context(const FusedContext& context, const DecoderParams& params);

struct StepOutput {
  ad::Tensor logits;     // batch x (B + 1)
  ad::Tensor attention;  // batch x max(L); padded cells are exactly 0
  DecodeState state;     // advanced state; last tokens are left for the caller to set
};

StepOutput decode_step(const DecodeState& state, const PreparedContext& context, const DecoderParams& params);

// Sets state.last from the chosen tokens (teacher forcing or greedy choice).
void feed_tokens(DecodeState& state, std::span<const std::size_t> tokens);

struct DecodeResult {
  Plan plan;               // behavior ids in the decoder's vocabulary
  bool truncated = false;  // max_len reached without end-of-plan
};

// Argmax decoding; ties go to the lowest token id. Runs without a tape.
std::vector<DecodeResult> greedy_decode(std::span<const std::size_t> start_nodes, const FusedContext& context,
                                        const DecoderParams& params, std::size_t max_len);

// Logits for every target position (gold plan followed by end-of-plan),
// feeding the gold previous token. Element t has one row per sample; rows
// of samples whose target is shorter than t + 1 are still computed and
// must be masked by the caller (see teacher_forced_targets).
std::vector<ad::Tensor> teacher_forced_logits(std::span<const std::size_t> start_nodes,
                                              std::span<const Plan> targets, const FusedContext& context,
                                              const DecoderParams& params);

// Mean cross-entropy over all valid (sample, position) pairs of the
// teacher-forced logits; each target is the plan followed by end-of-plan.
ad::Tensor sequence_cross_entropy(std::span<const ad::Tensor> logits, std::span<const Plan> targets,
                                  std::size_t end_token);

}  // namespace navtrans
