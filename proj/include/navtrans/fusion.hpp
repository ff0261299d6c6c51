#pragma once

// Multi-head attention fusion of instruction and graph encodings.
//
// Instruction states query the graph triplet states; the attended result is
// concatenated with the instruction state at each position and reduced by a
// fully connected tanh layer into the decoder context C (one vector per
// instruction position).

#include <span>
#include <string>
#include <vector>

#include "navtrans/encoders.hpp"
#include "navtrans/rng.hpp"
#include "navtrans/tensor.hpp"

namespace navtrans {

struct AttentionResult {
  ad::Tensor output;   // m x d_v
  ad::Tensor weights;  // m x n, rows sum to 1
};

// softmax(Q K^T / sqrt(d_k)) V with Q: m x d_k, K: n x d_k, V: n x d_v.
AttentionResult scaled_dot_attention(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v);

struct MultiHeadParams {
  std::size_t heads = 1;
  std::size_t model_dim = 0;
  std::size_t head_dim = 0;
  std::vector<ad::Tensor> query, key, value;  // per head, model_dim x head_dim
  ad::Tensor output;                          // (heads * head_dim) x model_dim

  // Throws std::invalid_argument unless heads >= 1 divides model_dim.
  static MultiHeadParams init(std::size_t model_dim, std::size_t heads, Rng& rng);
  std::size_t weight_count() const;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::string p = prefix + ".head" + std::to_string(h);
      f(p + ".query", query[h]);
      f(p + ".key", key[h]);
      f(p + ".value", value[h]);
    }
    f(prefix + ".output", output);
  }
};

struct MultiHeadResult {
  ad::Tensor output;                 // m x model_dim
  std::vector<ad::Tensor> weights;   // per head, m x n
};

MultiHeadResult multi_head_attention(const ad::Tensor& queries, const ad::Tensor& keys_values,
                                     const MultiHeadParams& params);

// A block of query rows attending to a contiguous block of key/value rows.
struct AttentionGroup {
  std::vector<std::size_t> query_rows;
  std::size_t kv_begin = 0;
  std::size_t kv_end = 0;
};

// Batched form: every query row belongs to exactly one group. Weights are
// returned per group, then per head.
struct GroupedAttention {
  ad::Tensor output;
  std::vector<std::vector<ad::Tensor>> weights;
};
GroupedAttention multi_head_attention(const ad::Tensor& queries, const ad::Tensor& keys_values,
                                      std::span<const AttentionGroup> groups,
                                      const MultiHeadParams& params);

struct FusionParams {
  MultiHeadParams attention;
  ad::Tensor w_reduce;  // 2 * model_dim x context_dim
  ad::Tensor b_reduce;  // 1 x context_dim

  static FusionParams init(std::size_t model_dim, std::size_t heads, std::size_t context_dim, Rng& rng);
  std::size_t context_dim() const { return w_reduce.cols(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    attention.visit(prefix + ".attention", f);
    f(prefix + ".w_reduce", w_reduce);
    f(prefix + ".b_reduce", b_reduce);
  }
};

struct FusedContext {
  ad::Tensor context;  // sum(lengths) x context_dim, laid out like EncoderOutput::states
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;
  // Attention weights per graph group, then per head; group g covers the
  // instruction sequences mapped to graph g, in order.
  std::vector<std::vector<ad::Tensor>> attention;

  std::size_t sequences() const { return lengths.size(); }
};

// graph_of[i] names the graph sequence (in graphs) attended by instruction
// sequence i.
FusedContext fuse(const EncoderOutput& instructions, const EncoderOutput& graphs,
                  std::span<const std::size_t> graph_of, const FusionParams& params);
FusedContext fuse(const EncoderOutput& instruction, const EncoderOutput& graph, const FusionParams& params);

}  // namespace navtrans
