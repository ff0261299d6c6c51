#include "navtrans/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace navtrans {

using namespace ad;

namespace {

Tensor uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  // Glorot-style bound keeps the attention logits well scaled at init.
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(rows, cols, std::move(v), true);
}

}  // namespace

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.cols() != k.cols())
    throw ShapeError("scaled_dot_attention: query " + to_string(q.shape()) + " and key " +
                     to_string(k.shape()) + " widths differ");
  if (k.rows() != v.rows())
    throw ShapeError("scaled_dot_attention: key " + to_string(k.shape()) + " and value " +
                     to_string(v.shape()) + " row counts differ");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  AttentionResult r;
  r.weights = softmax(scale(matmul(q, transpose(k)), inv_sqrt), 1);
  r.output = matmul(r.weights, v);
  return r;
}

MultiHeadParams MultiHeadParams::init(std::size_t model_dim, std::size_t heads, Rng& rng) {
  if (heads == 0 || model_dim % heads != 0)
    throw std::invalid_argument("multi-head attention: model dimension " + std::to_string(model_dim) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  MultiHeadParams p;
  p.heads = heads;
  p.model_dim = model_dim;
  p.head_dim = model_dim / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    p.query.push_back(uniform(model_dim, p.head_dim, rng));
    p.key.push_back(uniform(model_dim, p.head_dim, rng));
    p.value.push_back(uniform(model_dim, p.head_dim, rng));
  }
  p.output = uniform(heads * p.head_dim, model_dim, rng);
  return p;
}

std::size_t MultiHeadParams::weight_count() const {
  std::size_t n = output.size();
  for (std::size_t h = 0; h < heads; ++h) n += query[h].size() + key[h].size() + value[h].size();
  return n;
}

GroupedAttention multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                                      std::span<const AttentionGroup> groups, const MultiHeadParams& p) {
  if (queries.cols() != p.model_dim || keys_values.cols() != p.model_dim)
    throw ShapeError("multi_head_attention: queries " + to_string(queries.shape()) + " and keys " +
                     to_string(keys_values.shape()) + " must have model dimension " +
                     std::to_string(p.model_dim));
  std::vector<std::size_t> order;  // query rows in group order
  for (const auto& g : groups) {
    if (g.kv_begin >= g.kv_end || g.kv_end > keys_values.rows())
      throw ShapeError("multi_head_attention: invalid key/value range");
    order.insert(order.end(), g.query_rows.begin(), g.query_rows.end());
  }
  if (order.size() != queries.rows())
    throw ShapeError("multi_head_attention: groups must cover every query row exactly once");
  std::vector<std::size_t> inverse(order.size(), order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= order.size() || inverse[order[i]] != order.size())
      throw ShapeError("multi_head_attention: groups must cover every query row exactly once");
    inverse[order[i]] = i;
  }
  bool identity_order = true;
  for (std::size_t i = 0; i < order.size(); ++i) identity_order = identity_order && order[i] == i;

  GroupedAttention out;
  out.weights.resize(groups.size());
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Tensor q = matmul(queries, p.query[h]);
    const Tensor k = matmul(keys_values, p.key[h]);
    const Tensor v = matmul(keys_values, p.value[h]);
    std::vector<Tensor> parts;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& g = groups[gi];
      const bool all_kv = g.kv_begin == 0 && g.kv_end == keys_values.rows();
      const Tensor gq = groups.size() == 1 && identity_order ? q : gather_rows(q, g.query_rows);
      const Tensor gk = all_kv ? k : slice(k, 0, g.kv_begin, g.kv_end);
      const Tensor gv = all_kv ? v : slice(v, 0, g.kv_begin, g.kv_end);
      AttentionResult r = scaled_dot_attention(gq, gk, gv);
      out.weights[gi].push_back(r.weights);
      parts.push_back(r.output);
    }
    const Tensor grouped = parts.size() == 1 ? parts[0] : concat(parts, 0);
    heads.push_back(identity_order ? grouped : gather_rows(grouped, inverse));
  }
  const Tensor joined = heads.size() == 1 ? heads[0] : concat(heads, 1);
  out.output = matmul(joined, p.output);
  return out;
}

MultiHeadResult multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                                     const MultiHeadParams& params) {
  AttentionGroup all;
  for (std::size_t i = 0; i < queries.rows(); ++i) all.query_rows.push_back(i);
  all.kv_begin = 0;
  all.kv_end = keys_values.rows();
  GroupedAttention g = multi_head_attention(queries, keys_values, std::span(&all, 1), params);
  return {g.output, std::move(g.weights[0])};
}

FusionParams FusionParams::init(std::size_t model_dim, std::size_t heads, std::size_t context_dim, Rng& rng) {
  if (context_dim == 0 || context_dim >= model_dim)
    throw std::invalid_argument("fusion: context dimension " + std::to_string(context_dim) +
                                " must be positive and below the model dimension " + std::to_string(model_dim));
  FusionParams p;
  p.attention = MultiHeadParams::init(model_dim, heads, rng);
  p.w_reduce = uniform(2 * model_dim, context_dim, rng);
  p.b_reduce = Tensor::zeros(1, context_dim, true);
  return p;
}

FusedContext fuse(const EncoderOutput& instructions, const EncoderOutput& graphs,
                  std::span<const std::size_t> graph_of, const FusionParams& params) {
  if (instructions.sequences() == 0 || graphs.sequences() == 0)
    throw ShapeError("fuse: empty encoder output");
  if (graph_of.size() != instructions.sequences())
    throw ShapeError("fuse: need one graph index per instruction sequence");
  if (instructions.states.cols() != graphs.states.cols())
    throw ShapeError("fuse: instruction states " + to_string(instructions.states.shape()) +
                     " and graph states " + to_string(graphs.states.shape()) + " differ in width");

  std::vector<AttentionGroup> groups;
  std::vector<std::size_t> group_of_graph(graphs.sequences(), SIZE_MAX);
  for (std::size_t i = 0; i < graph_of.size(); ++i) {
    const std::size_t g = graph_of[i];
    if (g >= graphs.sequences()) throw ShapeError("fuse: graph index out of range");
    if (group_of_graph[g] == SIZE_MAX) {
      group_of_graph[g] = groups.size();
      AttentionGroup ag;
      ag.kv_begin = graphs.offsets[g];
      ag.kv_end = graphs.offsets[g] + graphs.lengths[g];
      groups.push_back(std::move(ag));
    }
    auto& rows = groups[group_of_graph[g]].query_rows;
    for (std::size_t t = 0; t < instructions.lengths[i]; ++t) rows.push_back(instructions.offsets[i] + t);
  }

  GroupedAttention attended = multi_head_attention(instructions.states, graphs.states, groups, params.attention);
  FusedContext out;
  out.context = tanh(add(matmul(concat({attended.output, instructions.states}, 1), params.w_reduce),
                         params.b_reduce));
  out.offsets = instructions.offsets;
  out.lengths = instructions.lengths;
  out.attention = std::move(attended.weights);
  return out;
}

FusedContext fuse(const EncoderOutput& instruction, const EncoderOutput& graph, const FusionParams& params) {
  std::vector<std::size_t> graph_of(instruction.sequences(), 0);
  return fuse(instruction, graph, graph_of, params);
}

}  // namespace navtrans
