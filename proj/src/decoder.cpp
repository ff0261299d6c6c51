#include "navtrans/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace navtrans {

using namespace ad;

namespace {

constexpr double kMasked = -1e30;

Tensor uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(rows, cols, std::move(v), true);
}

double fan_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

DecoderParams DecoderParams::init(std::size_t behaviors, std::size_t node_capacity, std::size_t embed_dim,
                                  std::size_t context_dim, std::size_t hidden, std::size_t attention_dim,
                                  Rng& rng) {
  DecoderParams p;
  p.behaviors = behaviors;
  std::vector<double> e((behaviors + 2) * embed_dim);
  for (auto& x : e) x = 0.1 * rng.normal();
  p.embedding = Tensor::from(behaviors + 2, embed_dim, std::move(e), true);
  p.gru = GruParams::init(embed_dim + context_dim, hidden, rng);
  p.attn_context = uniform(context_dim, attention_dim, fan_bound(context_dim, attention_dim), rng);
  p.attn_hidden = uniform(hidden, attention_dim, fan_bound(hidden, attention_dim), rng);
  p.attn_bias = Tensor::zeros(1, attention_dim, true);
  p.attn_score = uniform(attention_dim, 1, fan_bound(attention_dim, 1), rng);
  p.w_out = uniform(hidden, behaviors + 1, fan_bound(hidden, behaviors + 1), rng);
  p.b_out = Tensor::zeros(1, behaviors + 1, true);
  std::vector<double> s(node_capacity * hidden);
  for (auto& x : s) x = 0.1 * rng.normal();
  p.start_embedding = Tensor::from(node_capacity, hidden, std::move(s), true);
  return p;
}

DecodeState init_state(std::span<const std::size_t> start_nodes, const DecoderParams& params) {
  for (auto n : start_nodes)
    if (n >= params.node_capacity())
      throw UnknownStartNode("decoder: start node " + std::to_string(n) + " outside node capacity " +
                             std::to_string(params.node_capacity()));
  DecodeState s;
  s.hidden = gather_rows(params.start_embedding, start_nodes);
  s.last.assign(start_nodes.size(), params.start_token());
  return s;
}

DecodeState init_state(std::size_t start_node, const DecoderParams& params) {
  return init_state(std::span<const std::size_t>(&start_node, 1), params);
}

PreparedContext prepare_context(const FusedContext& c, const DecoderParams& params) {
  if (c.sequences() == 0) throw ShapeError("decoder: empty context");
  if (c.context.cols() != params.attn_context.rows())
    throw ShapeError("decoder: context " + to_string(c.context.shape()) + " does not match attention input " +
                     std::to_string(params.attn_context.rows()));
  PreparedContext p;
  p.context = c.context;
  p.projected = add(matmul(c.context, params.attn_context), params.attn_bias);
  p.lengths = c.lengths;
  p.max_length = *std::max_element(c.lengths.begin(), c.lengths.end());
  const std::size_t batch = c.sequences();
  const std::size_t rows = c.context.rows();
  std::vector<double> owner(batch * rows, 0.0);
  std::vector<double> mask(batch * p.max_length, 0.0);
  p.padded_src.assign(batch * p.max_length, 0);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t t = 0; t < p.max_length; ++t) {
      const std::size_t cell = i * p.max_length + t;
      if (t < c.lengths[i]) {
        const std::size_t row = c.offsets[i] + t;
        owner[i * rows + row] = 1.0;
        p.row_owner.push_back(i);
        p.flat_cell.push_back(cell);
        p.padded_src[cell] = row;
      } else {
        mask[cell] = kMasked;
        p.padded_src[cell] = c.offsets[i];
      }
    }
  }
  // row_owner and flat_cell were filled in padded order, which matches the
  // sequence-major row order because offsets are increasing.
  p.owner = Tensor::from(batch, rows, std::move(owner));
  p.mask = Tensor::from(batch, p.max_length, std::move(mask));
  return p;
}

StepOutput decode_step(const DecodeState& state, const PreparedContext& c, const DecoderParams& params) {
  if (state.batch() != c.batch()) throw ShapeError("decode_step: state and context batch sizes differ");
  const std::size_t batch = state.batch();

  const Tensor hq = matmul(state.hidden, params.attn_hidden);
  const Tensor energy = tanh(add(c.projected, gather_rows(hq, c.row_owner)));
  const Tensor scores = matmul(energy, params.attn_score);  // sum(L) x 1
  const Tensor padded = add(reshape(gather_rows(scores, c.padded_src), batch, c.max_length), c.mask);
  const Tensor alpha = softmax(padded, 1);
  const Tensor alpha_rows = gather_rows(reshape(alpha, batch * c.max_length, 1), c.flat_cell);
  const Tensor attended = matmul(c.owner, mul(c.context, alpha_rows));  // batch x d_ctx

  const Tensor input = concat({gather_rows(params.embedding, state.last), attended}, 1);
  StepOutput out;
  out.state.hidden = gru_cell(input, state.hidden, params.gru);
  out.state.last = state.last;
  out.state.step = state.step + 1;
  out.logits = add(matmul(out.state.hidden, params.w_out), params.b_out);
  out.attention = alpha;
  return out;
}

void feed_tokens(DecodeState& state, std::span<const std::size_t> tokens) {
  if (tokens.size() != state.batch()) throw ShapeError("feed_tokens: batch size mismatch");
  state.last.assign(tokens.begin(), tokens.end());
}

std::vector<DecodeResult> greedy_decode(std::span<const std::size_t> start_nodes, const FusedContext& context,
                                        const DecoderParams& params, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("greedy_decode: max_len must be at least 1");
  NoGradScope no_grad;
  const PreparedContext prepared = prepare_context(context, params);
  DecodeState state = init_state(start_nodes, params);
  const std::size_t batch = state.batch();
  std::vector<DecodeResult> results(batch);
  std::vector<bool> done(batch, false);
  std::size_t remaining = batch;
  for (std::size_t step = 0; step < max_len && remaining > 0; ++step) {
    StepOutput out = decode_step(state, prepared, params);
    std::vector<std::size_t> chosen(batch, params.end_token());
    const std::size_t width = out.logits.cols();
    const auto logits = out.logits.data();
    for (std::size_t i = 0; i < batch; ++i) {
      if (done[i]) continue;
      const auto row = logits.subspan(i * width, width);
      const std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      chosen[i] = best;
      if (best == params.end_token()) {
        done[i] = true;
        --remaining;
      } else {
        results[i].plan.push_back(behavior_at(best));
      }
    }
    state = std::move(out.state);
    feed_tokens(state, chosen);
  }
  for (std::size_t i = 0; i < batch; ++i) results[i].truncated = !done[i];
  return results;
}

std::vector<Tensor> teacher_forced_logits(std::span<const std::size_t> start_nodes, std::span<const Plan> targets,
                                          const FusedContext& context, const DecoderParams& params) {
  if (targets.size() != start_nodes.size())
    throw ShapeError("teacher_forced_logits: one target per start node required");
  std::size_t steps = 0;
  for (const auto& t : targets) {
    for (auto b : t)
      if (index_of(b) >= params.behaviors)
        throw ShapeError("teacher_forced_logits: behavior id outside the decoder vocabulary");
    steps = std::max(steps, t.size() + 1);
  }
  const PreparedContext prepared = prepare_context(context, params);
  DecodeState state = init_state(start_nodes, params);
  std::vector<Tensor> logits;
  std::vector<std::size_t> gold(targets.size());
  for (std::size_t t = 0; t < steps; ++t) {
    StepOutput out = decode_step(state, prepared, params);
    logits.push_back(out.logits);
    for (std::size_t i = 0; i < targets.size(); ++i)
      gold[i] = t < targets[i].size() ? index_of(targets[i][t]) : params.end_token();
    state = std::move(out.state);
    feed_tokens(state, gold);
  }
  return logits;
}

Tensor sequence_cross_entropy(std::span<const Tensor> logits, std::span<const Plan> targets,
                              std::size_t end_token) {
  if (logits.empty()) throw ShapeError("sequence_cross_entropy: no logits");
  std::size_t count = 0;
  Tensor total;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const Tensor& step = logits[t];
    if (step.rows() != targets.size()) throw ShapeError("sequence_cross_entropy: batch size mismatch");
    std::vector<double> pick(step.size(), 0.0);
    std::size_t here = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (t > targets[i].size()) continue;
      const std::size_t tok = t < targets[i].size() ? index_of(targets[i][t]) : end_token;
      pick[i * step.cols() + tok] = 1.0;
      ++here;
    }
    if (here == 0) continue;
    count += here;
    const Tensor term = sum(mul(log_softmax(step, 1), Tensor::from(step.rows(), step.cols(), std::move(pick))));
    total = total.defined() ? add(total, term) : term;
  }
  if (count == 0) throw ShapeError("sequence_cross_entropy: no target positions");
  return scale(total, -1.0 / static_cast<double>(count));
}

}  // namespace navtrans
