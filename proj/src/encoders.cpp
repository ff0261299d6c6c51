#include "navtrans/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace navtrans {

using namespace ad;

namespace {

Tensor uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(rows, cols, std::move(v), true);
}

// Rows of a step-major padded layout for one time step.
Tensor step_rows(const Tensor& x, std::size_t t, std::size_t batch) {
  if (x.rows() == batch) return x;
  return slice(x, 0, t * batch, (t + 1) * batch);
}

// 1 where sequence i is still active at step t.
std::optional<Tensor> step_mask(std::span<const std::size_t> lengths, std::size_t t) {
  std::vector<double> m(lengths.size());
  bool all = true;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    m[i] = t < lengths[i] ? 1.0 : 0.0;
    all = all && m[i] == 1.0;
  }
  if (all) return std::nullopt;
  return Tensor::from(lengths.size(), 1, std::move(m));
}

}  // namespace

GruParams GruParams::init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruParams p;
  p.w_input = uniform(input_dim, 3 * hidden, bound, rng);
  p.w_gates = uniform(hidden, 2 * hidden, bound, rng);
  p.w_cand = uniform(hidden, hidden, bound, rng);
  p.bias = uniform(1, 3 * hidden, bound, rng);
  return p;
}

GruParams GruParams::zeros(std::size_t input_dim, std::size_t hidden) {
  GruParams p;
  p.w_input = Tensor::zeros(input_dim, 3 * hidden, true);
  p.w_gates = Tensor::zeros(hidden, 2 * hidden, true);
  p.w_cand = Tensor::zeros(hidden, hidden, true);
  p.bias = Tensor::zeros(1, 3 * hidden, true);
  return p;
}

Tensor gru_step(const Tensor& projected, const Tensor& h, const GruParams& p) {
  const std::size_t H = p.hidden();
  if (projected.cols() != 3 * H || h.cols() != H || projected.rows() != h.rows())
    throw ShapeError("gru_step: projected input " + to_string(projected.shape()) + " and hidden " +
                     to_string(h.shape()) + " do not match hidden size " + std::to_string(H));
  const Tensor zr = sigmoid(add(slice(projected, 1, 0, 2 * H), matmul(h, p.w_gates)));
  const Tensor z = slice(zr, 1, 0, H);
  const Tensor r = slice(zr, 1, H, 2 * H);
  const Tensor cand = tanh(add(slice(projected, 1, 2 * H, 3 * H), matmul(mul(r, h), p.w_cand)));
  return add(h, mul(z, sub(cand, h)));
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p) {
  if (x.cols() != p.input_dim())
    throw ShapeError("gru_cell: input " + to_string(x.shape()) + " does not match input size " +
                     std::to_string(p.input_dim()));
  return gru_step(add(matmul(x, p.w_input), p.bias), h, p);
}

Tensor EncoderOutput::sequence_states(std::size_t i) const {
  return slice(states, 0, offsets.at(i), offsets.at(i) + lengths.at(i));
}

EncoderOutput bigru_encode_projected(const Tensor& projected_fwd, const Tensor& projected_bwd,
                                     std::span<const std::size_t> lengths, const GruParams& fwd,
                                     const GruParams& bwd) {
  if (lengths.empty()) throw ShapeError("bigru_encode: no sequences");
  const std::size_t batch = lengths.size();
  const std::size_t steps = *std::max_element(lengths.begin(), lengths.end());
  if (*std::min_element(lengths.begin(), lengths.end()) == 0)
    throw ShapeError("bigru_encode: empty sequence");
  if (projected_fwd.rows() != steps * batch || projected_bwd.rows() != steps * batch)
    throw ShapeError("bigru_encode: projection has " + std::to_string(projected_fwd.rows()) +
                     " rows, expected " + std::to_string(steps * batch));

  std::vector<std::optional<Tensor>> masks(steps);
  for (std::size_t t = 0; t < steps; ++t) masks[t] = step_mask(lengths, t);

  auto run = [&](const Tensor& proj, const GruParams& p, bool reverse) {
    std::vector<Tensor> out(steps);
    Tensor h = Tensor::zeros(batch, p.hidden());
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t t = reverse ? steps - 1 - k : k;
      const Tensor next = gru_step(step_rows(proj, t, batch), h, p);
      h = masks[t] ? add(h, mul(*masks[t], sub(next, h))) : next;
      out[t] = h;
    }
    return std::pair{out, h};
  };
  auto [fwd_states, fwd_last] = run(projected_fwd, fwd, false);
  auto [bwd_states, bwd_last] = run(projected_bwd, bwd, true);

  EncoderOutput out;
  out.lengths.assign(lengths.begin(), lengths.end());
  std::size_t offset = 0;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < batch; ++i) {
    out.offsets.push_back(offset);
    offset += lengths[i];
    for (std::size_t t = 0; t < lengths[i]; ++t) rows.push_back(t * batch + i);
  }
  const Tensor all = concat({concat(fwd_states, 0), concat(bwd_states, 0)}, 1);
  out.states = batch == 1 ? all : gather_rows(all, rows);
  out.final = concat({fwd_last, bwd_last}, 1);
  return out;
}

EncoderOutput bigru_encode(const Tensor& sequence, const GruParams& fwd, const GruParams& bwd) {
  return bigru_encode(std::span<const Tensor>(&sequence, 1), fwd, bwd);
}

EncoderOutput bigru_encode(std::span<const Tensor> sequences, const GruParams& fwd, const GruParams& bwd) {
  if (sequences.empty()) throw ShapeError("bigru_encode: no sequences");
  std::vector<std::size_t> lengths;
  for (const auto& s : sequences) lengths.push_back(s.rows());
  const std::size_t batch = sequences.size();
  const std::size_t steps = *std::max_element(lengths.begin(), lengths.end());
  Tensor stacked;
  if (batch == 1) {
    stacked = sequences[0];
  } else {
    const Tensor all = concat(sequences, 0);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (auto l : lengths) {
      offsets.push_back(off);
      off += l;
    }
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t i = 0; i < batch; ++i)
        rows.push_back(offsets[i] + std::min(t, lengths[i] - 1));  // padded steps are masked
    stacked = gather_rows(all, rows);
  }
  return bigru_encode_projected(add(matmul(stacked, fwd.w_input), fwd.bias),
                                add(matmul(stacked, bwd.w_input), bwd.bias), lengths, fwd, bwd);
}

InstructionEncoder InstructionEncoder::init(std::size_t vocab, std::size_t embed_dim, std::size_t hidden,
                                            Rng& rng) {
  InstructionEncoder e;
  std::vector<double> v(vocab * embed_dim);
  for (auto& x : v) x = 0.1 * rng.normal();
  e.embedding = Tensor::from(vocab, embed_dim, std::move(v), true);
  e.fwd = GruParams::init(embed_dim, hidden, rng);
  e.bwd = GruParams::init(embed_dim, hidden, rng);
  return e;
}

EncoderOutput encode_instructions(std::span<const std::vector<std::size_t>> token_ids,
                                  const InstructionEncoder& enc) {
  if (token_ids.empty()) throw ShapeError("encode_instructions: empty batch");
  std::vector<std::size_t> lengths;
  for (const auto& ids : token_ids) {
    if (ids.empty()) throw ShapeError("encode_instructions: empty instruction");
    lengths.push_back(ids.size());
  }
  const std::size_t batch = token_ids.size();
  const std::size_t steps = *std::max_element(lengths.begin(), lengths.end());
  std::vector<std::size_t> rows;
  rows.reserve(steps * batch);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < batch; ++i)
      rows.push_back(t < lengths[i] ? token_ids[i][t] : 0);  // PAD rows are masked out
  const Tensor embedded = gather_rows(enc.embedding, rows);
  return bigru_encode_projected(add(matmul(embedded, enc.fwd.w_input), enc.fwd.bias),
                                add(matmul(embedded, enc.bwd.w_input), enc.bwd.bias), lengths,
                                enc.fwd, enc.bwd);
}

EncoderOutput encode_instruction(const std::vector<std::size_t>& token_ids, const InstructionEncoder& enc) {
  return encode_instructions(std::span<const std::vector<std::size_t>>(&token_ids, 1), enc);
}

GraphEncoder GraphEncoder::init(std::size_t node_capacity, std::size_t behaviors, std::size_t hidden,
                                Rng& rng) {
  GraphEncoder e;
  e.node_capacity = node_capacity;
  e.behaviors = behaviors;
  const std::size_t width = 2 * node_capacity + behaviors;
  e.fwd = GruParams::init(width, hidden, rng);
  e.bwd = GruParams::init(width, hidden, rng);
  return e;
}

EncoderOutput encode_graphs(std::span<const TripletFeatures> graphs, const GraphEncoder& enc) {
  if (graphs.empty()) throw ShapeError("encode_graphs: empty batch");
  const std::size_t width = 2 * enc.node_capacity + enc.behaviors;
  std::vector<std::size_t> lengths;
  for (const auto& g : graphs) {
    if (g.width != width)
      throw ShapeError("encode_graphs: triplet width " + std::to_string(g.width) +
                       " does not match encoder width " + std::to_string(width));
    if (g.from.empty()) throw ShapeError("encode_graphs: graph without edges");
    lengths.push_back(g.from.size());
  }
  const std::size_t batch = graphs.size();
  const std::size_t steps = *std::max_element(lengths.begin(), lengths.end());
  std::vector<std::size_t> from, behavior, to;
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t k = std::min(t, lengths[i] - 1);
      from.push_back(graphs[i].from[k]);
      behavior.push_back(graphs[i].behavior[k]);
      to.push_back(graphs[i].to[k]);
    }
  auto project = [&](const GruParams& p) {
    return add(add(add(gather_rows(p.w_input, from), gather_rows(p.w_input, behavior)),
                   gather_rows(p.w_input, to)),
               p.bias);
  };
  return bigru_encode_projected(project(enc.fwd), project(enc.bwd), lengths, enc.fwd, enc.bwd);
}

EncoderOutput encode_graph(const BehaviorGraph& graph, const GraphEncoder& enc) {
  const TripletFeatures f = triplet_features(graph, enc.node_capacity);
  return encode_graphs(std::span<const TripletFeatures>(&f, 1), enc);
}

}  // namespace navtrans
