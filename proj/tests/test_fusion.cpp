#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "navtrans/fusion.hpp"
#include "support.hpp"

using namespace navtrans;
using namespace navtrans::ad;
using testing::finite_difference_error;
using testing::probe;
using testing::random_tensor;

namespace {

EncoderOutput as_output(const Tensor& states) {
  EncoderOutput o;
  o.states = states;
  o.final = slice(states, 0, states.rows() - 1, states.rows());
  o.offsets = {0};
  o.lengths = {states.rows()};
  return o;
}

EncoderOutput as_output(std::span<const Tensor> seqs) {
  EncoderOutput o;
  o.states = concat(seqs, 0);
  std::size_t off = 0;
  for (const auto& s : seqs) {
    o.offsets.push_back(off);
    o.lengths.push_back(s.rows());
    off += s.rows();
  }
  return o;
}

MultiHeadParams identity_heads(std::size_t d) {
  MultiHeadParams p;
  p.heads = 1;
  p.model_dim = p.head_dim = d;
  p.query = {Tensor::identity(d)};
  p.key = {Tensor::identity(d)};
  p.value = {Tensor::identity(d)};
  p.output = Tensor::identity(d);
  return p;
}

void check_rows_stochastic(const Tensor& w) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) {
      CHECK(w.at(r, c) >= 0.0);
      s += w.at(r, c);
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("a single key returns its value row for any query") {
  Rng rng(1);
  const Tensor q = random_tensor(rng, 4, 3, false);
  const Tensor k = random_tensor(rng, 1, 3, false);
  const Tensor v = random_tensor(rng, 1, 5, false);
  const AttentionResult r = scaled_dot_attention(q, k, v);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(r.output.at(i, j) == v.at(0, j));
}

TEST_CASE("identical keys give uniform weights and the mean value") {
  Rng rng(2);
  const Tensor q = random_tensor(rng, 3, 4, false);
  const Tensor key_row = random_tensor(rng, 1, 4, false);
  const Tensor k = gather_rows(key_row, std::vector<std::size_t>{0, 0, 0, 0, 0});
  const Tensor v = random_tensor(rng, 5, 2, false);
  const AttentionResult r = scaled_dot_attention(q, k, v);
  const Tensor mean_v = scale(sum(v, 0), 1.0 / 5.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) CHECK(r.weights.at(i, j) == doctest::Approx(0.2).epsilon(1e-14));
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(r.output.at(i, j) == doctest::Approx(mean_v.at(0, j)).epsilon(1e-13));
  }
}

TEST_CASE("attention shape errors") {
  Rng rng(3);
  CHECK_THROWS_AS(scaled_dot_attention(random_tensor(rng, 2, 3), random_tensor(rng, 4, 2), random_tensor(rng, 4, 2)),
                  ShapeError);
  CHECK_THROWS_AS(scaled_dot_attention(random_tensor(rng, 2, 3), random_tensor(rng, 4, 3), random_tensor(rng, 5, 2)),
                  ShapeError);
  CHECK_THROWS_AS(MultiHeadParams::init(10, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(MultiHeadParams::init(8, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(FusionParams::init(8, 2, 8, rng), std::invalid_argument);
}

TEST_CASE("scaled dot attention gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor q = random_tensor(rng, 3, 4);
    Tensor k = random_tensor(rng, 5, 4);
    Tensor v = random_tensor(rng, 5, 2);
    auto fn = [&] { return probe(scaled_dot_attention(q, k, v).output, seed); };
    CHECK(finite_difference_error(fn, {q, k, v}) <= 1e-4);
  }
}

TEST_CASE("attention rows are stochastic and ignore per-row logit shifts") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q = random_tensor(rng, 6, 4, false, -3, 3);
    const Tensor k = random_tensor(rng, 7, 4, false, -3, 3);
    const Tensor v = random_tensor(rng, 7, 3, false);
    const AttentionResult base = scaled_dot_attention(q, k, v);
    check_rows_stochastic(base.weights);
    // Adding u to every key adds q_i . u / sqrt(d) to all logits of row i.
    const Tensor u = random_tensor(rng, 1, 4, false, -50, 50);
    const AttentionResult shifted = scaled_dot_attention(q, add(k, u), v);
    CHECK(max_abs_diff(base.weights.data(), shifted.weights.data()) <= 1e-9);
  }
}

TEST_CASE("one head with identity projections is plain scaled dot attention") {
  Rng rng(5);
  const Tensor q = random_tensor(rng, 4, 6, false);
  const Tensor kv = random_tensor(rng, 5, 6, false);
  const MultiHeadResult mh = multi_head_attention(q, kv, identity_heads(6));
  const AttentionResult single = scaled_dot_attention(q, kv, kv);
  CHECK(std::ranges::equal(mh.output.data(), single.output.data()));
  CHECK(std::ranges::equal(mh.weights[0].data(), single.weights.data()));
}

TEST_CASE("single value row with identity output projection") {
  Rng rng(6);
  MultiHeadParams p = MultiHeadParams::init(8, 4, rng);
  p.output = Tensor::identity(8);
  const Tensor q = random_tensor(rng, 3, 8, false);
  const Tensor kv = random_tensor(rng, 1, 8, false);
  const MultiHeadResult r = multi_head_attention(q, kv, p);
  std::vector<Tensor> projected;
  for (std::size_t h = 0; h < 4; ++h) projected.push_back(matmul(kv, p.value[h]));
  const Tensor expected = concat(projected, 1);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(max_abs_diff(slice(r.output, 0, i, i + 1).data(), expected.data()) <= 1e-15);
}

TEST_CASE("four heads equal separately computed heads, concatenated and projected") {
  Rng rng(7);
  const MultiHeadParams p = MultiHeadParams::init(8, 4, rng);
  const Tensor q = random_tensor(rng, 5, 8, false);
  const Tensor kv = random_tensor(rng, 6, 8, false);
  const MultiHeadResult r = multi_head_attention(q, kv, p);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < 4; ++h) {
    const AttentionResult one =
        scaled_dot_attention(matmul(q, p.query[h]), matmul(kv, p.key[h]), matmul(kv, p.value[h]));
    heads.push_back(one.output);
    CHECK(max_abs_diff(r.weights[h].data(), one.weights.data()) <= 1e-15);
  }
  // The oracle multiplies each head by its block of the output projection.
  Tensor expected = Tensor::zeros(5, 8);
  for (std::size_t h = 0; h < 4; ++h)
    expected = add(expected, matmul(heads[h], slice(p.output, 0, 2 * h, 2 * h + 2)));
  CHECK(max_abs_diff(r.output.data(), expected.data()) <= 1e-12);
}

TEST_CASE("projection weight count") {
  Rng rng(8);
  for (std::size_t h : {1, 2, 4, 8}) {
    const MultiHeadParams p = MultiHeadParams::init(64, h, rng);
    const std::size_t dk = 64 / h;
    CHECK(p.head_dim == dk);
    CHECK(p.weight_count() == h * 3 * (64 * dk) + 64 * 64);
  }
}

TEST_CASE("multi-head and fusion gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    FusionParams p = FusionParams::init(8, 4, 4, rng);
    std::vector<Tensor> inputs;
    p.visit("f", [&](const std::string&, Tensor& t) { inputs.push_back(t); });
    Tensor instr = random_tensor(rng, 4, 8);
    Tensor graph = random_tensor(rng, 3, 8);
    inputs.push_back(instr);
    inputs.push_back(graph);
    auto mha = [&] { return probe(multi_head_attention(instr, graph, p.attention).output, seed); };
    CHECK(finite_difference_error(mha, inputs) <= 1e-4);
    auto fused = [&] { return probe(fuse(as_output(instr), as_output(graph), p).context, seed); };
    CHECK(finite_difference_error(fused, inputs) <= 1e-4);
  }
}

TEST_CASE("fused context has one vector per instruction position") {
  Rng rng(9);
  const FusionParams p = FusionParams::init(8, 2, 4, rng);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.index(12);
    const std::size_t n = 1 + rng.index(20);
    const FusedContext c =
        fuse(as_output(random_tensor(rng, m, 8, false)), as_output(random_tensor(rng, n, 8, false)), p);
    CHECK(c.context.rows() == m);
    CHECK(c.context.cols() == 4);
    REQUIRE(c.attention.size() == 1);
    REQUIRE(c.attention[0].size() == 2);
    for (const auto& w : c.attention[0]) check_rows_stochastic(w);
  }
  CHECK_THROWS_AS(fuse(as_output(random_tensor(rng, 3, 6, false)), as_output(random_tensor(rng, 2, 8, false)), p),
                  ShapeError);
}

TEST_CASE("single triplet graph contributes its value vector everywhere") {
  Rng rng(10);
  FusionParams p = FusionParams::init(4, 1, 2, rng);
  p.attention = identity_heads(4);
  const Tensor instr = random_tensor(rng, 5, 4, false);
  const Tensor triplet = random_tensor(rng, 1, 4, false);
  const MultiHeadResult r = multi_head_attention(instr, triplet, p.attention);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(std::ranges::equal(slice(r.output, 0, i, i + 1).data(), triplet.data()));
}

TEST_CASE("planted alignment is recovered by the attention weights") {
  // Graph states are one-hot; each instruction position carries a scaled
  // copy of the graph state it should attend to.
  const std::size_t d = 6;
  const std::vector<std::size_t> planted{3, 0, 5, 5, 1, 2, 4};
  const Tensor graph = Tensor::identity(d);
  std::vector<double> q(planted.size() * d, 0.0);
  for (std::size_t i = 0; i < planted.size(); ++i) q[i * d + planted[i]] = 30.0;
  const Tensor instr = Tensor::from(planted.size(), d, q);

  FusionParams p;
  p.attention = identity_heads(d);
  // Reduction keeps the attention half only, dropping the instruction half.
  std::vector<double> w(2 * d * (d - 1), 0.0);
  for (std::size_t j = 0; j + 1 < d; ++j) w[j * (d - 1) + j] = 1.0;
  p.w_reduce = Tensor::from(2 * d, d - 1, w);
  p.b_reduce = Tensor::zeros(1, d - 1);

  const FusedContext c = fuse(as_output(instr), as_output(graph), p);
  const Tensor& weights = c.attention[0][0];
  for (std::size_t i = 0; i < planted.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (weights.at(i, j) > weights.at(i, best)) best = j;
    CHECK(best == planted[i]);
    CHECK(weights.at(i, planted[i]) > 0.99);
    if (planted[i] + 1 < d) CHECK(c.context.at(i, planted[i]) == doctest::Approx(std::tanh(weights.at(i, planted[i]))));
  }
}

TEST_CASE("batched fusion equals per-sample fusion") {
  Rng rng(12);
  const FusionParams p = FusionParams::init(8, 4, 4, rng);
  const std::vector<Tensor> instrs{random_tensor(rng, 3, 8, false), random_tensor(rng, 5, 8, false),
                                   random_tensor(rng, 2, 8, false), random_tensor(rng, 4, 8, false)};
  const std::vector<Tensor> graphs{random_tensor(rng, 6, 8, false), random_tensor(rng, 2, 8, false)};
  const std::vector<std::size_t> graph_of{1, 0, 1, 0};
  const FusedContext batch = fuse(as_output(instrs), as_output(graphs), graph_of, p);
  for (std::size_t i = 0; i < instrs.size(); ++i) {
    const FusedContext one = fuse(as_output(instrs[i]), as_output(graphs[graph_of[i]]), p);
    const Tensor rows = slice(batch.context, 0, batch.offsets[i], batch.offsets[i] + batch.lengths[i]);
    CHECK(max_abs_diff(rows.data(), one.context.data()) <= 1e-14);
  }
  CHECK(batch.attention.size() == 2);
}
