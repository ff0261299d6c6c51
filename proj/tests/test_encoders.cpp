#include <doctest.h>

#include <algorithm>

#include "navtrans/encoders.hpp"
#include "support.hpp"

using namespace navtrans;
using namespace navtrans::ad;
using testing::finite_difference_error;
using testing::probe;
using testing::random_tensor;

namespace {

GruParams random_gru(Rng& rng, std::size_t d, std::size_t h, double lo = -1.0, double hi = 1.0) {
  GruParams p;
  p.w_input = random_tensor(rng, d, 3 * h, true, lo, hi);
  p.w_gates = random_tensor(rng, h, 2 * h, true, lo, hi);
  p.w_cand = random_tensor(rng, h, h, true, lo, hi);
  p.bias = random_tensor(rng, 1, 3 * h, true, lo, hi);
  return p;
}

std::vector<Tensor> params_of(GruParams& p) {
  std::vector<Tensor> out;
  p.visit("p", [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

void check_close(std::span<const double> a, std::span<const double> b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol));
}

BehaviorGraph three_edge_graph() {
  return BehaviorGraph({"a", "b", "c"}, {"go", "back"},
                       {{node_at(0), behavior_at(0), node_at(1)},
                        {node_at(1), behavior_at(0), node_at(2)},
                        {node_at(2), behavior_at(1), node_at(0)}});
}

}  // namespace

TEST_CASE("gru with all-zero parameters halves the hidden state") {
  const GruParams p = GruParams::zeros(4, 3);
  const Tensor x = Tensor::row({0.3, -1.0, 2.0, 0.5});
  const Tensor h = Tensor::row({1.0, -2.0, 0.4});
  // z = r = 0.5 and the candidate is tanh(0) = 0.
  const Tensor out = gru_cell(x, h, p);
  check_close(out.data(), std::vector{0.5, -1.0, 0.2}, 1e-15);
}

TEST_CASE("saturated update gate keeps or replaces the state") {
  GruParams p = GruParams::zeros(2, 2);
  const Tensor x = Tensor::row({0.0, 0.0});
  const Tensor h = Tensor::row({0.7, -0.3});
  auto bias = p.bias.mutable_data();
  SUBCASE("closed gate") {
    bias[0] = bias[1] = -60.0;
    check_close(gru_cell(x, h, p).data(), h.data(), 1e-12);
  }
  SUBCASE("open gate") {
    bias[0] = bias[1] = 60.0;
    bias[4] = 0.25;
    bias[5] = -0.5;
    check_close(gru_cell(x, h, p).data(), std::vector{std::tanh(0.25), std::tanh(-0.5)}, 1e-12);
  }
}

TEST_CASE("gru output lies between the old state and the candidate") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    GruParams p = random_gru(rng, 5, 4);
    const Tensor x = random_tensor(rng, 1, 5, false);
    const Tensor h = random_tensor(rng, 1, 4, false);
    const Tensor out = gru_cell(x, h, p);
    for (std::size_t j = 0; j < 4; ++j) {
      const double o = out.data()[j];
      const double lo = std::min(h.data()[j], -1.0);
      const double hi = std::max(h.data()[j], 1.0);
      CHECK(o >= lo);
      CHECK(o <= hi);
    }
  }
}

TEST_CASE("gru cell gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    GruParams p = random_gru(rng, 8, 4);
    Tensor x = random_tensor(rng, 2, 8);
    Tensor h = random_tensor(rng, 2, 4);
    auto inputs = params_of(p);
    inputs.push_back(x);
    inputs.push_back(h);
    CHECK(finite_difference_error([&] { return probe(gru_cell(x, h, p), seed); }, inputs) <= 1e-4);
  }
}

TEST_CASE("bi-gru of a length-1 sequence: the state is the final vector") {
  Rng rng(5);
  GruParams f = random_gru(rng, 3, 4);
  GruParams b = random_gru(rng, 3, 4);
  const EncoderOutput out = bigru_encode(random_tensor(rng, 1, 3, false), f, b);
  REQUIRE(out.states.rows() == 1);
  CHECK(out.states.cols() == 8);
  CHECK(std::ranges::equal(out.states.data(), out.final.data()));
}

TEST_CASE("reversing the sequence swaps the directions when they share weights") {
  Rng rng(11);
  GruParams p = random_gru(rng, 3, 4);
  const Tensor seq = random_tensor(rng, 5, 3, false);
  std::vector<std::size_t> rev{4, 3, 2, 1, 0};
  const Tensor reversed = gather_rows(seq, rev);
  const EncoderOutput a = bigru_encode(seq, p, p);
  const EncoderOutput b = bigru_encode(reversed, p, p);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(a.states.at(t, j) == doctest::Approx(b.states.at(4 - t, 4 + j)).epsilon(1e-14));
      CHECK(a.states.at(t, 4 + j) == doctest::Approx(b.states.at(4 - t, j)).epsilon(1e-14));
    }
}

TEST_CASE("bi-gru gradients over a length-3 sequence match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(100 + seed);
    GruParams f = random_gru(rng, 3, 4);
    GruParams b = random_gru(rng, 3, 4);
    Tensor seq = random_tensor(rng, 3, 3);
    auto inputs = params_of(f);
    for (auto& t : params_of(b)) inputs.push_back(t);
    inputs.push_back(seq);
    auto fn = [&] {
      const EncoderOutput out = bigru_encode(seq, f, b);
      return add(probe(out.states, seed), probe(out.final, seed + 1));
    };
    CHECK(finite_difference_error(fn, inputs) <= 1e-4);
  }
}

TEST_CASE("one state per position for lengths 1 to 32") {
  Rng rng(2);
  GruParams f = random_gru(rng, 2, 3);
  GruParams b = random_gru(rng, 2, 3);
  for (std::size_t len = 1; len <= 32; ++len) {
    const EncoderOutput out = bigru_encode(random_tensor(rng, len, 2, false), f, b);
    CHECK(out.states.rows() == len);
    CHECK(out.states.cols() == 6);
    CHECK(out.final.rows() == 1);
  }
}

TEST_CASE("padded batch encoding equals separate encodes") {
  Rng rng(21);
  GruParams f = random_gru(rng, 3, 4);
  GruParams b = random_gru(rng, 3, 4);
  std::vector<Tensor> seqs;
  for (std::size_t len : {4, 1, 6, 3}) seqs.push_back(random_tensor(rng, len, 3, false));
  const EncoderOutput batch = bigru_encode(seqs, f, b);
  REQUIRE(batch.sequences() == 4);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const EncoderOutput single = bigru_encode(seqs[i], f, b);
    CHECK(batch.lengths[i] == seqs[i].rows());
    check_close(batch.sequence_states(i).data(), single.states.data(), 1e-13);
    check_close(slice(batch.final, 0, i, i + 1).data(), single.final.data(), 1e-13);
  }
}

TEST_CASE("instruction batches equal single instructions") {
  Rng rng(8);
  const InstructionEncoder enc = InstructionEncoder::init(12, 5, 4, rng);
  std::vector<std::vector<std::size_t>> ids{{4, 5, 6}, {7}, {8, 9, 10, 11, 4}};
  const EncoderOutput batch = encode_instructions(ids, enc);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const EncoderOutput single = encode_instruction(ids[i], enc);
    check_close(batch.sequence_states(i).data(), single.states.data(), 1e-13);
  }
  CHECK_THROWS_AS(encode_instruction({}, enc), ShapeError);
  CHECK_THROWS_AS(encode_instruction({12}, enc), ShapeError);
}

TEST_CASE("gathered triplet projection equals the dense one-hot product") {
  Rng rng(4);
  const BehaviorGraph g = three_edge_graph();
  const GraphEncoder enc = GraphEncoder::init(5, 2, 4, rng);
  const EncoderOutput fast = encode_graph(g, enc);
  const Tensor onehot = encode_triplets(g, 5);
  const EncoderOutput dense = bigru_encode(onehot, enc.fwd, enc.bwd);
  check_close(fast.states.data(), dense.states.data(), 1e-13);
  check_close(fast.final.data(), dense.final.data(), 1e-13);
}

TEST_CASE("graph encoder gradients match finite differences") {
  const BehaviorGraph g = three_edge_graph();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    GraphEncoder enc = GraphEncoder::init(3, 2, 4, rng);
    std::vector<Tensor> inputs;
    enc.visit("g", [&](const std::string&, Tensor& t) { inputs.push_back(t); });
    auto fn = [&] { return probe(encode_graph(g, enc).states, seed); };
    CHECK(finite_difference_error(fn, inputs) <= 1e-4);
  }
}

TEST_CASE("graph encoding depends on node identities") {
  Rng rng(6);
  const GraphEncoder enc = GraphEncoder::init(3, 2, 4, rng);
  const BehaviorGraph g = three_edge_graph();
  // Same structure with nodes a and b swapped.
  const BehaviorGraph swapped({"a", "b", "c"}, {"go", "back"},
                              {{node_at(1), behavior_at(0), node_at(0)},
                               {node_at(0), behavior_at(0), node_at(2)},
                               {node_at(2), behavior_at(1), node_at(1)}});
  const Tensor ta = encode_graph(g, enc).final;
  const Tensor tb = encode_graph(swapped, enc).final;
  const auto a = ta.data();
  const auto b = tb.data();
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  CHECK(diff > 1e-6);
}
