#include <doctest.h>

#include <cmath>
#include <cstring>

#include "navtrans/tensor.hpp"
#include "navtrans/tensor_archive.hpp"
#include "support.hpp"

using namespace navtrans;
using namespace navtrans::ad;
using testing::finite_difference_error;
using testing::probe;
using testing::random_tensor;

TEST_CASE("primitive fixed points") {
  const Tensor s = softmax(Tensor::row({0.0, 0.0}), 1);
  CHECK(s.at(0, 0) == doctest::Approx(0.5));
  CHECK(s.at(0, 1) == doctest::Approx(0.5));
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);

  Rng rng(3);
  const Tensor x = random_tensor(rng, 2, 5, false);
  const Tensor y = matmul(Tensor::identity(2), x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("shape mismatch names primitive and both shapes") {
  const Tensor a = Tensor::zeros(2, 3);
  const Tensor b = Tensor::zeros(2, 3);
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS((void)add(Tensor::zeros(2, 3), Tensor::zeros(3, 2)), ShapeError);
  CHECK_THROWS_AS((void)concat({Tensor::zeros(2, 3), Tensor::zeros(3, 2)}, 0), ShapeError);
  CHECK_THROWS_AS((void)slice(Tensor::zeros(2, 3), 1, 2, 4), ShapeError);
  CHECK_THROWS_AS((void)gather_rows(Tensor::zeros(2, 3), std::vector<std::size_t>{2}), ShapeError);
  CHECK_THROWS_AS(Tensor::from(2, 2, {1.0, 2.0}), ShapeError);
}

TEST_CASE("backward on simple losses") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6}, true);
  tape.backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor v = Tensor::row({1, 2, 3}, true);
  Tensor loss = sum(mul(v, v));
  tape.backward(loss);
  CHECK(v.grad() == std::vector<double>{2, 4, 6});

  // repeated calls accumulate into leaves
  tape.backward(loss);
  CHECK(v.grad() == std::vector<double>{4, 8, 12});
}

TEST_CASE("backward preconditions") {
  Tape empty;
  CHECK_THROWS((void)empty.backward(Tensor::scalar(1.0)));

  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::row({1, 2}, true);
  Tensor y = scale(x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(3.0)), std::invalid_argument);
}

TEST_CASE("no records without grad or tape") {
  Tape tape;
  {
    TapeScope scope(tape);
    (void)add(Tensor::zeros(2, 2), Tensor::zeros(2, 2));
    CHECK(tape.empty());
    Tensor p = Tensor::zeros(2, 2, true);
    (void)add(p, Tensor::zeros(2, 2));
    CHECK(tape.size() == 1);
  }
  Tensor p = Tensor::zeros(2, 2, true);
  Tensor q = add(p, p);
  CHECK_FALSE(q.requires_grad());
  CHECK(tape.size() == 1);
}

TEST_CASE("tape records are in topological order") {
  Tape tape;
  TapeScope scope(tape);
  Rng rng(5);
  Tensor a = random_tensor(rng, 3, 4);
  Tensor b = random_tensor(rng, 4, 2);
  Tensor loss = sum(tanh(matmul(a, b)));
  (void)loss;
  std::vector<std::uint64_t> produced = {a.id(), b.id()};
  for (const auto& r : tape.records()) {
    for (auto in : r.inputs)
      CHECK(std::find(produced.begin(), produced.end(), in) != produced.end());
    produced.push_back(r.output);
  }
}

TEST_CASE("every primitive matches central finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor a = random_tensor(rng, 3, 4);
    Tensor b = random_tensor(rng, 4, 2);
    Tensor c = random_tensor(rng, 3, 4);
    Tensor row = random_tensor(rng, 1, 4);
    Tensor col = random_tensor(rng, 3, 1);
    Tensor pos = random_tensor(rng, 3, 4, true, 0.5, 2.0);
    std::vector<std::size_t> idx = {2, 0, 2, 1};
    INFO("seed " << seed);
    CHECK(finite_difference_error([&] { return probe(matmul(a, b)); }, {a, b}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(add(a, row)); }, {a, row}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(sub(col, c)); }, {col, c}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(mul(a, c)); }, {a, c}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(mul(a, col)); }, {a, col}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(sigmoid(a)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(tanh(a)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(softmax(a, 0)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(softmax(a, 1)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(log_softmax(a, 1)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(concat({a, c}, 0)); }, {a, c}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(concat({a, col}, 1)); }, {a, col}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(slice(a, 1, 1, 3)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(transpose(a)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(scale(a, -1.7)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(gather_rows(a, idx)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(log(pos)); }, {pos}) < 1e-4);
    CHECK(finite_difference_error([&] { return sum(mul(a, a)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(sum(a, 0)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(sum(a, 1)); }, {a}) < 1e-4);
    CHECK(finite_difference_error([&] { return mean(mul(a, c)); }, {a, c}) < 1e-4);
    CHECK(finite_difference_error([&] { return probe(reshape(a, 6, 2)); }, {a}) < 1e-4);
  }
}

TEST_CASE("cross-entropy through softmax matches finite differences") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    Rng rng(seed);
    Tensor logits = random_tensor(rng, 4, 5);
    const std::vector<std::size_t> gold = {0, 3, 2, 4};
    std::vector<double> onehot(20, 0.0);
    for (std::size_t i = 0; i < 4; ++i) onehot[i * 5 + gold[i]] = 1.0;
    const Tensor mask = Tensor::from(4, 5, onehot);
    auto loss = [&] { return scale(sum(mul(log(softmax(logits, 1)), mask)), -0.25); };
    CHECK(finite_difference_error(loss, {logits}) < 1e-4);
  }
}

TEST_CASE("grad_check agrees with the independent oracle") {
  Rng rng(21);
  Tensor x = random_tensor(rng, 3, 3);
  std::vector<Tensor> inputs = {x};
  const auto r = grad_check([&] { return sum(x); }, inputs, 1e-5, 1e-4);
  CHECK(r.pass);
  CHECK(r.max_rel_error < 1e-9);
  CHECK(r.checked == 9);

  Tensor w = random_tensor(rng, 3, 2);
  inputs = {x, w};
  auto f = [&] { return probe(tanh(matmul(x, w))); };
  const auto r2 = grad_check(f, inputs, 1e-5, 1e-4);
  CHECK(r2.pass);
  CHECK(r2.max_rel_error == doctest::Approx(finite_difference_error(f, {x, w})).epsilon(1e-6));
}

TEST_CASE("grad_check reports non-finite entries") {
  Tensor x = Tensor::row({1.0, 0.0}, true);
  std::vector<Tensor> inputs = {x};
  const auto r = grad_check([&] { return sum(log(x)); }, inputs, 1e-5, 1e-4);
  CHECK_FALSE(r.pass);
  CHECK_FALSE(r.non_finite.empty());
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(rng, 4, 7, false, -30.0, 30.0);
    for (int axis : {0, 1}) {
      const Tensor y = softmax(x, axis);
      const std::size_t lanes = axis == 1 ? 4 : 7;
      for (std::size_t l = 0; l < lanes; ++l) {
        double total = 0.0;
        for (std::size_t k = 0; k < (axis == 1 ? 7u : 4u); ++k) {
          const double v = axis == 1 ? y.at(l, k) : y.at(k, l);
          CHECK(v >= 0.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);
      }
    }
  }
}

TEST_CASE("concat then complementary slices is the identity") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r1 = 1 + rng.index(4), r2 = 1 + rng.index(4), c = 1 + rng.index(5);
    const Tensor a = random_tensor(rng, r1, c, false);
    const Tensor b = random_tensor(rng, r2, c, false);
    const Tensor ab = concat({a, b}, 0);
    const Tensor a2 = slice(ab, 0, 0, r1);
    const Tensor b2 = slice(ab, 0, r1, r1 + r2);
    CHECK(std::equal(a.data().begin(), a.data().end(), a2.data().begin()));
    CHECK(std::equal(b.data().begin(), b.data().end(), b2.data().begin()));
    const Tensor at = transpose(a), bt = transpose(b);
    const Tensor side = concat({at, bt}, 1);
    const Tensor left = slice(side, 1, 0, r1);
    CHECK(std::equal(at.data().begin(), at.data().end(), left.data().begin()));
  }
}

TEST_CASE("backward is bitwise deterministic") {
  auto run = [] {
    Rng rng(77);
    Tensor a = random_tensor(rng, 5, 6);
    Tensor b = random_tensor(rng, 6, 3);
    Tape tape;
    TapeScope scope(tape);
    tape.backward(probe(softmax(tanh(matmul(a, b)), 1)));
    auto g = a.grad();
    auto gb = b.grad();
    g.insert(g.end(), gb.begin(), gb.end());
    return g;
  };
  const auto g1 = run();
  const auto g2 = run();
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("shadow tensors share values but not gradients") {
  Tensor p = Tensor::row({1.0, 2.0}, true);
  Tensor s = p.shadow();
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(mul(s, s)));
  CHECK(s.grad() == std::vector<double>{2, 4});
  CHECK(p.grad() == std::vector<double>{0, 0});
  p.mutable_data()[0] = 5.0;
  CHECK(s.data()[0] == 5.0);
}

TEST_CASE("tensor archive round trip and corruption") {
  Rng rng(4);
  TensorArchive a;
  a.metadata = R"({"epoch":3})";
  a.tensors["w"] = random_tensor(rng, 3, 2, false);
  a.tensors["b"] = random_tensor(rng, 1, 2, false);
  const std::string bytes = encode_archive(a);
  CHECK(bytes.substr(0, 4) == "NVTA");
  const TensorArchive b = decode_archive(bytes);
  CHECK(b.metadata == a.metadata);
  REQUIRE(b.tensors.size() == 2);
  CHECK(b.tensors.at("w").shape() == Shape{3, 2});
  CHECK(encode_archive(b) == bytes);
  CHECK_THROWS_AS(decode_archive(bytes.substr(0, bytes.size() - 3)), ArchiveError);
  std::string bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_archive(bad), ArchiveError);
}
