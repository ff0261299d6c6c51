#pragma once

// Test-only helpers: random tensors and an independent central-difference
// oracle (kept separate from ad::grad_check so that one can be checked
// against the other).

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "navtrans/rng.hpp"
#include "navtrans/tensor.hpp"

namespace testing {

using navtrans::Rng;
using navtrans::ad::Tensor;

inline Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, bool requires_grad = true,
                            double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(rows, cols, std::move(v), requires_grad);
}

// Max over all elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
inline double finite_difference_error(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                      double step = 1e-5) {
  for (auto& x : inputs) x.zero_grad();
  {
    navtrans::ad::Tape tape;
    navtrans::ad::TapeScope scope(tape);
    tape.backward(f());
  }
  double worst = 0.0;
  navtrans::ad::NoGradScope off;
  for (auto& x : inputs) {
    const std::vector<double> analytic = x.grad();
    auto v = x.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + step;
      const double up = f().item();
      v[i] = keep - step;
      const double down = f().item();
      v[i] = keep;
      const double numeric = (up - down) / (2 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

// Weighted sum with fixed random weights: a scalar whose gradient exercises
// every output element differently.
inline Tensor probe(const Tensor& out, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = random_tensor(rng, out.rows(), out.cols(), false);
  return navtrans::ad::sum(navtrans::ad::mul(out, w));
}

}  // namespace testing
