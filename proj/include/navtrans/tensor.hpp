#pragma once

// Dense rank-2 tensors with tape-based reverse-mode differentiation.
//
// Every tensor is a row-major matrix of doubles; vectors are 1 x n and
// scalars are 1 x 1. Primitives append a record to the tape that is active
// on the calling thread (see TapeScope) whenever one of their inputs requires
// a gradient. Without an active tape, primitives only compute values.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace navtrans::ad {

struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<double>> value;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::uint64_t id = 0;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor filled(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  std::size_t size() const { return shape().size(); }
  std::uint64_t id() const;

  std::span<const double> data() const;
  // Writable view of the values. Only leaves should be mutated (optimizer,
  // initialisation, finite-difference probes).
  std::span<double> mutable_data();
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  // Gradient buffer; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // A new leaf sharing this tensor's values but owning a separate gradient
  // buffer. Lets several tapes differentiate against one parameter set.
  Tensor shadow() const;
  // Deep copy of the values into an independent leaf.
  Tensor clone(bool requires_grad) const;

  detail::Node& node() const;
  std::shared_ptr<detail::Node> node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  friend Tensor make_result(Shape, std::vector<double>, bool);

  std::shared_ptr<detail::Node> node_;
};

enum class Op : std::uint8_t {
  MatMul,
  Add,
  Sub,
  Mul,
  Sigmoid,
  Tanh,
  Softmax,
  LogSoftmax,
  Concat,
  Slice,
  Transpose,
  Scale,
  GatherRows,
  Log,
  Sum,
  Mean,
  Reshape,
};

const char* op_name(Op op);

struct TapeRecord {
  Op op;
  std::vector<std::uint64_t> inputs;
  std::uint64_t output;
  std::function<void()> backward;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Op op, std::vector<std::uint64_t> inputs, const Tensor& output,
              std::function<void()> backward);
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<TapeRecord>& records() const { return records_; }

  // Accumulates d(loss)/d(leaf) into every requires-grad leaf reached from
  // loss. Intermediate gradients are reset on each call, leaf gradients are
  // not, so repeated calls accumulate.
  void backward(const Tensor& loss);

 private:
  std::vector<TapeRecord> records_;
  std::vector<std::shared_ptr<detail::Node>> outputs_;
};

// Makes a tape the active one on this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Suspends recording on this thread (evaluation, finite differences).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// ---- primitives -------------------------------------------------------------
//
// Shape rules:
//   matmul      (m x k) * (k x n) -> m x n
//   add/sub/mul elementwise; either operand may broadcast along a dimension of
//               extent 1 (row vector, column vector or scalar)
//   softmax     normalises along axis 0 (columns) or 1 (rows)
//   concat      along axis 0 stacks rows, along axis 1 stacks columns
//   slice       [begin, end) along the given axis
//   gather_rows table (v x d), indices in [0, v) -> len(indices) x d
//   sum/mean    full reduction -> 1 x 1; sum(x, axis) keeps the other axis

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor transpose(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);
Tensor log(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, std::size_t rows, std::size_t cols);

// ---- verification -----------------------------------------------------------

struct NonFiniteEntry {
  std::size_t input;
  std::size_t element;
  std::string what;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  std::size_t checked = 0;
  bool pass = false;
  std::vector<NonFiniteEntry> non_finite;
};

using ScalarFunction = std::function<Tensor()>;

// Compares tape gradients of f against central finite differences for every
// element of every input. f must read the inputs through the same tensor
// handles passed here. Relative error is |a - n| / max(|a|, |n|, floor)
// with floor = 1e-3, so entries with vanishing gradient are judged
// absolutely.
GradCheckReport grad_check(const ScalarFunction& f, std::span<const Tensor> inputs, double step,
                           double tol);

}  // namespace navtrans::ad
