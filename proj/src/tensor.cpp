#include "navtrans/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

namespace navtrans::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_id{1};

using NodePtr = std::shared_ptr<detail::Node>;

[[noreturn]] void shape_error(Op op, const Shape& a, const Shape& b, const char* detail) {
  std::ostringstream os;
  os << op_name(op) << ": incompatible shapes " << to_string(a) << " and " << to_string(b);
  if (detail != nullptr && *detail != '\0') os << " (" << detail << ")";
  throw ShapeError(os.str());
}

[[noreturn]] void shape_error(Op op, const Shape& a, const char* detail) {
  std::ostringstream os;
  os << op_name(op) << ": invalid shape " << to_string(a) << " (" << detail << ")";
  throw ShapeError(os.str());
}

void ensure_grad(detail::Node& n) {
  if (n.grad.size() != n.shape.size()) n.grad.assign(n.shape.size(), 0.0);
}

bool any_requires_grad(std::initializer_list<const Tensor*> xs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : xs)
    if (t->requires_grad()) return true;
  return false;
}


using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMatrix>;
using View = Eigen::Map<RowMatrix>;

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  View(c, m, n).noalias() += ConstView(a, m, k) * ConstView(b, k, n);
}

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  View(c, m, k).noalias() += ConstView(a, m, n) * ConstView(b, k, n).transpose();
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  View(c, k, n).noalias() += ConstView(a, m, k).transpose() * ConstView(b, m, n);
}

Shape broadcast_shape(Op op, const Shape& a, const Shape& b) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    shape_error(op, a, b, "dimensions must match or be 1");
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

// Strided view used by the broadcasting kernels.
struct Bcast {
  std::size_t row_stride;
  std::size_t col_stride;
  Bcast(const Shape& s) : row_stride(s.rows == 1 ? 0 : s.cols), col_stride(s.cols == 1 ? 0 : 1) {}
  std::size_t at(std::size_t i, std::size_t j) const { return i * row_stride + j * col_stride; }
};

}  // namespace

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

const char* op_name(Op op) {
  switch (op) {
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Transpose: return "transpose";
    case Op::Scale: return "scale";
    case Op::GatherRows: return "gather_rows";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Reshape: return "reshape";
  }
  return "unknown";
}

// ---- Tensor -----------------------------------------------------------------

Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->value = std::make_shared<std::vector<double>>(std::move(values));
  n->requires_grad = requires_grad;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return filled(rows, cols, 0.0, requires_grad);
}

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
  if (rows == 0 || cols == 0) throw ShapeError("tensor extents must be positive");
  return make_result({rows, cols}, std::vector<double>(rows * cols, value), requires_grad);
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  if (rows == 0 || cols == 0) throw ShapeError("tensor extents must be positive");
  if (values.size() != rows * cols)
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + to_string(Shape{rows, cols}));
  return make_result({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return make_result({1, 1}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from(1, n, std::move(values), requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from(n, n, std::move(v));
}

detail::Node& Tensor::node() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }
std::uint64_t Tensor::id() const { return node().id; }
std::span<const double> Tensor::data() const { return *node().value; }
std::span<double> Tensor::mutable_data() { return *node().value; }

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& n = node();
  if (r >= n.shape.rows || c >= n.shape.cols) throw std::out_of_range("tensor index out of range");
  return (*n.value)[r * n.shape.cols + c];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
  return (*node().value)[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& n = node();
  if (n.grad.empty()) return std::vector<double>(n.shape.size(), 0.0);
  return n.grad;
}

std::span<double> Tensor::mutable_grad() {
  ensure_grad(node());
  return node().grad;
}

void Tensor::zero_grad() {
  auto& n = node();
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

Tensor Tensor::shadow() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = shape();
  n->value = node().value;
  n->requires_grad = node().requires_grad;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(n));
}

Tensor Tensor::clone(bool requires_grad) const {
  return make_result(shape(), *node().value, requires_grad);
}

// ---- Tape -------------------------------------------------------------------

void Tape::record(Op op, std::vector<std::uint64_t> inputs, const Tensor& output,
                  std::function<void()> backward) {
  records_.push_back({op, std::move(inputs), output.id(), std::move(backward)});
  outputs_.push_back(output.node_ptr());
}

void Tape::backward(const Tensor& loss) {
  if (records_.empty()) throw std::logic_error("backward: the tape is empty");
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " + to_string(loss.shape()));
  const auto it = std::find_if(outputs_.begin(), outputs_.end(),
                               [&](const NodePtr& n) { return n->id == loss.id(); });
  if (it == outputs_.end())
    throw std::invalid_argument("backward: loss was not produced on this tape");

  // Intermediate gradients are allocated on first use; records whose output
  // never received a gradient are skipped.
  for (auto& n : outputs_) n->grad.clear();
  (*it)->grad.assign(1, 1.0);
  const auto last = static_cast<std::size_t>(it - outputs_.begin());
  for (std::size_t i = last + 1; i-- > 0;)
    if (!outputs_[i]->grad.empty()) records_[i].backward();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

namespace {

// Registers out on the active tape; back receives (out node) and is only
// invoked during Tape::backward.
void record(Op op, std::initializer_list<const Tensor*> inputs, const Tensor& out,
            std::function<void()> back) {
  if (!out.requires_grad()) return;
  std::vector<std::uint64_t> ids;
  ids.reserve(inputs.size());
  for (const Tensor* t : inputs) ids.push_back(t->id());
  g_active_tape->record(op, std::move(ids), out, std::move(back));
}

// Binary broadcasting kernel shared by add, sub and mul.
template <class Fwd>
Tensor broadcast_binary(Op op, const Tensor& a, const Tensor& b, Fwd fwd) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  const Shape so = broadcast_shape(op, sa, sb);
  const Bcast ba(sa), bb(sb);
  std::vector<double> out(so.size());
  const auto av = a.data();
  const auto bv = b.data();
  if (sa == so && sb == so) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < so.rows; ++i)
      for (std::size_t j = 0; j < so.cols; ++j)
        out[i * so.cols + j] = fwd(av[ba.at(i, j)], bv[bb.at(i, j)]);
  }
  return make_result(so, std::move(out), any_requires_grad({&a, &b}));
}

}  // namespace

// ---- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.cols != sb.rows) shape_error(Op::MatMul, sa, sb, "inner dimensions differ");
  std::vector<double> out(sa.rows * sb.cols, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), sa.rows, sa.cols, sb.cols);
  Tensor res = make_result({sa.rows, sb.cols}, std::move(out), any_requires_grad({&a, &b}));
  if (res.requires_grad()) {
    NodePtr na = a.node_ptr(), nb = b.node_ptr(), no = res.node_ptr();
    record(Op::MatMul, {&a, &b}, res, [na, nb, no, sa, sb] {
      const double* g = no->grad.data();
      if (na->requires_grad) {
        ensure_grad(*na);
        gemm_nt(g, nb->value->data(), na->grad.data(), sa.rows, sb.cols, sa.cols);
      }
      if (nb->requires_grad) {
        ensure_grad(*nb);
        gemm_tn(na->value->data(), g, nb->grad.data(), sa.rows, sa.cols, sb.cols);
      }
    });
  }
  return res;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor res = broadcast_binary(Op::Add, a, b, [](double x, double y) { return x + y; });
  if (res.requires_grad()) {
    NodePtr na = a.node_ptr(), nb = b.node_ptr(), no = res.node_ptr();
    record(Op::Add, {&a, &b}, res, [na, nb, no] {
      const Shape so = no->shape;
      for (auto* n : {na.get(), nb.get()}) {
        if (!n->requires_grad) continue;
        ensure_grad(*n);
        const Bcast bc(n->shape);
        for (std::size_t i = 0; i < so.rows; ++i)
          for (std::size_t j = 0; j < so.cols; ++j) n->grad[bc.at(i, j)] += no->grad[i * so.cols + j];
      }
    });
  }
  return res;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor res = broadcast_binary(Op::Sub, a, b, [](double x, double y) { return x - y; });
  if (res.requires_grad()) {
    NodePtr na = a.node_ptr(), nb = b.node_ptr(), no = res.node_ptr();
    record(Op::Sub, {&a, &b}, res, [na, nb, no] {
      const Shape so = no->shape;
      double sign = 1.0;
      for (auto* n : {na.get(), nb.get()}) {
        if (n->requires_grad) {
          ensure_grad(*n);
          const Bcast bc(n->shape);
          for (std::size_t i = 0; i < so.rows; ++i)
            for (std::size_t j = 0; j < so.cols; ++j)
              n->grad[bc.at(i, j)] += sign * no->grad[i * so.cols + j];
        }
        sign = -1.0;
      }
    });
  }
  return res;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor res = broadcast_binary(Op::Mul, a, b, [](double x, double y) { return x * y; });
  if (res.requires_grad()) {
    NodePtr na = a.node_ptr(), nb = b.node_ptr(), no = res.node_ptr();
    record(Op::Mul, {&a, &b}, res, [na, nb, no] {
      const Shape so = no->shape;
      const Bcast ba(na->shape), bb(nb->shape);
      const auto& av = *na->value;
      const auto& bv = *nb->value;
      if (na->requires_grad) ensure_grad(*na);
      if (nb->requires_grad) ensure_grad(*nb);
      for (std::size_t i = 0; i < so.rows; ++i)
        for (std::size_t j = 0; j < so.cols; ++j) {
          const double g = no->grad[i * so.cols + j];
          const std::size_t ia = ba.at(i, j), ib = bb.at(i, j);
          if (na->requires_grad) na->grad[ia] += g * bv[ib];
          if (nb->requires_grad) nb->grad[ib] += g * av[ia];
        }
    });
  }
  return res;
}

namespace {

// Elementwise unary op whose derivative is expressed through its output.
template <class Fwd, class DerivFromOut>
Tensor unary_from_output(Op op, const Tensor& x, Fwd fwd, DerivFromOut deriv) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Tensor res = make_result(x.shape(), std::move(out), any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(op, {&x}, res, [nx, no, deriv] {
      ensure_grad(*nx);
      const auto& y = *no->value;
      for (std::size_t i = 0; i < y.size(); ++i) nx->grad[i] += no->grad[i] * deriv(y[i]);
    });
  }
  return res;
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary_from_output(
      Op::Sigmoid, x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_from_output(
      Op::Tanh, x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

namespace {

void check_axis(Op op, const Shape& s, int axis) {
  if (axis != 0 && axis != 1) shape_error(op, s, "axis must be 0 or 1");
}

// Visits every softmax lane: (offset of first element, stride, length).
template <class F>
void for_each_lane(const Shape& s, int axis, F f) {
  if (axis == 1) {
    for (std::size_t i = 0; i < s.rows; ++i) f(i * s.cols, std::size_t{1}, s.cols);
  } else {
    for (std::size_t j = 0; j < s.cols; ++j) f(j, s.cols, s.rows);
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const Shape s = x.shape();
  check_axis(Op::Softmax, s, axis);
  const auto xv = x.data();
  std::vector<double> out(s.size());
  for_each_lane(s, axis, [&](std::size_t off, std::size_t stride, std::size_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xv[off + k * stride]);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double e = std::exp(xv[off + k * stride] - mx);
      out[off + k * stride] = e;
      total += e;
    }
    for (std::size_t k = 0; k < n; ++k) out[off + k * stride] /= total;
  });
  Tensor res = make_result(s, std::move(out), any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::Softmax, {&x}, res, [nx, no, axis] {
      ensure_grad(*nx);
      const auto& y = *no->value;
      const auto& g = no->grad;
      for_each_lane(no->shape, axis, [&](std::size_t off, std::size_t stride, std::size_t n) {
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += g[off + k * stride] * y[off + k * stride];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t i = off + k * stride;
          nx->grad[i] += y[i] * (g[i] - dot);
        }
      });
    });
  }
  return res;
}

Tensor log_softmax(const Tensor& x, int axis) {
  const Shape s = x.shape();
  check_axis(Op::LogSoftmax, s, axis);
  const auto xv = x.data();
  std::vector<double> out(s.size());
  for_each_lane(s, axis, [&](std::size_t off, std::size_t stride, std::size_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xv[off + k * stride]);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) total += std::exp(xv[off + k * stride] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t k = 0; k < n; ++k) out[off + k * stride] = xv[off + k * stride] - lse;
  });
  Tensor res = make_result(s, std::move(out), any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::LogSoftmax, {&x}, res, [nx, no, axis] {
      ensure_grad(*nx);
      const auto& y = *no->value;
      const auto& g = no->grad;
      for_each_lane(no->shape, axis, [&](std::size_t off, std::size_t stride, std::size_t n) {
        double gsum = 0.0;
        for (std::size_t k = 0; k < n; ++k) gsum += g[off + k * stride];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t i = off + k * stride;
          nx->grad[i] += g[i] - std::exp(y[i]) * gsum;
        }
      });
    });
  }
  return res;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape first = parts[0].shape();
  check_axis(Op::Concat, first, axis);
  Shape so = first;
  bool needs_grad = false;
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const Shape s = parts[p].shape();
    if (axis == 0) {
      if (s.cols != first.cols) shape_error(Op::Concat, first, s, "column counts differ");
      so.rows += s.rows;
    } else {
      if (s.rows != first.rows) shape_error(Op::Concat, first, s, "row counts differ");
      so.cols += s.cols;
    }
  }
  std::vector<double> out(so.size());
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    const auto v = t.data();
    const Shape s = t.shape();
    if (axis == 0) {
      std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * so.cols));
      offset += s.rows;
    } else {
      for (std::size_t i = 0; i < s.rows; ++i)
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * s.cols), s.cols,
                    out.begin() + static_cast<std::ptrdiff_t>(i * so.cols + offset));
      offset += s.cols;
    }
    needs_grad = needs_grad || t.requires_grad();
  }
  Tensor res = make_result(so, std::move(out), needs_grad && g_active_tape != nullptr);
  if (res.requires_grad()) {
    std::vector<NodePtr> ins;
    std::vector<std::uint64_t> ids;
    for (const Tensor& t : parts) {
      ins.push_back(t.node_ptr());
      ids.push_back(t.id());
    }
    NodePtr no = res.node_ptr();
    g_active_tape->record(Op::Concat, std::move(ids), res, [ins, no, axis] {
      const Shape so = no->shape;
      std::size_t offset = 0;
      for (const auto& n : ins) {
        const Shape s = n->shape;
        if (n->requires_grad) {
          ensure_grad(*n);
          for (std::size_t i = 0; i < s.rows; ++i)
            for (std::size_t j = 0; j < s.cols; ++j) {
              const std::size_t src =
                  axis == 0 ? (offset + i) * so.cols + j : i * so.cols + offset + j;
              n->grad[i * s.cols + j] += no->grad[src];
            }
        }
        offset += axis == 0 ? s.rows : s.cols;
      }
    });
  }
  return res;
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const Shape s = x.shape();
  check_axis(Op::Slice, s, axis);
  const std::size_t extent = axis == 0 ? s.rows : s.cols;
  if (begin >= end || end > extent) {
    std::ostringstream os;
    os << "range [" << begin << ", " << end << ") out of bounds for axis " << axis;
    throw ShapeError(std::string(op_name(Op::Slice)) + ": invalid shape " + to_string(s) + " (" +
                     os.str() + ")");
  }
  const Shape so = axis == 0 ? Shape{end - begin, s.cols} : Shape{s.rows, end - begin};
  const auto xv = x.data();
  std::vector<double> out(so.size());
  for (std::size_t i = 0; i < so.rows; ++i)
    for (std::size_t j = 0; j < so.cols; ++j)
      out[i * so.cols + j] =
          axis == 0 ? xv[(begin + i) * s.cols + j] : xv[i * s.cols + begin + j];
  Tensor res = make_result(so, std::move(out), any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::Slice, {&x}, res, [nx, no, axis, begin] {
      ensure_grad(*nx);
      const Shape s = nx->shape;
      const Shape so = no->shape;
      for (std::size_t i = 0; i < so.rows; ++i)
        for (std::size_t j = 0; j < so.cols; ++j) {
          const std::size_t dst = axis == 0 ? (begin + i) * s.cols + j : i * s.cols + begin + j;
          nx->grad[dst] += no->grad[i * so.cols + j];
        }
    });
  }
  return res;
}

Tensor transpose(const Tensor& x) {
  const Shape s = x.shape();
  const auto xv = x.data();
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t j = 0; j < s.cols; ++j) out[j * s.rows + i] = xv[i * s.cols + j];
  Tensor res = make_result({s.cols, s.rows}, std::move(out), any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::Transpose, {&x}, res, [nx, no] {
      ensure_grad(*nx);
      const Shape s = nx->shape;
      for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) nx->grad[i * s.cols + j] += no->grad[j * s.rows + i];
    });
  }
  return res;
}

Tensor scale(const Tensor& x, double factor) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  Tensor res = make_result(x.shape(), std::move(out), any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::Scale, {&x}, res, [nx, no, factor] {
      ensure_grad(*nx);
      for (std::size_t i = 0; i < no->grad.size(); ++i) nx->grad[i] += factor * no->grad[i];
    });
  }
  return res;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  const Shape s = table.shape();
  if (indices.empty()) shape_error(Op::GatherRows, s, "empty index list");
  for (std::size_t idx : indices)
    if (idx >= s.rows) {
      throw ShapeError(std::string(op_name(Op::GatherRows)) + ": row index " +
                       std::to_string(idx) + " out of range for table " + to_string(s));
    }
  const auto tv = table.data();
  std::vector<double> out(indices.size() * s.cols);
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(indices[r] * s.cols), s.cols,
                out.begin() + static_cast<std::ptrdiff_t>(r * s.cols));
  Tensor res = make_result({indices.size(), s.cols}, std::move(out), any_requires_grad({&table}));
  if (res.requires_grad()) {
    NodePtr nt = table.node_ptr(), no = res.node_ptr();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    record(Op::GatherRows, {&table}, res, [nt, no, idx = std::move(idx)] {
      ensure_grad(*nt);
      const std::size_t cols = nt->shape.cols;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        double* dst = nt->grad.data() + idx[r] * cols;
        const double* src = no->grad.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
      }
    });
  }
  return res;
}

Tensor log(const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::log(xv[i]);
  Tensor res = make_result(x.shape(), std::move(out), any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::Log, {&x}, res, [nx, no] {
      ensure_grad(*nx);
      const auto& xv = *nx->value;
      for (std::size_t i = 0; i < xv.size(); ++i) nx->grad[i] += no->grad[i] / xv[i];
    });
  }
  return res;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor res = make_result({1, 1}, {total}, any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::Sum, {&x}, res, [nx, no] {
      ensure_grad(*nx);
      const double g = no->grad[0];
      for (double& v : nx->grad) v += g;
    });
  }
  return res;
}

Tensor sum(const Tensor& x, int axis) {
  const Shape s = x.shape();
  check_axis(Op::Sum, s, axis);
  const Shape so = axis == 0 ? Shape{1, s.cols} : Shape{s.rows, 1};
  const auto xv = x.data();
  std::vector<double> out(so.size(), 0.0);
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t j = 0; j < s.cols; ++j) out[axis == 0 ? j : i] += xv[i * s.cols + j];
  Tensor res = make_result(so, std::move(out), any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::Sum, {&x}, res, [nx, no, axis] {
      ensure_grad(*nx);
      const Shape s = nx->shape;
      for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) nx->grad[i * s.cols + j] += no->grad[axis == 0 ? j : i];
    });
  }
  return res;
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor res = make_result({1, 1}, {total / n}, any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::Mean, {&x}, res, [nx, no, n] {
      ensure_grad(*nx);
      const double g = no->grad[0] / n;
      for (double& v : nx->grad) v += g;
    });
  }
  return res;
}

Tensor reshape(const Tensor& x, std::size_t rows, std::size_t cols) {
  const Shape s = x.shape();
  if (rows * cols != s.size() || rows == 0 || cols == 0)
    shape_error(Op::Reshape, s, Shape{rows, cols}, "element counts differ");
  std::vector<double> out(x.data().begin(), x.data().end());
  Tensor res = make_result({rows, cols}, std::move(out), any_requires_grad({&x}));
  if (res.requires_grad()) {
    NodePtr nx = x.node_ptr(), no = res.node_ptr();
    record(Op::Reshape, {&x}, res, [nx, no] {
      ensure_grad(*nx);
      for (std::size_t i = 0; i < no->grad.size(); ++i) nx->grad[i] += no->grad[i];
    });
  }
  return res;
}

// ---- grad_check -------------------------------------------------------------

GradCheckReport grad_check(const ScalarFunction& f, std::span<const Tensor> inputs, double step,
                           double tol) {
  constexpr double kFloor = 1e-3;
  GradCheckReport report;
  std::vector<Tensor> xs(inputs.begin(), inputs.end());
  for (auto& x : xs) {
    if (!x.requires_grad()) throw std::invalid_argument("grad_check: inputs must require grad");
    x.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f();
    if (out.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    if (!std::isfinite(out.item())) report.non_finite.push_back({0, 0, "f(x) is not finite"});
    tape.backward(out);
  }
  for (const auto& x : xs) analytic.push_back(x.grad());

  NoGradScope no_grad;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    auto values = xs[k].mutable_data();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double original = values[e];
      values[e] = original + step;
      const double up = f().item();
      values[e] = original - step;
      const double down = f().item();
      values[e] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][e];
      ++report.checked;
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        report.non_finite.push_back(
            {k, e, std::isfinite(a) ? "finite difference not finite" : "analytic gradient not finite"});
        continue;
      }
      const double denom = std::max({std::abs(a), std::abs(numeric), kFloor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = k;
        report.worst_element = e;
      }
    }
  }
  report.pass = report.non_finite.empty() && report.max_rel_error <= tol;
  return report;
}

}  // namespace navtrans::ad
