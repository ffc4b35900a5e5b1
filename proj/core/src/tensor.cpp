#include "uqfire/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace uqfire {

namespace detail {

struct TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;
using BackwardFn =
    std::function<void(const TensorImpl& out, std::span<const ImplPtr> inputs)>;

struct Node {
  OpTag op = OpTag::leaf;
  std::uint64_t sequence = 0;
  std::vector<ImplPtr> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

}  // namespace detail

struct TensorAccess {
  static const std::shared_ptr<detail::TensorImpl>& impl(const Tensor& t) {
    return t.impl_;
  }
  static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) {
    return Tensor(std::move(impl));
  }
};

namespace {

using detail::ImplPtr;
using detail::Node;
using detail::TensorImpl;

std::atomic<std::uint64_t> g_sequence{1};
thread_local bool t_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const ImplPtr& impl_of(const Tensor& t) {
  const auto& p = TensorAccess::impl(t);
  if (!p) throw std::invalid_argument("operation on an undefined tensor");
  return p;
}

std::vector<double>& grad_buffer(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

Tensor make_result(OpTag op, Shape shape, std::vector<double> data,
                   std::vector<ImplPtr> inputs, detail::BackwardFn fn) {
  auto out = std::make_shared<TensorImpl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  bool needs_grad = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs_grad = needs_grad || in->requires_grad;
  }
  if (needs_grad) {
    out->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->op = op;
    node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
    node->inputs = std::move(inputs);
    node->backward = std::move(fn);
    out->node = std::move(node);
  }
  return TensorAccess::wrap(std::move(out));
}

[[noreturn]] void shape_fail(std::string_view op, const Shape& a,
                             const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_to_string(a) + " and " + shape_to_string(b));
}

[[noreturn]] void shape_fail(std::string_view op, const Shape& a,
                             std::string_view why) {
  throw ShapeError(std::string(op) + ": " + std::string(why) + " (shape " +
                   shape_to_string(a) + ")");
}

// Row-major strides for shape padded on the left to rank, with 0 on
// broadcast (size-1 or missing) dimensions.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t in_axis = in.size() - 1 - k;
    const std::size_t out_axis = rank - 1 - k;
    strides[out_axis] = in[in_axis] == 1 ? 0 : stride;
    stride *= in[in_axis];
  }
  return strides;
}

Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) shape_fail(op, a, b);
    out[rank - 1 - k] = std::max(da, db);
  }
  return out;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t total = shape_size(out);
  if (total == 0) return;
  const std::size_t rank = out.size();
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t inner = out[rank - 1];
  const std::size_t inner_sa = sa[rank - 1], inner_sb = sb[rank - 1];
  std::size_t o = 0;
  while (o < total) {
    std::size_t a = ia, b = ib;
    for (std::size_t j = 0; j < inner; ++j, ++o, a += inner_sa, b += inner_sb) {
      f(o, a, b);
    }
    // advance odometer over the outer dimensions
    std::size_t axis = rank - 1;
    while (axis > 0) {
      --axis;
      ++idx[axis];
      ia += sa[axis];
      ib += sb[axis];
      if (idx[axis] < out[axis]) break;
      ia -= sa[axis] * idx[axis];
      ib -= sb[axis] * idx[axis];
      idx[axis] = 0;
    }
  }
}

enum class BinaryKind { add, sub, mul };

Tensor binary(BinaryKind kind, const Tensor& ta, const Tensor& tb) {
  const ImplPtr& a = impl_of(ta);
  const ImplPtr& b = impl_of(tb);
  const OpTag tag = kind == BinaryKind::add   ? OpTag::add
                    : kind == BinaryKind::sub ? OpTag::sub
                                              : OpTag::mul;
  const bool same_shape = a->shape == b->shape;
  Shape out_shape = same_shape ? a->shape : broadcast_shape(op_name(tag), a->shape, b->shape);
  std::vector<double> out(shape_size(out_shape));

  auto apply = [kind](double x, double y) {
    switch (kind) {
      case BinaryKind::add: return x + y;
      case BinaryKind::sub: return x - y;
      case BinaryKind::mul: return x * y;
    }
    return 0.0;
  };

  std::vector<std::size_t> sa, sb;
  if (same_shape) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(a->data[i], b->data[i]);
  } else {
    sa = broadcast_strides(a->shape, out_shape);
    sb = broadcast_strides(b->shape, out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      out[o] = apply(a->data[i], b->data[j]);
    });
  }

  auto fn = [kind, same_shape, sa, sb](const TensorImpl& res, std::span<const ImplPtr> in) {
    TensorImpl& x = *in[0];
    TensorImpl& y = *in[1];
    const auto& g = res.grad;
    double* gx = x.requires_grad ? grad_buffer(x).data() : nullptr;
    double* gy = y.requires_grad ? grad_buffer(y).data() : nullptr;
    auto step = [&](std::size_t o, std::size_t i, std::size_t j) {
      switch (kind) {
        case BinaryKind::add:
          if (gx) gx[i] += g[o];
          if (gy) gy[j] += g[o];
          break;
        case BinaryKind::sub:
          if (gx) gx[i] += g[o];
          if (gy) gy[j] -= g[o];
          break;
        case BinaryKind::mul:
          if (gx) gx[i] += g[o] * y.data[j];
          if (gy) gy[j] += g[o] * x.data[i];
          break;
      }
    };
    if (same_shape) {
      for (std::size_t o = 0; o < g.size(); ++o) step(o, o, o);
    } else {
      for_each_broadcast(res.shape, sa, sb, step);
    }
  };
  return make_result(tag, std::move(out_shape), std::move(out), {a, b}, std::move(fn));
}

// Elementwise unary op; dfdx(x, y) gives the local derivative.
template <class F, class D>
Tensor unary(OpTag tag, const Tensor& tx, F f, D dfdx) {
  const ImplPtr& x = impl_of(tx);
  std::vector<double> out(x->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x->data[i]);
  auto fn = [dfdx](const TensorImpl& res, std::span<const ImplPtr> in) {
    TensorImpl& src = *in[0];
    if (!src.requires_grad) return;
    auto& g = grad_buffer(src);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += res.grad[i] * dfdx(src.data[i], res.data[i]);
    }
  };
  return make_result(tag, x->shape, std::move(out), {x}, std::move(fn));
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double stable_softplus(double v) {
  return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t k = 0; k < axis; ++k) s.outer *= shape[k];
  s.len = shape[axis];
  for (std::size_t k = axis + 1; k < shape.size(); ++k) s.inner *= shape[k];
  return s;
}

Tensor reduce_axis(OpTag tag, const Tensor& tx, std::size_t axis, double scale) {
  const ImplPtr& x = impl_of(tx);
  if (axis >= x->shape.size()) shape_fail(op_name(tag), x->shape, "axis out of range");
  const AxisSplit s = split_axis(x->shape, axis);
  Shape out_shape = x->shape;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const double* row = x->data.data() + (o * s.len + l) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
    }
  }
  if (scale != 1.0) {
    for (double& v : out) v *= scale;
  }
  auto fn = [s, scale](const TensorImpl& res, std::span<const ImplPtr> in) {
    TensorImpl& src = *in[0];
    if (!src.requires_grad) return;
    auto& g = grad_buffer(src);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.len; ++l) {
        double* dst = g.data() + (o * s.len + l) * s.inner;
        const double* up = res.grad.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += up[i] * scale;
      }
    }
  };
  return make_result(tag, std::move(out_shape), std::move(out), {x}, std::move(fn));
}

Tensor reduce_all(OpTag tag, const Tensor& tx, double scale) {
  const ImplPtr& x = impl_of(tx);
  double total = 0.0;
  for (double v : x->data) total += v;
  auto fn = [scale](const TensorImpl& res, std::span<const ImplPtr> in) {
    TensorImpl& src = *in[0];
    if (!src.requires_grad) return;
    auto& g = grad_buffer(src);
    const double up = res.grad[0] * scale;
    for (double& v : g) v += up;
  };
  return make_result(tag, Shape{}, {total * scale}, {x}, std::move(fn));
}

}  // namespace

// ---------------------------------------------------------------------------
// Shape helpers

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string_view op_name(OpTag op) {
  switch (op) {
    case OpTag::leaf: return "leaf";
    case OpTag::add: return "add";
    case OpTag::sub: return "sub";
    case OpTag::mul: return "mul";
    case OpTag::matmul: return "matmul";
    case OpTag::sigmoid: return "sigmoid";
    case OpTag::tanh: return "tanh";
    case OpTag::relu: return "relu";
    case OpTag::exp: return "exp";
    case OpTag::log: return "log";
    case OpTag::softplus: return "softplus";
    case OpTag::softmax_last_axis: return "softmax_last_axis";
    case OpTag::sum: return "sum";
    case OpTag::mean: return "mean";
    case OpTag::concat_last_axis: return "concat_last_axis";
    case OpTag::slice: return "slice";
    case OpTag::broadcast: return "broadcast";
    case OpTag::scalar_mul: return "scalar_mul";
    case OpTag::add_scalar: return "add_scalar";
    case OpTag::reshape: return "reshape";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_to_string(shape) + " holds " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return Tensor(Shape{values.size()}, std::vector<double>(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return impl_of(*this)->shape; }
std::size_t Tensor::size() const { return impl_of(*this)->data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) shape_fail("dim", s, "axis out of range");
  return s[axis];
}

std::span<const double> Tensor::data() const { return impl_of(*this)->data; }
std::span<double> Tensor::mutable_data() { return impl_of(*this)->data; }

double Tensor::item() const {
  const auto& p = impl_of(*this);
  if (p->data.size() != 1) shape_fail("item", p->shape, "tensor is not a scalar");
  return p->data[0];
}

bool Tensor::requires_grad() const { return impl_of(*this)->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  const auto& p = impl_of(*this);
  if (p->node) throw std::logic_error("set_requires_grad: only leaf tensors can be toggled");
  p->requires_grad = on;
  if (!on) p->grad.clear();
}

bool Tensor::is_leaf() const { return impl_of(*this)->node == nullptr; }
OpTag Tensor::op() const {
  const auto& p = impl_of(*this);
  return p->node ? p->node->op : OpTag::leaf;
}

std::span<const double> Tensor::grad() const { return impl_of(*this)->grad; }
bool Tensor::has_grad() const { return !impl_of(*this)->grad.empty(); }
void Tensor::zero_grad() { impl_of(*this)->grad.clear(); }

Tensor Tensor::detach() const {
  const auto& p = impl_of(*this);
  return Tensor(p->shape, p->data, false);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---------------------------------------------------------------------------
// Ops

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, a, b); }

Tensor matmul(const Tensor& ta, const Tensor& tb, bool transpose_b) {
  const ImplPtr& a = impl_of(ta);
  const ImplPtr& b = impl_of(tb);
  if (a->shape.size() != 2 || b->shape.size() != 2) shape_fail("matmul", a->shape, b->shape);
  const std::size_t m = a->shape[0], k = a->shape[1];
  const std::size_t kb = transpose_b ? b->shape[1] : b->shape[0];
  const std::size_t n = transpose_b ? b->shape[0] : b->shape[1];
  if (k != kb) shape_fail("matmul", a->shape, b->shape);

  std::vector<double> out(m * n);
  {
    Eigen::Map<const RowMat> A(a->data.data(), m, k);
    Eigen::Map<RowMat> C(out.data(), m, n);
    if (transpose_b) {
      Eigen::Map<const RowMat> B(b->data.data(), n, k);
      C.noalias() = A * B.transpose();
    } else {
      Eigen::Map<const RowMat> B(b->data.data(), k, n);
      C.noalias() = A * B;
    }
  }
  auto fn = [m, k, n, transpose_b](const TensorImpl& res, std::span<const ImplPtr> in) {
    TensorImpl& x = *in[0];
    TensorImpl& y = *in[1];
    Eigen::Map<const RowMat> G(res.grad.data(), m, n);
    if (x.requires_grad) {
      Eigen::Map<RowMat> GA(grad_buffer(x).data(), m, k);
      if (transpose_b) {
        Eigen::Map<const RowMat> B(y.data.data(), n, k);
        GA.noalias() += G * B;
      } else {
        Eigen::Map<const RowMat> B(y.data.data(), k, n);
        GA.noalias() += G * B.transpose();
      }
    }
    if (y.requires_grad) {
      Eigen::Map<const RowMat> A(x.data.data(), m, k);
      if (transpose_b) {
        Eigen::Map<RowMat> GB(grad_buffer(y).data(), n, k);
        GB.noalias() += G.transpose() * A;
      } else {
        Eigen::Map<RowMat> GB(grad_buffer(y).data(), k, n);
        GB.noalias() += A.transpose() * G;
      }
    }
  };
  return make_result(OpTag::matmul, Shape{m, n}, std::move(out), {a, b}, std::move(fn));
}

Tensor sigmoid(const Tensor& x) {
  return unary(OpTag::sigmoid, x, stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(OpTag::tanh, x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(OpTag::relu, x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(OpTag::exp, x, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : impl_of(x)->data) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(v) +
                        " in tensor of shape " + shape_to_string(x.shape()));
    }
  }
  return unary(OpTag::log, x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor softplus(const Tensor& x) {
  return unary(OpTag::softplus, x, stable_softplus,
               [](double v, double) { return stable_sigmoid(v); });
}

Tensor softmax_last_axis(const Tensor& tx) {
  const ImplPtr& x = impl_of(tx);
  if (x->shape.empty()) shape_fail("softmax_last_axis", x->shape, "needs rank >= 1");
  const std::size_t cols = x->shape.back();
  if (cols == 0) shape_fail("softmax_last_axis", x->shape, "empty last axis");
  const std::size_t rows = x->data.size() / cols;
  std::vector<double> out(x->data.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = x->data.data() + r * cols;
    double* dst = out.data() + r * cols;
    const double top = *std::max_element(src, src + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      dst[c] = std::exp(src[c] - top);
      z += dst[c];
    }
    for (std::size_t c = 0; c < cols; ++c) dst[c] /= z;
  }
  auto fn = [rows, cols](const TensorImpl& res, std::span<const ImplPtr> in) {
    TensorImpl& src = *in[0];
    if (!src.requires_grad) return;
    auto& g = grad_buffer(src);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = res.data.data() + r * cols;
      const double* up = res.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += up[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (up[c] - dot);
    }
  };
  return make_result(OpTag::softmax_last_axis, x->shape, std::move(out), {x}, std::move(fn));
}

Tensor sum(const Tensor& x) { return reduce_all(OpTag::sum, x, 1.0); }
Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis(OpTag::sum, x, axis, 1.0); }

Tensor mean(const Tensor& x) {
  const std::size_t n = x.size();
  if (n == 0) shape_fail("mean", x.shape(), "empty tensor");
  return reduce_all(OpTag::mean, x, 1.0 / static_cast<double>(n));
}

Tensor mean(const Tensor& x, std::size_t axis) {
  const std::size_t n = x.dim(axis);
  if (n == 0) shape_fail("mean", x.shape(), "empty axis");
  return reduce_axis(OpTag::mean, x, axis, 1.0 / static_cast<double>(n));
}

Tensor concat_last_axis(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_last_axis: no inputs");
  std::vector<ImplPtr> inputs;
  inputs.reserve(parts.size());
  for (const auto& p : parts) inputs.push_back(impl_of(p));
  const Shape& first = inputs[0]->shape;
  if (first.empty()) shape_fail("concat_last_axis", first, "needs rank >= 1");
  Shape lead(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total_width = 0;
  for (const auto& in : inputs) {
    if (in->shape.size() != first.size() ||
        !std::equal(lead.begin(), lead.end(), in->shape.begin())) {
      shape_fail("concat_last_axis", first, in->shape);
    }
    widths.push_back(in->shape.back());
    total_width += in->shape.back();
  }
  const std::size_t rows = shape_size(lead);
  std::vector<double> out(rows * total_width);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    const std::size_t w = widths[p];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(inputs[p]->data.data() + r * w, w, out.data() + r * total_width + offset);
    }
    offset += w;
  }
  Shape out_shape = lead;
  out_shape.push_back(total_width);
  auto fn = [rows, widths, total_width](const TensorImpl& res, std::span<const ImplPtr> in) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < in.size(); ++p) {
      const std::size_t w = widths[p];
      if (in[p]->requires_grad) {
        auto& g = grad_buffer(*in[p]);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* up = res.grad.data() + r * total_width + off;
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += up[c];
        }
      }
      off += w;
    }
  };
  return make_result(OpTag::concat_last_axis, std::move(out_shape), std::move(out),
                     std::move(inputs), std::move(fn));
}

Tensor slice(const Tensor& tx, std::size_t axis, std::size_t start, std::size_t length) {
  const ImplPtr& x = impl_of(tx);
  if (axis >= x->shape.size()) shape_fail("slice", x->shape, "axis out of range");
  if (length == 0 || start + length > x->shape[axis]) {
    shape_fail("slice", x->shape,
               "range [" + std::to_string(start) + "," + std::to_string(start + length) +
                   ") exceeds axis " + std::to_string(axis));
  }
  const AxisSplit s = split_axis(x->shape, axis);
  Shape out_shape = x->shape;
  out_shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x->data.data() + (o * s.len + start) * s.inner, length * s.inner,
                out.data() + o * length * s.inner);
  }
  auto fn = [s, start, length](const TensorImpl& res, std::span<const ImplPtr> in) {
    TensorImpl& src = *in[0];
    if (!src.requires_grad) return;
    auto& g = grad_buffer(src);
    const std::size_t block = length * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = g.data() + (o * s.len + start) * s.inner;
      const double* up = res.grad.data() + o * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += up[i];
    }
  };
  return make_result(OpTag::slice, std::move(out_shape), std::move(out), {x}, std::move(fn));
}

Tensor broadcast(const Tensor& tx, const Shape& shape) {
  const ImplPtr& x = impl_of(tx);
  const Shape joined = broadcast_shape("broadcast", x->shape, shape);
  if (joined != shape) shape_fail("broadcast", x->shape, shape);
  const auto sx = broadcast_strides(x->shape, shape);
  const std::vector<std::size_t> zero(shape.size(), 0);
  std::vector<double> out(shape_size(shape));
  for_each_broadcast(shape, sx, zero, [&](std::size_t o, std::size_t i, std::size_t) {
    out[o] = x->data[i];
  });
  auto fn = [sx, zero](const TensorImpl& res, std::span<const ImplPtr> in) {
    TensorImpl& src = *in[0];
    if (!src.requires_grad) return;
    auto& g = grad_buffer(src);
    for_each_broadcast(res.shape, sx, zero, [&](std::size_t o, std::size_t i, std::size_t) {
      g[i] += res.grad[o];
    });
  };
  return make_result(OpTag::broadcast, shape, std::move(out), {x}, std::move(fn));
}

Tensor scalar_mul(const Tensor& x, double c) {
  return unary(OpTag::scalar_mul, x, [c](double v) { return c * v; },
               [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(OpTag::add_scalar, x, [c](double v) { return v + c; },
               [](double, double) { return 1.0; });
}

Tensor reshape(const Tensor& tx, Shape shape) {
  const ImplPtr& x = impl_of(tx);
  if (shape_size(shape) != x->data.size()) shape_fail("reshape", x->shape, shape);
  auto fn = [](const TensorImpl& res, std::span<const ImplPtr> in) {
    TensorImpl& src = *in[0];
    if (!src.requires_grad) return;
    auto& g = grad_buffer(src);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i];
  };
  return make_result(OpTag::reshape, std::move(shape), x->data, {x}, std::move(fn));
}

Tensor primitive_forward(OpTag op, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw std::invalid_argument(std::string(op_name(op)) + ": expected " +
                                  std::to_string(n) + " inputs, got " +
                                  std::to_string(inputs.size()));
    }
  };
  switch (op) {
    case OpTag::add: need(2); return add(inputs[0], inputs[1]);
    case OpTag::sub: need(2); return sub(inputs[0], inputs[1]);
    case OpTag::mul: need(2); return mul(inputs[0], inputs[1]);
    case OpTag::matmul: need(2); return matmul(inputs[0], inputs[1], attrs.transpose_b);
    case OpTag::sigmoid: need(1); return sigmoid(inputs[0]);
    case OpTag::tanh: need(1); return tanh(inputs[0]);
    case OpTag::relu: need(1); return relu(inputs[0]);
    case OpTag::exp: need(1); return exp(inputs[0]);
    case OpTag::log: need(1); return log(inputs[0]);
    case OpTag::softplus: need(1); return softplus(inputs[0]);
    case OpTag::softmax_last_axis: need(1); return softmax_last_axis(inputs[0]);
    case OpTag::sum:
      need(1);
      return attrs.has_axis ? sum(inputs[0], attrs.axis) : sum(inputs[0]);
    case OpTag::mean:
      need(1);
      return attrs.has_axis ? mean(inputs[0], attrs.axis) : mean(inputs[0]);
    case OpTag::concat_last_axis: return concat_last_axis(inputs);
    case OpTag::slice: need(1); return slice(inputs[0], attrs.axis, attrs.start, attrs.length);
    case OpTag::broadcast: need(1); return broadcast(inputs[0], attrs.shape);
    case OpTag::scalar_mul: need(1); return scalar_mul(inputs[0], attrs.scalar);
    case OpTag::add_scalar: need(1); return add_scalar(inputs[0], attrs.scalar);
    case OpTag::reshape: need(1); return reshape(inputs[0], attrs.shape);
    case OpTag::leaf: break;
  }
  throw std::invalid_argument("primitive_forward: leaf is not an operation");
}

// ---------------------------------------------------------------------------
// Backward

namespace {

std::vector<TensorImpl*> reachable_nodes(const ImplPtr& root) {
  std::vector<TensorImpl*> found;
  std::unordered_set<const TensorImpl*> seen;
  std::vector<TensorImpl*> stack{root.get()};
  while (!stack.empty()) {
    TensorImpl* t = stack.back();
    stack.pop_back();
    if (!t->node || !seen.insert(t).second) continue;
    found.push_back(t);
    for (const auto& in : t->node->inputs) {
      if (in->node) stack.push_back(in.get());
    }
  }
  std::sort(found.begin(), found.end(), [](const TensorImpl* a, const TensorImpl* b) {
    return a->node->sequence > b->node->sequence;
  });
  return found;
}

}  // namespace

void backward(const Tensor& loss) {
  const ImplPtr& root = impl_of(loss);
  if (!root->shape.empty()) {
    shape_fail("backward", root->shape, "loss must be a scalar");
  }
  if (!root->requires_grad) {
    throw std::logic_error("backward: loss does not depend on any tensor requiring grad");
  }
  const auto order = reachable_nodes(root);
  for (TensorImpl* t : order) t->grad.clear();
  grad_buffer(*root)[0] += 1.0;
  for (TensorImpl* t : order) {
    if (t->grad.empty()) continue;
    t->node->backward(*t, t->node->inputs);
  }
}

std::vector<GraphNodeInfo> collect_graph(const Tensor& root) {
  auto order = reachable_nodes(impl_of(root));
  std::reverse(order.begin(), order.end());
  std::vector<GraphNodeInfo> info;
  info.reserve(order.size());
  for (const TensorImpl* t : order) {
    GraphNodeInfo n{t->node->op, t->node->sequence, {}};
    for (const auto& in : t->node->inputs) {
      n.input_sequences.push_back(in->node ? in->node->sequence : 0);
    }
    info.push_back(std::move(n));
  }
  return info;
}

}  // namespace uqfire
