#pragma once

// Dense float64 tensor with tape-style reverse-mode differentiation.
//
// Every op that sees at least one input with requires_grad=true records a
// node holding its inputs and a backward closure. Nodes carry a global,
// monotonically increasing sequence number, so a node's inputs always precede
// it and reverse sequence order is a valid topological order for backward().
// The graph is rebuilt on every forward pass and dies with its tensors.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uqfire {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class OpTag {
  leaf,
  add,
  sub,
  mul,
  matmul,
  sigmoid,
  tanh,
  relu,
  exp,
  log,
  softplus,
  softmax_last_axis,
  sum,
  mean,
  concat_last_axis,
  slice,
  broadcast,
  scalar_mul,
  add_scalar,
  reshape,
};

std::string_view op_name(OpTag op);

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values,
                       bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  /// In-place access for leaf tensors (parameter init, optimizer updates).
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  OpTag op() const;

  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  /// Copy of the values, detached from any graph.
  Tensor detach() const;
  /// Same storage identity check (two handles to one tensor).
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend struct TensorAccess;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording on this thread while alive. Inference paths use
/// it so frozen parameters can be shared across threads without building
/// graphs.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Elementwise binary ops broadcast with numpy rules.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// (m x k) . (k x n); with transpose_b, b is stored (n x k).
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
/// Throws DomainError on any non-positive entry.
Tensor log(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor softmax_last_axis(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor concat_last_axis(std::span<const Tensor> parts);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length);
Tensor broadcast(const Tensor& x, const Shape& shape);
Tensor scalar_mul(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor reshape(const Tensor& x, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scalar_mul(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scalar_mul(a, c); }

/// Attributes for the uniform dispatch entry point.
struct OpAttrs {
  std::size_t axis = 0;
  bool has_axis = false;
  std::size_t start = 0;
  std::size_t length = 0;
  double scalar = 0.0;
  bool transpose_b = false;
  Shape shape;
};

/// Uniform entry point over every primitive; forwards to the named functions.
Tensor primitive_forward(OpTag op, std::span<const Tensor> inputs,
                         const OpAttrs& attrs = {});

/// Reverse sweep from a scalar loss. Leaf gradients accumulate additively
/// across calls; intermediate gradients are reset at the start of each call.
void backward(const Tensor& loss);

struct GraphNodeInfo {
  OpTag op;
  std::uint64_t sequence;
  std::vector<std::uint64_t> input_sequences;  // 0 for leaves
};

/// Recorded nodes reachable from root, in insertion (topological) order.
std::vector<GraphNodeInfo> collect_graph(const Tensor& root);

}  // namespace uqfire
