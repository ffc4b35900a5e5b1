#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "uqfire/grad_check.hpp"
#include "uqfire/rng.hpp"
#include "uqfire/tensor.hpp"

namespace uqfire {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), grad);
}

void expect_values(const Tensor& t, std::initializer_list<double> expected, double tol = 1e-12) {
  ASSERT_EQ(t.size(), expected.size());
  std::size_t i = 0;
  for (double e : expected) EXPECT_NEAR(t[i++], e, tol) << "index " << i - 1;
}

TEST(TensorOps, MatmulByIdentity) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor c = matmul(a, id);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  expect_values(c, {1, 2, 3, 4}, 0.0);
}

TEST(TensorOps, MatmulTransposedMatchesExplicit) {
  Rng rng(1);
  const Tensor a = random_tensor({3, 4}, rng, false);
  const Tensor b = random_tensor({5, 4}, rng, false);
  const Tensor c = matmul(a, b, true);
  ASSERT_EQ(c.shape(), (Shape{3, 5}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a[i * 4 + k] * b[j * 4 + k];
      EXPECT_NEAR(c[i * 5 + j], s, 1e-14);
    }
  }
}

TEST(TensorOps, AnalyticValuesAtZero) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_DOUBLE_EQ(tanh(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_NEAR(softplus(Tensor::scalar(0.0)).item(), std::log(2.0), 1e-15);
  expect_values(softmax_last_axis(Tensor::vector({0, 0})), {0.5, 0.5}, 0.0);
}

TEST(TensorOps, SoftmaxIsStableForLargeLogits) {
  const Tensor p = softmax_last_axis(Tensor::vector({1000.0, 0.0, -1000.0}));
  expect_values(p, {1.0, 0.0, 0.0});
  EXPECT_NEAR(softplus(Tensor::scalar(800.0)).item(), 800.0, 1e-12);
}

TEST(TensorOps, BroadcastAddFollowsNumpyRules) {
  const Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const Tensor b = Tensor::vector({10, 20, 30});
  expect_values(a + b, {11, 22, 33, 14, 25, 36}, 0.0);
  const Tensor col = Tensor({2, 1}, {100, 200});
  expect_values(a + col, {101, 102, 103, 204, 205, 206}, 0.0);
}

TEST(TensorOps, IncompatibleShapesThrow) {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 2});
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST(TensorOps, LogOfNonPositiveIsDomainError) {
  EXPECT_THROW(log(Tensor::vector({1.0, 0.0})), DomainError);
  EXPECT_THROW(log(Tensor::vector({-1.0})), DomainError);
}

TEST(TensorOps, AxisReductionsDropTheAxis) {
  const Tensor a = Tensor({2, 3, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  const Tensor s = sum(a, 1);
  EXPECT_EQ(s.shape(), (Shape{2, 2}));
  expect_values(s, {9, 12, 27, 30}, 0.0);
  expect_values(mean(a, 2), {1.5, 3.5, 5.5, 7.5, 9.5, 11.5}, 0.0);
}

TEST(TensorOps, SliceConcatRoundTrip) {
  Rng rng(4);
  const Tensor x = random_tensor({3, 5}, rng, false);
  const Tensor parts[] = {slice(x, 1, 0, 2), slice(x, 1, 2, 3)};
  const Tensor y = concat_last_axis(parts);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(TensorOps, PrimitiveDispatchMatchesNamedFunctions) {
  Rng rng(2);
  const Tensor a = random_tensor({2, 3}, rng, false);
  const Tensor b = random_tensor({2, 3}, rng, false);
  const Tensor ab[] = {a, b};
  const Tensor viaDispatch = primitive_forward(OpTag::mul, ab);
  const Tensor direct = mul(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(viaDispatch[i], direct[i]);
  OpAttrs attrs;
  attrs.axis = 1;
  attrs.has_axis = true;
  const Tensor only_a[] = {a};
  const Tensor s = primitive_forward(OpTag::sum, only_a, attrs);
  EXPECT_EQ(s.shape(), (Shape{2}));
  const Tensor leaf[] = {a};
  EXPECT_THROW(primitive_forward(OpTag::leaf, leaf), std::invalid_argument);
}

TEST(Autodiff, SumOfSquaresGradient) {
  const Tensor x = Tensor::vector({1, 2, 3}, true);
  backward(sum(x * x));
  ASSERT_TRUE(x.has_grad());
  const auto g = x.grad();
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
  EXPECT_DOUBLE_EQ(g[2], 6.0);
}

TEST(Autodiff, MeanGradient) {
  const Tensor x = Tensor::vector({5, -1, 2, 7}, true);
  backward(mean(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.25);
}

TEST(Autodiff, LeafGradientsAccumulateAcrossCalls) {
  Tensor x = Tensor::vector({1, 2}, true);
  backward(sum(x * 3.0));
  backward(sum(x * 3.0));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Autodiff, ReusedTensorGetsSummedGradient) {
  // y = x * x + x: dy/dx = 2x + 1
  const Tensor x = Tensor::scalar(3.0, true);
  backward(x * x + x);
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Autodiff, BackwardRequiresScalarLossWithGradient) {
  const Tensor x = Tensor::vector({1, 2}, true);
  EXPECT_THROW(backward(x * 2.0), ShapeError);
  EXPECT_THROW(backward(sum(Tensor::vector({1, 2}))), std::logic_error);
}

TEST(Autodiff, NoGradGuardSkipsRecording) {
  const Tensor x = Tensor::vector({1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = sum(x * x);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(Autodiff, NoGradGuardIsPerThread) {
  NoGradGuard guard;
  bool other = false;
  std::thread t([&] { other = grad_enabled(); });
  t.join();
  EXPECT_TRUE(other);
  EXPECT_FALSE(grad_enabled());
}

TEST(Autodiff, GraphOrderIsTopological) {
  Rng rng(3);
  const Tensor w = random_tensor({2, 3}, rng);
  const Tensor x = random_tensor({4, 3}, rng);
  const Tensor loss = mean(sigmoid(matmul(x, w, true)));
  const auto graph = collect_graph(loss);
  ASSERT_GE(graph.size(), 3u);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (i > 0) EXPECT_LT(graph[i - 1].sequence, graph[i].sequence);
    for (auto in : graph[i].input_sequences) {
      if (in != 0) EXPECT_LT(in, graph[i].sequence);
    }
  }
  EXPECT_EQ(graph.back().op, OpTag::mean);
}

TEST(Autodiff, DetachCutsTheGraph) {
  const Tensor x = Tensor::vector({1, 2}, true);
  const Tensor d = (x * 2.0).detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_EQ(d[1], 4.0);
}

// Finite-difference checks on every differentiable primitive.

GradCheckReport check(const std::function<Tensor()>& f, std::vector<Tensor> params) {
  return grad_check(f, std::move(params), {}, 1e-5, 1e-4);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  const Tensor x = Tensor::vector({1, 2}, true);
  const Tensor c = Tensor::scalar(3.0, true);
  const auto rep = check([&] { return c * 1.0 + sum(x) * 0.0; }, {x});
  EXPECT_TRUE(rep.passed());
  EXPECT_LT(rep.worst(), 1e-6);
}

TEST(GradCheck, QuadraticForm) {
  Rng rng(10);
  const Tensor A = random_tensor({4, 4}, rng, false);
  const Tensor x = random_tensor({1, 4}, rng);
  const auto rep = grad_check([&] { return sum(matmul(x, A) * x); }, {x}, {"x"}, 1e-5, 1e-6);
  EXPECT_TRUE(rep.passed()) << rep.worst();
}

TEST(GradCheck, SigmoidOfAffine) {
  Rng rng(11);
  const Tensor w = random_tensor({1, 3}, rng);
  const Tensor x = random_tensor({5, 3}, rng, false);
  EXPECT_TRUE(check([&] { return sum(sigmoid(matmul(x, w, true))); }, {w}).passed());
}

class PrimitiveGrad : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGrad, MatchesFiniteDifferences) {
  Rng rng(100 + GetParam());
  // Random small shapes, positive inputs where the op requires them.
  const std::size_t r = 1 + rng.below(3), c = 1 + rng.below(4);
  const Tensor a = random_tensor({r, c}, rng, true, 0.2, 1.5);
  const Tensor b = random_tensor({r, c}, rng, true, -1.0, 1.0);
  const Tensor row = random_tensor({c}, rng, true);
  const Tensor m = random_tensor({c, 2}, rng, true);
  const Tensor weights = random_tensor({r, c}, rng, false);
  auto scalarize = [&](const Tensor& t) {
    if (t.shape() == weights.shape()) return sum(t * weights);
    return sum(t * t);
  };
  std::vector<std::pair<std::string, std::function<Tensor()>>> cases = {
      {"add", [&] { return scalarize(a + b); }},
      {"sub", [&] { return scalarize(a - b); }},
      {"mul", [&] { return scalarize(a * b); }},
      {"broadcast_add", [&] { return scalarize(a + row); }},
      {"broadcast_mul", [&] { return scalarize(b * row); }},
      {"matmul", [&] { return scalarize(matmul(b, m)); }},
      {"sigmoid", [&] { return scalarize(sigmoid(b)); }},
      {"tanh", [&] { return scalarize(tanh(b)); }},
      {"relu", [&] { return scalarize(relu(b)); }},
      {"exp", [&] { return scalarize(exp(b)); }},
      {"log", [&] { return scalarize(log(a)); }},
      {"softplus", [&] { return scalarize(softplus(b)); }},
      {"softmax", [&] { return scalarize(softmax_last_axis(b)); }},
      {"sum_axis", [&] { return scalarize(sum(b, 0)); }},
      {"mean_axis", [&] { return scalarize(mean(a, 1)); }},
      {"mean", [&] { return mean(a * b); }},
      {"concat", [&] {
         const Tensor parts[] = {a, b};
         return scalarize(concat_last_axis(parts));
       }},
      {"slice", [&] { return scalarize(slice(b, 1, 0, 1)); }},
      {"broadcast", [&] { return scalarize(broadcast(row, {r, c})); }},
      {"scalar_ops", [&] { return scalarize(add_scalar(b * 2.5, -0.3)); }},
      {"reshape", [&] { return scalarize(reshape(reshape(b, {r * c}), {r, c})); }},
  };
  for (const auto& [name, f] : cases) {
    // relu is not differentiable at 0; random inputs avoid it almost surely.
    const auto rep = check(f, {a, b, row, m});
    EXPECT_TRUE(rep.passed()) << name << " worst rel err " << rep.worst();
  }
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, PrimitiveGrad, ::testing::Range(0, 5));

}  // namespace
}  // namespace uqfire
