#include <gtest/gtest.h>

#include <cmath>

#include "uqfire/grad_check.hpp"
#include "uqfire/network.hpp"
#include "uqfire/variational.hpp"

namespace uqfire {
namespace {

TEST(Variational, DegeneratePosteriorSamplesTheMean) {
  const auto vp = VariationalParameter::from_mean(Tensor::vector({0.3, -1.2, 4.0}), -40.0, 1.0);
  Rng rng(1);
  const Tensor w = sample_weights(vp, rng);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(std::abs(w[i] - vp.mu[i]), 1e-12);
  EXPECT_LT(softplus(Tensor::scalar(-40.0)).item(), 1e-17);
}

TEST(Variational, SampleIsMeanPlusScaledNoise) {
  const auto vp = VariationalParameter::from_mean(Tensor::vector({1.0, 2.0}), 0.5, 1.0);
  const Tensor eps = Tensor::vector({0.7, -1.3});
  const double sigma = std::log1p(std::exp(0.5));
  const Tensor w = sample_weights_with_noise(vp, eps);
  EXPECT_NEAR(w[0], 1.0 + sigma * 0.7, 1e-14);
  EXPECT_NEAR(w[1], 2.0 - sigma * 1.3, 1e-14);
  const Tensor half = sample_weights_with_noise(vp, eps, 0.5);
  EXPECT_NEAR(half[0], 1.0 + 0.5 * sigma * 0.7, 1e-14);
}

TEST(Variational, SamplingDrawsNoiseInElementOrder) {
  const auto vp = VariationalParameter::from_mean(Tensor::zeros({2, 2}), 0.0, 1.0);
  Rng a(7), b(7);
  const Tensor w = sample_weights(vp, a);
  const double sigma = std::log(2.0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], sigma * b.normal(), 1e-14);
}

TEST(Variational, SamplingGradientWithFixedNoise) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> mu(3), rho(3), e(3);
    for (std::size_t i = 0; i < 3; ++i) {
      mu[i] = rng.uniform(-1, 1);
      rho[i] = rng.uniform(-3, 1);
      e[i] = rng.normal();
    }
    VariationalParameter vp{Tensor({3}, mu, true), Tensor({3}, rho, true), 1.0};
    const Tensor eps({3}, e);
    const auto rep = grad_check(
        [&] {
          const Tensor w = sample_weights_with_noise(vp, eps);
          return sum(w * w * w) + kl_gaussian(vp);
        },
        {vp.mu, vp.rho}, {"mu", "rho"});
    EXPECT_TRUE(rep.passed()) << rep.worst();
  }
}

TEST(GaussianKl, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(kl_gaussian(0.0, 1.0, 1.0), 0.0);
  EXPECT_NEAR(kl_gaussian(1.0, 1.0, 1.0), 0.5, 1e-15);
  EXPECT_NEAR(kl_gaussian(0.0, 0.5, 1.0), 0.5 * (0.25 + 0.0 - 1.0 - std::log(0.25)), 1e-15);
  EXPECT_NEAR(kl_gaussian(0.0, 0.5, 1.0), 0.3181, 1e-4);
}

TEST(GaussianKl, TensorFormSumsElementwiseTerms) {
  VariationalParameter vp{Tensor::vector({1.0, 0.0}), Tensor::vector({0.2, -1.0}), 2.0};
  const double s0 = std::log1p(std::exp(0.2)), s1 = std::log1p(std::exp(-1.0));
  EXPECT_NEAR(kl_gaussian(vp).item(), kl_gaussian(1.0, s0, 2.0) + kl_gaussian(0.0, s1, 2.0),
              1e-14);
}

TEST(GaussianKl, AtPriorIsZero) {
  // softplus(rho) = 1 at rho = log(e - 1).
  VariationalParameter vp{Tensor::zeros({4}), Tensor::full({4}, std::log(std::exp(1.0) - 1.0)),
                          1.0};
  EXPECT_NEAR(kl_gaussian(vp).item(), 0.0, 1e-14);
}

TEST(GaussianKl, MatchesMonteCarloOfLogDensityRatio) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const double mu = rng.uniform(-2, 2), sigma = rng.uniform(0.1, 2), prior = rng.uniform(0.3, 3);
    const std::size_t draws = 100000;
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < draws; ++i) {
      const double w = mu + sigma * rng.normal();
      const double v = gaussian_log_density(w, mu, sigma) - gaussian_log_density(w, 0.0, prior);
      s += v;
      s2 += v * v;
    }
    const double mean = s / draws;
    const double se = std::sqrt((s2 / draws - mean * mean) / draws);
    EXPECT_LE(std::abs(mean - kl_gaussian(mu, sigma, prior)), 3.0 * se + 1e-12);
  }
}

TEST(GaussianKl, LogDensityOfStandardNormalAtZero) {
  EXPECT_NEAR(gaussian_log_density(0.0, 0.0, 1.0), -0.5 * std::log(2.0 * M_PI), 1e-15);
}

// One-parameter regression y ~ N(w, 1) with a N(0, 1) prior on w.
struct ToyProblem {
  std::vector<double> y{1.8, 2.4, 2.1, 1.7};
  double data(double w) const {
    double s = 0;
    for (double v : y) s += 0.5 * (w - v) * (w - v);
    return s / static_cast<double>(y.size());
  }
};

TEST(Elbo, KlWeightInterpolatesBetweenMleAndPriorMean) {
  const ToyProblem toy;
  const double mle = (1.8 + 2.4 + 2.1 + 1.7) / 4.0;
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 0.1, 1.0, 10.0, 1000.0}) {
    // Gradient descent on mu with a near-degenerate posterior.
    VariationalParameter vp{Tensor::vector({0.5}, true), Tensor::vector({-12.0}), 1.0};
    const Tensor eps = Tensor::vector({0.0});
    const double lr = 0.5 / (1.0 + lambda);
    for (int it = 0; it < 4000; ++it) {
      const Tensor w = sample_weights_with_noise(vp, eps);
      Tensor loss = Tensor::scalar(0.0);
      for (double v : toy.y) {
        const Tensor d = add_scalar(w, -v);
        loss = loss + sum(d * d) * (0.5 / static_cast<double>(toy.y.size()));
      }
      loss = loss + kl_gaussian(vp) * lambda;
      vp.mu.zero_grad();
      backward(loss);
      vp.mu.mutable_data()[0] -= lr * vp.mu.grad()[0];
    }
    // Grid-search oracle over the same objective.
    double best = 0, best_val = std::numeric_limits<double>::infinity();
    const double sigma = std::log1p(std::exp(-12.0));
    for (double m = -1.0; m <= 3.0; m += 1e-4) {
      const double v = toy.data(m) + lambda * kl_gaussian(m, sigma, 1.0);
      if (v < best_val) {
        best_val = v;
        best = m;
      }
    }
    const double learned = vp.mu[0];
    EXPECT_NEAR(learned, best, 2e-4) << "lambda " << lambda;
    EXPECT_LT(learned, previous + 1e-12);
    EXPECT_GE(learned, -1e-6);
    if (lambda == 0.0) {
      EXPECT_NEAR(learned, mle, 1e-6);
    }
    previous = learned;
  }
  EXPECT_LT(previous, 0.01);
}

TEST(Elbo, ZeroKlWeightEqualsDataLoss) {
  Rng rng(4);
  Architecture arch;
  arch.input_features = 2;
  arch.lstm_hidden = 3;
  arch.fc1 = 3;
  arch.fc2 = 2;
  arch.dropout = 0.0;
  const Model m = Model::create(arch, WeightKind::variational, rng);
  std::vector<WindowedInstance> inst(3);
  for (auto& i : inst) {
    i.features.resize(kWindowDays * 2);
    for (double& v : i.features) v = rng.normal();
    i.label = static_cast<int>(rng.below(2));
  }
  const Batch batch = make_batch(inst);
  LossOptions opt;
  opt.kl_weight = 0.0;
  Rng w(1), d(2), l(3);
  const auto terms = elbo_loss(m, batch, w, d, l, opt);
  EXPECT_EQ(terms.total.item(), terms.data_loss);
  EXPECT_GT(terms.kl, 0.0);

  opt.kl_weight = 0.25;
  Rng w2(1), d2(2), l2(3);
  const auto weighted = elbo_loss(m, batch, w2, d2, l2, opt);
  EXPECT_NEAR(weighted.total.item(), weighted.data_loss + 0.25 * weighted.kl, 1e-12);
  EXPECT_NEAR(weighted.kl, m.kl().item(), 1e-12);
}

}  // namespace
}  // namespace uqfire
