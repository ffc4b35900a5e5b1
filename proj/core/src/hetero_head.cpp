#include "uqfire/hetero_head.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uqfire {

namespace {

void check_tau_samples(double tau, std::size_t S) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (S == 0) throw std::invalid_argument("logit sample count must be >= 1");
}

}  // namespace

Tensor logit_scale(const LinearLayer& scale_branch, const Tensor& features) {
  return softplus(linear_forward(scale_branch, features));
}

LogitParams predict_logit_params(const HeteroHead& head, const Tensor& features) {
  if (head.mean_branch.weight.shape() != head.scale_branch.weight.shape()) {
    throw ShapeError("hetero head: mean and scale branches differ in shape");
  }
  return {linear_forward(head.mean_branch, features), logit_scale(head.scale_branch, features)};
}

TemperedSoftmaxResult tempered_softmax_with_noise(const Tensor& f, const Tensor& sigma,
                                                  double tau, const Tensor& noise) {
  if (f.rank() != 2 || sigma.shape() != f.shape()) {
    throw ShapeError("tempered_softmax: f " + shape_to_string(f.shape()) + " vs sigma " +
                     shape_to_string(sigma.shape()));
  }
  const std::size_t B = f.dim(0), K = f.dim(1);
  if (noise.rank() != 3 || noise.dim(0) != B || noise.dim(2) != K) {
    throw ShapeError("tempered_softmax: noise " + shape_to_string(noise.shape()) +
                     " must be batch x S x K");
  }
  check_tau_samples(tau, noise.dim(1));
  const Tensor f3 = reshape(f, {B, 1, K});
  const Tensor s3 = reshape(sigma, {B, 1, K});
  const Tensor u = add(f3, mul(s3, noise));
  Tensor samples = softmax_last_axis(scalar_mul(u, 1.0 / tau));
  Tensor p = mean(samples, 1);
  return {std::move(p), std::move(samples)};
}

TemperedSoftmaxResult tempered_softmax_mc(const Tensor& f, const Tensor& sigma, double tau,
                                          std::size_t S, Rng& rng) {
  check_tau_samples(tau, S);
  if (f.rank() != 2) throw ShapeError("tempered_softmax: f must be batch x K");
  const std::size_t B = f.dim(0), K = f.dim(1);
  std::vector<double> noise(B * S * K);
  for (double& v : noise) v = rng.normal();
  return tempered_softmax_with_noise(f, sigma, tau, Tensor({B, S, K}, std::move(noise)));
}

void tempered_softmax_row(std::span<const double> f, std::span<const double> sigma, double tau,
                          std::size_t S, Rng& rng, std::span<double> out) {
  check_tau_samples(tau, S);
  const std::size_t K = f.size();
  if (sigma.size() != K || out.size() != S * K) {
    throw ShapeError("tempered_softmax_row: size mismatch");
  }
  const double inv_tau = 1.0 / tau;
  for (std::size_t s = 0; s < S; ++s) {
    double* row = out.data() + s * K;
    double top = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      row[k] = (f[k] + sigma[k] * rng.normal()) * inv_tau;
      top = std::max(top, row[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      row[k] = std::exp(row[k] - top);
      z += row[k];
    }
    for (std::size_t k = 0; k < K; ++k) row[k] /= z;
  }
}

Tensor weighted_nll(const Tensor& p, std::span<const int> labels,
                    std::span<const double> weights) {
  if (p.rank() != 2) throw ShapeError("weighted_nll: p must be batch x K");
  const std::size_t B = p.dim(0), K = p.dim(1);
  if (labels.size() != B || weights.size() != B) {
    throw ShapeError("weighted_nll: need one label and weight per row of " +
                     shape_to_string(p.shape()));
  }
  if (B == 0) throw std::invalid_argument("weighted_nll: empty batch");
  std::vector<double> select(B * K, 0.0);
  double total_weight = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K) {
      throw std::invalid_argument("weighted_nll: label " + std::to_string(labels[b]) +
                                  " outside [0," + std::to_string(K) + ")");
    }
    if (!(weights[b] >= 0.0)) throw std::invalid_argument("weighted_nll: negative weight");
    select[b * K + static_cast<std::size_t>(labels[b])] = 1.0;
    total_weight += weights[b];
  }
  if (!(total_weight > 0.0)) throw std::invalid_argument("weighted_nll: total weight is zero");
  const Tensor picked = sum(mul(p, Tensor({B, K}, std::move(select))), 1);
  const Tensor logp = log(add_scalar(picked, kProbabilityFloor));
  const Tensor w(Shape{B}, std::vector<double>(weights.begin(), weights.end()));
  return scalar_mul(sum(mul(logp, w)), -1.0 / total_weight);
}

Tensor hetero_nll_loss(const Tensor& p, std::span<const int> labels,
                       std::span<const double> weights) {
  return weighted_nll(p, labels, weights);
}

}  // namespace uqfire
