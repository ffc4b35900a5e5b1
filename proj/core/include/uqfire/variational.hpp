#pragma once

// Bayes-by-Backprop building blocks: a factorised Gaussian posterior per
// weight tensor, reparameterised sampling and the closed-form KL divergence
// to a zero-mean Gaussian prior.

#include "uqfire/rng.hpp"
#include "uqfire/tensor.hpp"

namespace uqfire {

struct VariationalParameter {
  Tensor mu;
  Tensor rho;  // sigma = softplus(rho)
  double prior_std = 1.0;

  /// mu as given, rho filled with rho_init.
  static VariationalParameter from_mean(Tensor mu, double rho_init, double prior_std,
                                        bool requires_grad = true);
  const Shape& shape() const { return mu.shape(); }
};

/// mu + softplus(rho) * eps with eps ~ N(0,1) drawn from rng in element
/// order. Differentiable w.r.t. mu and rho. sigma_scale multiplies the
/// posterior standard deviation (1 = the learned posterior).
Tensor sample_weights(const VariationalParameter& vp, Rng& rng, double sigma_scale = 1.0);

/// Same as sample_weights with caller-supplied noise (same shape as mu).
Tensor sample_weights_with_noise(const VariationalParameter& vp, const Tensor& eps,
                                 double sigma_scale = 1.0);

/// KL[q || p] summed over elements, q = N(mu, sigma^2), p = N(0, prior_std^2):
///   sum log(prior/sigma) + (sigma^2 + mu^2) / (2 prior^2) - 1/2
/// Returned as a differentiable scalar tensor.
Tensor kl_gaussian(const VariationalParameter& vp);

/// Elementwise closed form for plain numbers.
double kl_gaussian(double mu, double sigma, double prior_std);

/// log N(w; mean, std^2).
double gaussian_log_density(double w, double mean, double std);

}  // namespace uqfire
