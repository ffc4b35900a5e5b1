#pragma once

// Heteroscedastic classification head. Logits are Gaussian,
// u_c = f_c(x) + sigma_c(x) * mu_c with mu_c ~ N(0,1), and the class
// probability is the Monte-Carlo mean of softmax(u / tau).

#include <span>
#include <vector>

#include "uqfire/layers.hpp"
#include "uqfire/rng.hpp"
#include "uqfire/tensor.hpp"

namespace uqfire {

inline constexpr double kDefaultTemperature = 0.2;
inline constexpr std::size_t kDefaultLogitSamples = 1000;
inline constexpr double kProbabilityFloor = 1e-12;

struct HeteroHead {
  LinearLayer mean_branch;   // features -> K logits f
  LinearLayer scale_branch;  // features -> K, softplus -> sigma
  double temperature = kDefaultTemperature;
  std::size_t samples = kDefaultLogitSamples;
};

struct LogitParams {
  Tensor f;      // batch x K
  Tensor sigma;  // batch x K, > 0
};

LogitParams predict_logit_params(const HeteroHead& head, const Tensor& features);

/// sigma = softplus(scale_branch(features)).
Tensor logit_scale(const LinearLayer& scale_branch, const Tensor& features);

struct TemperedSoftmaxResult {
  Tensor p;        // batch x K, mean over samples
  Tensor samples;  // batch x S x K
};

/// Differentiable MC estimate. Noise is drawn from rng in (row, sample,
/// class) order. Throws std::invalid_argument unless tau > 0 and S >= 1.
TemperedSoftmaxResult tempered_softmax_mc(const Tensor& f, const Tensor& sigma, double tau,
                                          std::size_t S, Rng& rng);

/// Variant with caller-supplied standard-normal noise of shape batch x S x K.
TemperedSoftmaxResult tempered_softmax_with_noise(const Tensor& f, const Tensor& sigma,
                                                  double tau, const Tensor& noise);

/// Plain-number kernel for one input row: writes S x K probabilities into
/// out, drawing noise from rng in (sample, class) order, identical to the
/// tensor path for a single row.
void tempered_softmax_row(std::span<const double> f, std::span<const double> sigma,
                          double tau, std::size_t S, Rng& rng, std::span<double> out);

/// -sum_b w_b log(p[b, y_b] + 1e-12) / sum_b w_b. Throws on labels outside
/// [0, K) or non-positive total weight.
Tensor weighted_nll(const Tensor& p, std::span<const int> labels,
                    std::span<const double> weights);

/// Negative log of the MC-averaged tempered-softmax probability.
Tensor hetero_nll_loss(const Tensor& p, std::span<const int> labels,
                       std::span<const double> weights);

}  // namespace uqfire
