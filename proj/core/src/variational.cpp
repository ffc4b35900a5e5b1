#include "uqfire/variational.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace uqfire {

VariationalParameter VariationalParameter::from_mean(Tensor mu, double rho_init,
                                                     double prior_std, bool requires_grad) {
  if (!(prior_std > 0.0)) throw std::invalid_argument("prior_std must be > 0");
  VariationalParameter vp;
  vp.rho = Tensor::full(mu.shape(), rho_init, requires_grad);
  vp.mu = Tensor(mu.shape(), std::vector<double>(mu.data().begin(), mu.data().end()),
                 requires_grad);
  vp.prior_std = prior_std;
  return vp;
}

Tensor sample_weights_with_noise(const VariationalParameter& vp, const Tensor& eps,
                                 double sigma_scale) {
  if (eps.shape() != vp.mu.shape() || vp.rho.shape() != vp.mu.shape()) {
    throw ShapeError("sample_weights: mu " + shape_to_string(vp.mu.shape()) + ", rho " +
                     shape_to_string(vp.rho.shape()) + ", eps " + shape_to_string(eps.shape()));
  }
  Tensor sigma = softplus(vp.rho);
  if (sigma_scale != 1.0) sigma = scalar_mul(sigma, sigma_scale);
  return add(vp.mu, mul(sigma, eps));
}

Tensor sample_weights(const VariationalParameter& vp, Rng& rng, double sigma_scale) {
  std::vector<double> eps(vp.mu.size());
  for (double& e : eps) e = rng.normal();
  return sample_weights_with_noise(vp, Tensor(vp.mu.shape(), std::move(eps)), sigma_scale);
}

Tensor kl_gaussian(const VariationalParameter& vp) {
  const double p = vp.prior_std;
  const Tensor sigma = softplus(vp.rho);
  // log(prior/sigma) = log(prior) - log(sigma)
  const Tensor neg_log_sigma = scalar_mul(log(sigma), -1.0);
  const Tensor quad = scalar_mul(add(mul(sigma, sigma), mul(vp.mu, vp.mu)), 1.0 / (2.0 * p * p));
  const Tensor per_elem = add_scalar(add(neg_log_sigma, quad), std::log(p) - 0.5);
  return sum(per_elem);
}

double kl_gaussian(double mu, double sigma, double prior_std) {
  return std::log(prior_std / sigma) + (sigma * sigma + mu * mu) / (2.0 * prior_std * prior_std) -
         0.5;
}

double gaussian_log_density(double w, double mean, double std) {
  const double z = (w - mean) / std;
  return -0.5 * z * z - std::log(std) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace uqfire
