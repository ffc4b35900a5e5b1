#pragma once

#include <string_view>
#include <vector>

#include "uqfire/network.hpp"

namespace uqfire {

enum class SamplerStrategy { deterministic, mc_dropout, bbb, deep_ensemble };

inline constexpr std::size_t kDefaultMcSamples = 50;
inline constexpr std::size_t kDefaultEnsembleSize = 10;

std::string_view strategy_name(SamplerStrategy s);

/// Uniform way to draw N weight configurations from a trained posterior
/// approximation:
///   deterministic  one pass, dropout off (N = 1)
///   mc_dropout     N passes with fresh dropout masks
///   bbb            N independent draws from the variational posterior
///   deep_ensemble  one pass per member, in member order (N = M)
class PosteriorSampler {
 public:
  /// n_samples == 0 selects the strategy default. Throws std::invalid_argument
  /// for untrained models or inconsistent strategy/model combinations.
  PosteriorSampler(SamplerStrategy strategy, std::vector<Model> members,
                   std::size_t n_samples = 0);

  SamplerStrategy strategy() const { return strategy_; }
  std::size_t size() const { return n_; }
  const std::vector<Model>& members() const { return members_; }
  const Architecture& architecture() const { return members_.front().architecture(); }
  DropoutMode dropout_mode() const {
    return strategy_ == SamplerStrategy::mc_dropout ? DropoutMode::train : DropoutMode::eval;
  }

  /// Multiplies every posterior sigma when drawing bbb weights.
  void set_sigma_scale(double scale) { sigma_scale_ = scale; }
  double sigma_scale() const { return sigma_scale_; }

  /// Weights for sample i. bbb draws from weight_rng; the other strategies
  /// ignore it.
  NetworkWeights weights_for(std::size_t i, Rng& weight_rng) const;

 private:
  SamplerStrategy strategy_;
  std::vector<Model> members_;
  std::size_t n_ = 1;
  double sigma_scale_ = 1.0;
};

/// N forward passes on x (batch x T x F), ordered by sample index. Weight
/// noise and dropout masks come from two streams split off rng.
std::vector<NetworkOutput> draw_predictions(const PosteriorSampler& sampler, const Tensor& x,
                                            Rng& rng);

}  // namespace uqfire
