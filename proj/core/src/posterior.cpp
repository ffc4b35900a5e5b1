#include "uqfire/posterior.hpp"

#include <stdexcept>

namespace uqfire {

std::string_view strategy_name(SamplerStrategy s) {
  switch (s) {
    case SamplerStrategy::deterministic: return "deterministic";
    case SamplerStrategy::mc_dropout: return "mc_dropout";
    case SamplerStrategy::bbb: return "bbb";
    case SamplerStrategy::deep_ensemble: return "deep_ensemble";
  }
  return "unknown";
}

PosteriorSampler::PosteriorSampler(SamplerStrategy strategy, std::vector<Model> members,
                                   std::size_t n_samples)
    : strategy_(strategy), members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("sampler: no models");
  for (std::size_t m = 0; m < members_.size(); ++m) {
    if (!members_[m].trained()) {
      throw std::invalid_argument("sampler: model " + std::to_string(m) + " is not trained");
    }
    if (!(members_[m].architecture() == members_.front().architecture())) {
      throw std::invalid_argument("sampler: ensemble members differ in architecture");
    }
  }
  const bool variational = members_.front().kind() == WeightKind::variational;
  switch (strategy_) {
    case SamplerStrategy::deterministic:
      if (members_.size() != 1 || variational || (n_samples != 0 && n_samples != 1)) {
        throw std::invalid_argument("sampler: deterministic needs one deterministic model, N = 1");
      }
      n_ = 1;
      break;
    case SamplerStrategy::mc_dropout:
      if (members_.size() != 1 || variational) {
        throw std::invalid_argument("sampler: mc_dropout needs one deterministic model");
      }
      n_ = n_samples ? n_samples : kDefaultMcSamples;
      break;
    case SamplerStrategy::bbb:
      if (members_.size() != 1 || !variational) {
        throw std::invalid_argument("sampler: bbb needs one variational model");
      }
      n_ = n_samples ? n_samples : kDefaultMcSamples;
      break;
    case SamplerStrategy::deep_ensemble:
      if (members_.size() < 2 || variational) {
        throw std::invalid_argument("sampler: deep_ensemble needs >= 2 deterministic members");
      }
      if (n_samples != 0 && n_samples != members_.size()) {
        throw std::invalid_argument("sampler: deep_ensemble N must equal the member count");
      }
      n_ = members_.size();
      break;
  }
}

NetworkWeights PosteriorSampler::weights_for(std::size_t i, Rng& weight_rng) const {
  if (i >= n_) throw std::out_of_range("sampler: sample index out of range");
  switch (strategy_) {
    case SamplerStrategy::bbb: return members_.front().sample_weights(weight_rng, sigma_scale_);
    case SamplerStrategy::deep_ensemble: return members_[i].mean_weights();
    default: return members_.front().mean_weights();
  }
}

std::vector<NetworkOutput> draw_predictions(const PosteriorSampler& sampler, const Tensor& x,
                                            Rng& rng) {
  NoGradGuard no_grad;
  Rng weight_rng(rng.next_u64());
  Rng dropout_rng(rng.next_u64());
  std::vector<NetworkOutput> out;
  out.reserve(sampler.size());
  for (std::size_t i = 0; i < sampler.size(); ++i) {
    const NetworkWeights w = sampler.weights_for(i, weight_rng);
    out.push_back(network_forward(sampler.architecture(), w, x, sampler.dropout_mode(), dropout_rng));
  }
  return out;
}

}  // namespace uqfire
