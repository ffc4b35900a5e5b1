#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace uqfire {

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

/// Seeded random stream. Every stochastic consumer owns one; streams never
/// share engine state, so consumers are reproducible independently.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Stream derived from a root seed and a consumer name, e.g.
  /// Rng::stream(seed, "weight_noise").
  static Rng stream(std::uint64_t root_seed, std::string_view name);
  /// Stream for one item (record, member, lead) under a named consumer.
  static Rng stream(std::uint64_t root_seed, std::string_view name,
                    std::uint64_t index);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace uqfire
