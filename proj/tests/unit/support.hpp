#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uqfire/rng.hpp"
#include "uqfire/uncertainty.hpp"

namespace uqfire::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Random prediction rows with both labels present; uncertainties are
/// unrelated to correctness.
std::vector<PredictionRow> random_rows(Rng& rng, std::size_t n);

/// Random N x S x K grid on the simplex.
PredictiveSampleSet random_sample_set(Rng& rng, std::size_t n, std::size_t s, std::size_t k);

}  // namespace uqfire::testing
