#include "support.hpp"

#include <atomic>
#include <unistd.h>

#include <cmath>

namespace uqfire::testing {

namespace {
std::atomic<int> counter{0};
}

TempDir::TempDir(const std::string& tag) {
  path_ = std::filesystem::temp_directory_path() /
          ("uqfire_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<PredictionRow> random_rows(Rng& rng, std::size_t n) {
  std::vector<PredictionRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    r.record_id = "R" + std::to_string(i);
    r.label = i < 2 ? static_cast<int>(i) : (rng.bernoulli(0.4) ? 1 : 0);
    r.p_class1 = std::round(rng.uniform() * 1000.0) / 1000.0;  // forces some ties
    r.eu = rng.uniform() * 0.05;
    r.au = rng.uniform() * 0.2;
    r.tu = r.eu + r.au;
    r.predicted_class = r.p_class1 > 0.5 ? 1 : 0;
    r.correct = r.predicted_class == r.label;
  }
  return rows;
}

PredictiveSampleSet random_sample_set(Rng& rng, std::size_t n, std::size_t s, std::size_t k) {
  PredictiveSampleSet set(n, s, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        set.at(i, j, c) = -std::log(1.0 - rng.uniform());
        total += set.at(i, j, c);
      }
      for (std::size_t c = 0; c < k; ++c) set.at(i, j, c) /= total;
    }
  }
  return set;
}

}  // namespace uqfire::testing
