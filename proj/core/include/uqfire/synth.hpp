#pragma once

// Synthetic fire / non-fire records. Both classes share a seasonal cycle,
// an interannual drift and AR(1) day-to-day noise; the generating class adds
// an offset that is strongest on day t-1 and decays going back in time, so
// longer lead times see a weaker signal. Labels are flipped away from the
// generating class with a configurable probability.

#include <cstdint>
#include <string>
#include <vector>

#include "uqfire/data.hpp"
#include "uqfire/rng.hpp"

namespace uqfire {

struct SynthParams {
  std::size_t n_positives = 300;
  double noise_sigma = 1.0;         // AR noise scale, in feature standard units
  double seasonal_amplitude = 1.0;  // standard units
  double interannual_drift = 0.05;  // standard units per year
  double flip_rate = 0.0;           // mean P(label != generating class)
  /// 0 flips every label with flip_rate. h in (0, 1] modulates the flip
  /// probability over the year as flip_rate * (1 + h cos(2 pi (doy - 200) / 365)),
  /// so label noise is input dependent but has the same mean.
  double noise_heterogeneity = 0.0;
  int first_year = 2006;
  int last_year = 2022;
  std::size_t dynamic_dim = 4;
  std::size_t static_dim = 2;
  /// Expected day t-1 difference of the temperature feature between the
  /// two generating classes, in degrees.
  double class_gap = 10.0;
  double signal_decay_days = 6.0;
  double ar_coeff = 0.7;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Per-feature generating constants. Exposed so tests can build oracles.
struct FeatureProfile {
  std::string name;
  double base = 0.0;
  double scale = 1.0;
  double class_loading = 0.0;
  double seasonal_loading = 0.0;
  double drift_loading = 0.0;
};

std::vector<FeatureProfile> dynamic_profiles(std::size_t dynamic_dim);
std::vector<FeatureProfile> static_profiles(std::size_t static_dim);

/// Class offset (standard units, before loading) on observed row k for the
/// given generating class.
double class_signal(const SynthParams& params, int generating_class, std::size_t row);

/// n_positives fire records and 2 * n_positives non-fire records, in that
/// order. Deterministic for a given rng state.
Dataset synth_generate(const SynthParams& params, Rng& rng);

struct GridParams {
  std::size_t width = 8;
  std::size_t height = 8;
  Date date{2021, 7, 15};
};

/// One record per grid cell. Danger decreases from left (x = 0) to right:
/// the generating signal on column x is class_gap * (1 - 2x / (width - 1)),
/// so the outer columns are clear-cut and the middle is ambiguous. Labels
/// are the sign of that signal.
Dataset synth_grid(const SynthParams& params, const GridParams& grid, Rng& rng);

}  // namespace uqfire
