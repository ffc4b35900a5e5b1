#include "uqfire/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace uqfire {

void SynthParams::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("synth: " + what); };
  if (n_positives == 0) fail("positives must be >= 1");
  if (!(noise_sigma >= 0.0)) fail("noise sigma must be >= 0");
  if (!(seasonal_amplitude >= 0.0)) fail("seasonal amplitude must be >= 0");
  if (!std::isfinite(interannual_drift)) fail("interannual drift must be finite");
  if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) fail("flip rate must lie in [0, 1]");
  if (!(noise_heterogeneity >= 0.0 && noise_heterogeneity <= 1.0)) {
    fail("noise heterogeneity must lie in [0, 1]");
  }
  if (first_year > last_year) fail("first year after last year");
  if (first_year < 1900 || last_year > 2200) fail("years outside 1900..2200");
  if (dynamic_dim == 0) fail("dynamic feature count must be >= 1");
  if (!std::isfinite(class_gap)) fail("class gap must be finite");
  if (!(signal_decay_days > 0.0)) fail("signal decay must be > 0");
  if (!(ar_coeff > -1.0 && ar_coeff < 1.0)) fail("AR coefficient must lie in (-1, 1)");
}

std::vector<FeatureProfile> dynamic_profiles(std::size_t dynamic_dim) {
  static const FeatureProfile named[] = {
      {"temperature", 20.0, 5.0, 1.0, 1.0, 1.0},
      {"relative_humidity", 50.0, 10.0, -1.0, -1.0, -0.5},
      {"ndvi", 0.5, 0.1, -0.5, 0.5, -0.2},
      {"wind_speed", 4.0, 2.0, 0.5, 0.2, 0.0},
      {"soil_moisture", 0.2, 0.05, -0.8, -0.7, -0.3},
      {"dewpoint", 8.0, 3.0, -0.3, 0.8, 0.2},
  };
  std::vector<FeatureProfile> out;
  for (std::size_t j = 0; j < dynamic_dim; ++j) {
    if (j < std::size(named)) {
      out.push_back(named[j]);
    } else {
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      out.push_back({"dynamic_" + std::to_string(j), 0.0, 1.0, 0.5 * sign, 0.3 * sign, 0.0});
    }
  }
  return out;
}

std::vector<FeatureProfile> static_profiles(std::size_t static_dim) {
  static const FeatureProfile named[] = {
      {"population", 100.0, 50.0, 0.2, 0.0, 0.0},
      {"elevation", 400.0, 200.0, -0.1, 0.0, 0.0},
      {"slope", 10.0, 5.0, 0.0, 0.0, 0.0},
      {"roads_distance", 2.0, 1.0, -0.1, 0.0, 0.0},
  };
  std::vector<FeatureProfile> out;
  for (std::size_t j = 0; j < static_dim; ++j) {
    if (j < std::size(named)) {
      out.push_back(named[j]);
    } else {
      out.push_back({"static_" + std::to_string(j), 0.0, 1.0, 0.0, 0.0, 0.0});
    }
  }
  return out;
}

double class_signal(const SynthParams& params, int generating_class, std::size_t row) {
  // Standardised so that the temperature feature (loading 1, scale 5)
  // differs by class_gap degrees on the last observed day.
  const double half_gap = 0.5 * params.class_gap / 5.0;
  const double age = static_cast<double>(kObservedDays - 1 - row);
  const double sign = generating_class == 1 ? 1.0 : -1.0;
  return sign * half_gap * std::exp(-age / params.signal_decay_days);
}

namespace {

DatasetSchema make_schema(const SynthParams& p) {
  DatasetSchema s;
  for (const auto& f : dynamic_profiles(p.dynamic_dim)) s.dynamic_features.push_back(f.name);
  for (const auto& f : static_profiles(p.static_dim)) s.static_features.push_back(f.name);
  return s;
}

std::string padded(char prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return prefix + digits;
}

// Fills dynamic and static values. signal_of(row) is the class offset in
// standard units before per-feature loadings.
template <typename SignalFn>
void fill_features(const SynthParams& p, SampleRecord& r, SignalFn signal_of, Rng& rng) {
  const auto dyn = dynamic_profiles(p.dynamic_dim);
  const auto sta = static_profiles(p.static_dim);
  const int doy = r.date.day_of_year();
  const double years = static_cast<double>(r.date.year - p.first_year);
  const double innovation = std::sqrt(1.0 - p.ar_coeff * p.ar_coeff);

  std::vector<double> ar(dyn.size());
  for (auto& e : ar) e = rng.normal();
  r.dynamic.assign(kObservedDays * dyn.size(), 0.0);
  for (std::size_t k = 0; k < kObservedDays; ++k) {
    const double day = static_cast<double>(doy) - static_cast<double>(kObservedDays - k);
    const double season = std::sin(2.0 * std::numbers::pi * (day - 80.0) / 365.0);
    const double signal = signal_of(k);
    for (std::size_t j = 0; j < dyn.size(); ++j) {
      if (k > 0) ar[j] = p.ar_coeff * ar[j] + innovation * rng.normal();
      const auto& f = dyn[j];
      const double z = p.seasonal_amplitude * f.seasonal_loading * season +
                       p.interannual_drift * f.drift_loading * years +
                       p.noise_sigma * ar[j] + f.class_loading * signal;
      r.dynamic[k * dyn.size() + j] = f.base + f.scale * z;
    }
  }
  const double last_signal = signal_of(kObservedDays - 1);
  r.statics.clear();
  for (const auto& f : sta) {
    const double z = rng.normal() + f.class_loading * last_signal;
    r.statics.push_back(f.base + f.scale * z);
  }
}

}  // namespace

Dataset synth_generate(const SynthParams& params, Rng& rng) {
  params.validate();
  Dataset ds;
  ds.schema = make_schema(params);
  const std::size_t n_pos = params.n_positives;
  const std::size_t n_neg = 2 * n_pos;
  const std::size_t pool = std::max<std::size_t>(1, n_pos / 3);
  const auto years = static_cast<std::uint64_t>(params.last_year - params.first_year + 1);

  ds.records.reserve(n_pos + n_neg);
  for (std::size_t i = 0; i < n_pos + n_neg; ++i) {
    SampleRecord r;
    r.label = i < n_pos ? 1 : 0;
    r.record_id = padded('R', i);
    const int year = params.first_year + static_cast<int>(rng.below(years));
    const int doy = 1 + static_cast<int>(rng.below(365));
    r.date = Date::from_day_of_year(year, doy);
    const double phase = 2.0 * std::numbers::pi * (doy - 200) / 365.0;
    const double flip = std::min(
        1.0, params.flip_rate * (1.0 + params.noise_heterogeneity * std::cos(phase)));
    const bool flipped = rng.bernoulli(flip);
    const int generating = flipped ? 1 - r.label : r.label;
    if (r.label == 1) {
      r.location = padded('P', rng.below(pool));
      r.burned_area_ha = std::exp(2.0 + 1.5 * rng.normal());
    } else {
      r.location = padded('N', i - n_pos);
    }
    fill_features(params, r, [&](std::size_t k) { return class_signal(params, generating, k); },
                  rng);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset synth_grid(const SynthParams& params, const GridParams& grid, Rng& rng) {
  params.validate();
  if (grid.width == 0 || grid.height == 0) throw std::invalid_argument("synth: empty grid");
  Dataset ds;
  ds.schema = make_schema(params);
  for (std::size_t y = 0; y < grid.height; ++y) {
    for (std::size_t x = 0; x < grid.width; ++x) {
      const double frac =
          grid.width > 1 ? static_cast<double>(x) / static_cast<double>(grid.width - 1) : 0.0;
      const double strength = 1.0 - 2.0 * frac;
      SampleRecord r;
      r.record_id = "C" + std::to_string(x) + "_" + std::to_string(y);
      r.location = r.record_id;
      r.coords = GridCoord{static_cast<double>(x), static_cast<double>(y)};
      r.date = grid.date;
      r.label = strength > 0.0 ? 1 : 0;
      r.burned_area_ha = 0.0;
      fill_features(params, r,
                    [&](std::size_t k) { return strength * class_signal(params, 1, k); }, rng);
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

}  // namespace uqfire
