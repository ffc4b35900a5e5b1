#pragma once

// Double Monte-Carlo predictive distribution with variance-based
// decomposition. For N weight samples and S logit-noise samples per weight
// sample, with p[i,s,c] the class probabilities:
//
//   pbar[i,c] = 1/S sum_s p[i,s,c]
//   p[c]      = 1/N sum_i pbar[i,c]
//   EU[c]     = 1/N sum_i (pbar[i,c] - p[c])^2
//   AU[c]     = 1/N sum_i 1/S sum_s (p[i,s,c] - pbar[i,c])^2
//   TU[c]     = 1/(NS) sum_i sum_s (p[i,s,c] - p[c])^2
//
// No Bessel correction anywhere; with these conventions TU = EU + AU holds
// as an algebraic identity.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "uqfire/data.hpp"
#include "uqfire/posterior.hpp"

namespace uqfire {

struct PredictiveSampleSet {
  std::size_t N = 0;
  std::size_t S = 0;
  std::size_t K = 0;
  std::vector<double> probs;  // N x S x K, row-major

  PredictiveSampleSet() = default;
  PredictiveSampleSet(std::size_t n, std::size_t s, std::size_t k)
      : N(n), S(s), K(k), probs(n * s * k, 0.0) {}

  double at(std::size_t i, std::size_t s, std::size_t c) const { return probs[(i * S + s) * K + c]; }
  double& at(std::size_t i, std::size_t s, std::size_t c) { return probs[(i * S + s) * K + c]; }

  /// Throws std::invalid_argument unless every (i,s) row lies on the simplex.
  void validate(double tol = 1e-10) const;
};

struct UncertaintyReport {
  std::vector<double> p;
  std::vector<double> eu;
  std::vector<double> au;
  std::vector<double> tu;
  std::size_t predicted_class = 0;
  SamplerStrategy sampler = SamplerStrategy::deterministic;
  std::size_t N = 0;
  std::size_t S = 0;
};

/// Reduces a sample set to mean prediction and EU/AU/TU per class.
UncertaintyReport decompose(const PredictiveSampleSet& set,
                            SamplerStrategy sampler = SamplerStrategy::deterministic);

/// max_c |TU_c - (EU_c + AU_c)|.
double verify_decomposition(const PredictiveSampleSet& set);

/// How a K-class report is collapsed to the scalar written to prediction
/// files. For K = 2 all choices coincide; positive_class reports class 1.
enum class UncertaintyReduction { positive_class, predicted_class, max_over_classes };

double scalar_uncertainty(const std::vector<double>& per_class, std::size_t predicted_class,
                          UncertaintyReduction reduction);

struct InferenceOptions {
  std::size_t logit_samples = kDefaultLogitSamples;  // forced to 1 without an AU head
  double temperature = kDefaultTemperature;
  std::uint64_t seed = 0;
  std::size_t chunk = 256;
  std::size_t jobs = 1;
  UncertaintyReduction reduction = UncertaintyReduction::positive_class;
};

/// Builds the N x S x K sample set for every row of x (batch x T x F).
/// Weight noise, dropout masks and logit noise use streams split off rng.
std::vector<PredictiveSampleSet> sample_predictive(const PosteriorSampler& sampler,
                                                   const Tensor& x, std::size_t S,
                                                   double temperature, Rng& rng);

/// Full pipeline for a single input (x is 1 x T x F). Without an AU head
/// S is forced to 1 and AU is exactly 0. Throws on S == 0.
UncertaintyReport predict_with_uncertainty(const PosteriorSampler& sampler, const Tensor& x,
                                           std::size_t S, double temperature, Rng& rng);

/// One report per instance, in input order. Record r draws dropout masks and
/// logit noise from streams keyed by (seed, r), and all records share the N
/// weight draws from the seed's weight stream, so output does not depend on
/// chunking or thread count.
std::vector<UncertaintyReport> batch_reports(const PosteriorSampler& sampler,
                                             std::span<const WindowedInstance> instances,
                                             const InferenceOptions& options);

/// One row of the prediction file.
struct PredictionRow {
  std::string record_id;
  int label = 0;
  double weight = 1.0;
  int lead_time = 1;
  double p_class1 = 0.0;
  double eu = 0.0;
  double au = 0.0;
  double tu = 0.0;
  int predicted_class = 0;
  int correct = 0;

  bool operator==(const PredictionRow&) const = default;
};

inline constexpr std::string_view kPredictionHeader =
    "record_id,label,weight,lead_time,p_class1,eu,au,tu,predicted_class,correct";

std::vector<PredictionRow> to_prediction_rows(std::span<const WindowedInstance> instances,
                                              std::span<const UncertaintyReport> reports,
                                              UncertaintyReduction reduction =
                                                  UncertaintyReduction::positive_class);

void write_predictions(std::span<const PredictionRow> rows, std::ostream& out);
std::vector<PredictionRow> read_predictions(std::istream& in);
void save_predictions(std::span<const PredictionRow> rows, const std::string& path);
std::vector<PredictionRow> load_predictions(const std::string& path);

}  // namespace uqfire
