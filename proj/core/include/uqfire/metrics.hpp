#pragma once

// Evaluation on prediction files: classification scores, calibration,
// and diagnostics relating the reported uncertainty to model error. All
// functions are pure.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqfire/data.hpp"
#include "uqfire/uncertainty.hpp"

namespace uqfire {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  bool no_positive_predictions = false;  // precision reported as 0
};

/// A row is predicted positive when p_class1 > threshold.
ClassificationMetrics classification_metrics(std::span<const double> p_class1,
                                             std::span<const int> labels,
                                             double threshold = 0.5);
ClassificationMetrics classification_metrics(std::span<const PredictionRow> rows,
                                             double threshold = 0.5);

/// Mann-Whitney AUROC with average ranks for ties. Throws MetricError
/// unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);
/// Average precision: sum over distinct thresholds of (R_k - R_{k-1}) P_k,
/// descending score order, tied scores entering together.
double auprc(std::span<const double> scores, std::span<const int> labels);

std::vector<double> average_ranks(std::span<const double> values);
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);
/// Linear-interpolation quantile of unsorted data, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;
};

struct ReliabilityTable {
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  std::size_t n = 0;
};

/// Bin index of a confidence in [0, 1]; confidence 1 falls in the last bin.
std::size_t confidence_bin(double confidence, std::size_t bins);

ReliabilityTable reliability(std::span<const double> confidence, std::span<const int> correct,
                             std::size_t bins = 10);
/// Confidence is max(p_class1, 1 - p_class1).
ReliabilityTable reliability(std::span<const PredictionRow> rows, std::size_t bins = 10);

struct ConfidenceBinMetrics {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> f1;     // absent for empty bins
  std::optional<double> auprc;  // absent unless both classes occur in the bin
};

std::vector<ConfidenceBinMetrics> metrics_by_confidence_bin(std::span<const PredictionRow> rows,
                                                            std::size_t bins = 10);

enum class ErrorMeasure { loss, f1, auprc };
std::string_view error_measure_name(ErrorMeasure m);

struct DiscardCurve {
  ErrorMeasure measure = ErrorMeasure::loss;
  std::vector<double> fractions;
  std::vector<std::size_t> retained;
  std::vector<double> error;              // NaN where undefined (auprc on one class)
  std::vector<double> positive_fraction;  // among retained samples
  double mf = 0.0;  // monotonicity fraction over defined consecutive pairs
  double di = 0.0;  // mean stepwise improvement over defined consecutive pairs
};

/// Unweighted cross-entropy of the mean prediction for one sample.
double sample_loss(double p_class1, int label);

/// Sorts by uncertainty (descending, stable), then for k = 0..steps-1 drops
/// the floor(k n / steps) most uncertain samples and scores the rest.
/// Throws MetricError when steps > n or steps == 0.
DiscardCurve discard_test(std::span<const double> p_class1, std::span<const int> labels,
                          std::span<const double> uncertainty, ErrorMeasure measure,
                          std::size_t steps = 10);
/// Uses the tu column as uncertainty.
DiscardCurve discard_test(std::span<const PredictionRow> rows, ErrorMeasure measure,
                          std::size_t steps = 10);

struct DensityGroup {
  std::string name;  // e.g. "correct/all", "incorrect/class1"
  std::size_t count = 0;
  std::optional<double> median;  // absent for empty groups
  std::vector<std::size_t> histogram;
};

struct DensitySummary {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t bins = 0;
  std::vector<DensityGroup> groups;  // correct/{all,class0,class1}, incorrect/{...}
};

/// Histograms of the tu column over [min tu, max tu].
DensitySummary density_summary(std::span<const PredictionRow> rows, std::size_t bins = 20);

struct CorrectnessScores {
  double auroc = 0.0;
  double auprc = 0.0;
};

/// Correct predictions are the positive class, scored by -tu. Throws
/// MetricError when every prediction is correct or every one is wrong.
CorrectnessScores uncertainty_correctness_scores(std::span<const PredictionRow> rows);

struct CorrelationRow {
  std::optional<double> percentile;  // absent for the unfiltered row
  double threshold = 0.0;
  std::size_t retained = 0;
  double pearson = 0.0;
  double spearman = 0.0;
};

/// AU-EU correlation on progressively filtered subsets. By default each
/// filter keeps samples whose tu is strictly above the tu percentile;
/// keep_above = false keeps those at or below it instead. Throws
/// MetricError when a filter retains fewer than 3 samples.
std::vector<CorrelationRow> uncertainty_correlation(std::span<const PredictionRow> rows,
                                                    std::span<const double> percentiles =
                                                        std::span<const double>(),
                                                    bool keep_above = true);

enum class GroupKey { year, month, label };
GroupKey parse_group_key(std::string_view name);
std::string_view group_key_name(GroupKey key);

struct GroupStat {
  std::string group;
  std::string feature;
  std::size_t count = 0;
  double mean = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
};

/// Per group and feature statistics of the day t-1 dynamic values and the
/// static values. Groups are ordered numerically.
std::vector<GroupStat> group_statistics(const Dataset& dataset, GroupKey key);

}  // namespace uqfire
