#include "uqfire/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace uqfire {

namespace {

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw MetricError(std::string(what) + ": length mismatch");
}

void check_two_classes(std::span<const int> labels, const char* what) {
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y == 1) pos = true;
    else if (y == 0) neg = true;
    else throw MetricError(std::string(what) + ": labels must be 0 or 1");
  }
  if (!pos || !neg) throw MetricError(std::string(what) + ": needs both classes present");
}

struct Extracted {
  std::vector<double> p;
  std::vector<int> labels;
  std::vector<int> correct;
  std::vector<double> tu;
};

Extracted extract(std::span<const PredictionRow> rows) {
  Extracted e;
  for (const auto& r : rows) {
    e.p.push_back(r.p_class1);
    e.labels.push_back(r.label);
    e.correct.push_back(r.correct);
    e.tu.push_back(r.tu);
  }
  return e;
}

}  // namespace

ClassificationMetrics classification_metrics(std::span<const double> p_class1,
                                             std::span<const int> labels, double threshold) {
  check_sizes(p_class1.size(), labels.size(), "classification_metrics");
  if (labels.empty()) throw MetricError("classification_metrics: no predictions");
  ClassificationMetrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = p_class1[i] > threshold;
    const bool truth = labels[i] == 1;
    if (pred && truth) ++m.tp;
    else if (pred) ++m.fp;
    else if (truth) ++m.fn;
    else ++m.tn;
  }
  m.no_positive_predictions = (m.tp + m.fp) == 0;
  m.precision = m.no_positive_predictions ? 0.0 : double(m.tp) / double(m.tp + m.fp);
  m.recall = (m.tp + m.fn) == 0 ? 0.0 : double(m.tp) / double(m.tp + m.fn);
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

ClassificationMetrics classification_metrics(std::span<const PredictionRow> rows,
                                             double threshold) {
  const auto e = extract(rows);
  return classification_metrics(e.p, e.labels, threshold);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size(), "auroc");
  check_two_classes(labels, "auroc");
  const auto ranks = average_ranks(scores);
  double pos_rank_sum = 0.0;
  double n_pos = 0.0, n_neg = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos_rank_sum += ranks[i];
      n_pos += 1.0;
    } else {
      n_neg += 1.0;
    }
  }
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size(), "auprc");
  check_two_classes(labels, "auprc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total_pos = 0.0;
  for (int y : labels) total_pos += y;
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) tp += 1.0;
      else fp += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_sizes(x.size(), y.size(), "pearson");
  if (x.size() < 2) throw MetricError("pearson: needs at least 2 samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_sizes(x.size(), y.size(), "spearman");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw MetricError("quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw MetricError("quantile: q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::size_t confidence_bin(double confidence, std::size_t bins) {
  const double c = std::clamp(confidence, 0.0, 1.0);
  return std::min(static_cast<std::size_t>(std::floor(c * static_cast<double>(bins))), bins - 1);
}

ReliabilityTable reliability(std::span<const double> confidence, std::span<const int> correct,
                             std::size_t bins) {
  check_sizes(confidence.size(), correct.size(), "reliability");
  if (bins == 0) throw MetricError("reliability: bins must be >= 1");
  ReliabilityTable t;
  t.n = confidence.size();
  t.bins.resize(bins);
  std::vector<double> acc_sum(bins, 0.0), conf_sum(bins, 0.0);
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    const std::size_t b = confidence_bin(confidence[i], bins);
    ++t.bins[b].count;
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
    conf_sum[b] += confidence[i];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    auto& bin = t.bins[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(bins);
    if (bin.count == 0) continue;
    bin.accuracy = acc_sum[b] / static_cast<double>(bin.count);
    bin.confidence = conf_sum[b] / static_cast<double>(bin.count);
    t.ece += static_cast<double>(bin.count) / static_cast<double>(t.n) *
             std::abs(bin.accuracy - bin.confidence);
  }
  return t;
}

ReliabilityTable reliability(std::span<const PredictionRow> rows, std::size_t bins) {
  std::vector<double> conf;
  std::vector<int> correct;
  for (const auto& r : rows) {
    conf.push_back(std::max(r.p_class1, 1.0 - r.p_class1));
    correct.push_back(r.correct);
  }
  return reliability(conf, correct, bins);
}

std::vector<ConfidenceBinMetrics> metrics_by_confidence_bin(std::span<const PredictionRow> rows,
                                                            std::size_t bins) {
  if (bins == 0) throw MetricError("metrics_by_confidence_bin: bins must be >= 1");
  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double c = std::max(rows[i].p_class1, 1.0 - rows[i].p_class1);
    members[confidence_bin(c, bins)].push_back(i);
  }
  std::vector<ConfidenceBinMetrics> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    auto& m = out[b];
    m.lower = static_cast<double>(b) / static_cast<double>(bins);
    m.upper = static_cast<double>(b + 1) / static_cast<double>(bins);
    m.count = members[b].size();
    if (m.count == 0) continue;
    std::vector<double> p;
    std::vector<int> y;
    bool pos = false, neg = false;
    for (std::size_t i : members[b]) {
      p.push_back(rows[i].p_class1);
      y.push_back(rows[i].label);
      (rows[i].label == 1 ? pos : neg) = true;
    }
    m.f1 = classification_metrics(p, y).f1;
    if (pos && neg) m.auprc = auprc(p, y);
  }
  return out;
}

std::string_view error_measure_name(ErrorMeasure m) {
  switch (m) {
    case ErrorMeasure::loss: return "loss";
    case ErrorMeasure::f1: return "f1";
    case ErrorMeasure::auprc: return "auprc";
  }
  return "unknown";
}

double sample_loss(double p_class1, int label) {
  const double p = label == 1 ? p_class1 : 1.0 - p_class1;
  return -std::log(p + kProbabilityFloor);
}

DiscardCurve discard_test(std::span<const double> p_class1, std::span<const int> labels,
                          std::span<const double> uncertainty, ErrorMeasure measure,
                          std::size_t steps) {
  check_sizes(p_class1.size(), labels.size(), "discard_test");
  check_sizes(p_class1.size(), uncertainty.size(), "discard_test");
  const std::size_t n = p_class1.size();
  if (steps == 0) throw MetricError("discard_test: steps must be >= 1");
  if (steps > n) throw MetricError("discard_test: more steps than samples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return uncertainty[a] > uncertainty[b]; });

  DiscardCurve c;
  c.measure = measure;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t dropped = k * n / steps;
    std::vector<double> p;
    std::vector<int> y;
    double positives = 0.0;
    for (std::size_t idx = dropped; idx < n; ++idx) {
      p.push_back(p_class1[order[idx]]);
      y.push_back(labels[order[idx]]);
      positives += y.back() == 1 ? 1.0 : 0.0;
    }
    double err = std::numeric_limits<double>::quiet_NaN();
    switch (measure) {
      case ErrorMeasure::loss: {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += sample_loss(p[i], y[i]);
        err = s / static_cast<double>(p.size());
        break;
      }
      case ErrorMeasure::f1: err = classification_metrics(p, y).f1; break;
      case ErrorMeasure::auprc:
        if (positives > 0.0 && positives < static_cast<double>(p.size())) err = auprc(p, y);
        break;
    }
    c.fractions.push_back(static_cast<double>(k) / static_cast<double>(steps));
    c.retained.push_back(p.size());
    c.error.push_back(err);
    c.positive_fraction.push_back(positives / static_cast<double>(p.size()));
  }

  const double direction = measure == ErrorMeasure::loss ? 1.0 : -1.0;
  std::size_t pairs = 0, monotone = 0;
  double improvement = 0.0;
  for (std::size_t k = 0; k + 1 < c.error.size(); ++k) {
    if (std::isnan(c.error[k]) || std::isnan(c.error[k + 1])) continue;
    const double gain = direction * (c.error[k] - c.error[k + 1]);
    ++pairs;
    // Means of equal values can differ in the last bit once the retained set shrinks.
    if (gain >= -1e-12 * std::max(1.0, std::abs(c.error[k]))) ++monotone;
    improvement += gain;
  }
  if (pairs > 0) {
    c.mf = static_cast<double>(monotone) / static_cast<double>(pairs);
    c.di = improvement / static_cast<double>(pairs);
  } else {
    c.mf = 1.0;
  }
  return c;
}

DiscardCurve discard_test(std::span<const PredictionRow> rows, ErrorMeasure measure,
                          std::size_t steps) {
  const auto e = extract(rows);
  return discard_test(e.p, e.labels, e.tu, measure, steps);
}

DensitySummary density_summary(std::span<const PredictionRow> rows, std::size_t bins) {
  if (bins == 0) throw MetricError("density_summary: bins must be >= 1");
  DensitySummary d;
  d.bins = bins;
  if (!rows.empty()) {
    auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(),
                                        [](const auto& a, const auto& b) { return a.tu < b.tu; });
    d.lower = lo->tu;
    d.upper = hi->tu;
  }
  const double width = d.upper - d.lower;
  static const char* kCorrect[] = {"correct", "incorrect"};
  static const char* kClass[] = {"all", "class0", "class1"};
  for (int c = 0; c < 2; ++c) {
    for (int k = 0; k < 3; ++k) {
      DensityGroup g;
      g.name = std::string(kCorrect[c]) + "/" + kClass[k];
      g.histogram.assign(bins, 0);
      std::vector<double> values;
      for (const auto& r : rows) {
        if ((r.correct == 1) != (c == 0)) continue;
        if (k > 0 && r.label != k - 1) continue;
        values.push_back(r.tu);
        std::size_t b = 0;
        if (width > 0.0) {
          b = std::min(bins - 1, static_cast<std::size_t>((r.tu - d.lower) / width *
                                                          static_cast<double>(bins)));
        }
        ++g.histogram[b];
      }
      g.count = values.size();
      if (!values.empty()) g.median = quantile(values, 0.5);
      d.groups.push_back(std::move(g));
    }
  }
  return d;
}

CorrectnessScores uncertainty_correctness_scores(std::span<const PredictionRow> rows) {
  std::vector<double> score;
  std::vector<int> correct;
  for (const auto& r : rows) {
    score.push_back(-r.tu);
    correct.push_back(r.correct);
  }
  bool any_correct = false, any_wrong = false;
  for (int c : correct) (c ? any_correct : any_wrong) = true;
  if (!any_correct || !any_wrong) {
    throw MetricError("uncertainty_correctness_scores: needs both correct and incorrect predictions");
  }
  return {auroc(score, correct), auprc(score, correct)};
}

std::vector<CorrelationRow> uncertainty_correlation(std::span<const PredictionRow> rows,
                                                    std::span<const double> percentiles,
                                                    bool keep_above) {
  static const double kDefault[] = {25.0, 50.0, 75.0};
  if (percentiles.empty()) percentiles = kDefault;
  std::vector<double> tu;
  for (const auto& r : rows) tu.push_back(r.tu);
  if (tu.empty()) throw MetricError("uncertainty_correlation: no samples");

  auto make_row = [&](std::optional<double> pct) {
    CorrelationRow out;
    out.percentile = pct;
    std::vector<double> au, eu;
    if (pct) {
      if (!(*pct >= 0.0 && *pct <= 100.0)) {
        throw MetricError("uncertainty_correlation: percentile outside [0, 100]");
      }
      out.threshold = quantile(tu, *pct / 100.0);
    }
    for (const auto& r : rows) {
      const bool keep = !pct || (keep_above ? r.tu > out.threshold : r.tu <= out.threshold);
      if (!keep) continue;
      au.push_back(r.au);
      eu.push_back(r.eu);
    }
    out.retained = au.size();
    if (out.retained < 3) {
      throw MetricError("uncertainty_correlation: fewer than 3 samples retained");
    }
    out.pearson = pearson(au, eu);
    out.spearman = spearman(au, eu);
    return out;
  };

  std::vector<CorrelationRow> out;
  out.push_back(make_row(std::nullopt));
  for (double p : percentiles) out.push_back(make_row(p));
  return out;
}

GroupKey parse_group_key(std::string_view name) {
  if (name == "year") return GroupKey::year;
  if (name == "month") return GroupKey::month;
  if (name == "class" || name == "label") return GroupKey::label;
  throw MetricError("unknown group key '" + std::string(name) + "' (expected year, month or class)");
}

std::string_view group_key_name(GroupKey key) {
  switch (key) {
    case GroupKey::year: return "year";
    case GroupKey::month: return "month";
    case GroupKey::label: return "class";
  }
  return "unknown";
}

std::vector<GroupStat> group_statistics(const Dataset& dataset, GroupKey key) {
  const std::size_t d_dyn = dataset.schema.dynamic_dim();
  const std::size_t d_sta = dataset.schema.static_dim();
  std::map<int, std::vector<const SampleRecord*>> groups;
  for (const auto& r : dataset.records) {
    int g = 0;
    switch (key) {
      case GroupKey::year: g = r.date.year; break;
      case GroupKey::month: g = static_cast<int>(r.date.month); break;
      case GroupKey::label: g = r.label; break;
    }
    groups[g].push_back(&r);
  }
  std::vector<GroupStat> out;
  for (const auto& [g, members] : groups) {
    for (std::size_t f = 0; f < d_dyn + d_sta; ++f) {
      std::vector<double> v;
      for (const auto* r : members) {
        v.push_back(f < d_dyn ? r->dynamic[(kObservedDays - 1) * d_dyn + f]
                              : r->statics[f - d_dyn]);
      }
      GroupStat s;
      s.group = std::to_string(g);
      s.feature = f < d_dyn ? dataset.schema.dynamic_features[f]
                            : dataset.schema.static_features[f - d_dyn];
      s.count = v.size();
      s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      s.q25 = quantile(v, 0.25);
      s.median = quantile(v, 0.5);
      s.q75 = quantile(v, 0.75);
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace uqfire
