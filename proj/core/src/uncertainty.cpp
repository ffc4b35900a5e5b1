#include "uqfire/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "uqfire/io_util.hpp"

namespace uqfire {

void PredictiveSampleSet::validate(double tol) const {
  if (N == 0 || S == 0 || K == 0) throw std::invalid_argument("sample set: empty dimension");
  if (probs.size() != N * S * K) throw std::invalid_argument("sample set: size mismatch");
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      double total = 0.0;
      for (std::size_t c = 0; c < K; ++c) {
        const double v = at(i, s, c);
        if (!(v >= -tol && v <= 1.0 + tol)) {
          throw std::invalid_argument("sample set: probability outside [0, 1]");
        }
        total += v;
      }
      if (std::abs(total - 1.0) > tol * static_cast<double>(K) + 1e-12) {
        throw std::invalid_argument("sample set: row does not sum to 1");
      }
    }
  }
}

UncertaintyReport decompose(const PredictiveSampleSet& set, SamplerStrategy sampler) {
  if (set.N == 0 || set.S == 0 || set.K == 0 || set.probs.size() != set.N * set.S * set.K) {
    throw std::invalid_argument("decompose: malformed sample set");
  }
  const std::size_t N = set.N, S = set.S, K = set.K;
  const double inv_n = 1.0 / static_cast<double>(N);
  const double inv_s = 1.0 / static_cast<double>(S);

  std::vector<double> pbar(N * K, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t c = 0; c < K; ++c) pbar[i * K + c] += set.at(i, s, c);
    }
    for (std::size_t c = 0; c < K; ++c) pbar[i * K + c] *= inv_s;
  }

  UncertaintyReport r;
  r.sampler = sampler;
  r.N = N;
  r.S = S;
  r.p.assign(K, 0.0);
  r.eu.assign(K, 0.0);
  r.au.assign(K, 0.0);
  r.tu.assign(K, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < K; ++c) r.p[c] += pbar[i * K + c];
  }
  for (auto& v : r.p) v *= inv_n;

  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < K; ++c) {
      const double d = pbar[i * K + c] - r.p[c];
      r.eu[c] += d * d;
      double within = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        const double e = set.at(i, s, c) - pbar[i * K + c];
        within += e * e;
        const double t = set.at(i, s, c) - r.p[c];
        r.tu[c] += t * t;
      }
      r.au[c] += within * inv_s;
    }
  }
  for (std::size_t c = 0; c < K; ++c) {
    r.eu[c] *= inv_n;
    r.au[c] *= inv_n;
    r.tu[c] *= inv_n * inv_s;
  }
  r.predicted_class = static_cast<std::size_t>(
      std::max_element(r.p.begin(), r.p.end()) - r.p.begin());
  return r;
}

double verify_decomposition(const PredictiveSampleSet& set) {
  const UncertaintyReport r = decompose(set);
  double worst = 0.0;
  for (std::size_t c = 0; c < set.K; ++c) {
    worst = std::max(worst, std::abs(r.tu[c] - (r.eu[c] + r.au[c])));
  }
  return worst;
}

double scalar_uncertainty(const std::vector<double>& per_class, std::size_t predicted_class,
                          UncertaintyReduction reduction) {
  if (per_class.empty()) throw std::invalid_argument("scalar_uncertainty: empty vector");
  switch (reduction) {
    case UncertaintyReduction::positive_class:
      return per_class.size() > 1 ? per_class[1] : per_class[0];
    case UncertaintyReduction::predicted_class:
      if (predicted_class >= per_class.size()) {
        throw std::out_of_range("scalar_uncertainty: predicted class out of range");
      }
      return per_class[predicted_class];
    case UncertaintyReduction::max_over_classes:
      return *std::max_element(per_class.begin(), per_class.end());
  }
  return per_class[0];
}

namespace {

void softmax_row(std::span<const double> f, std::span<double> out) {
  const double m = *std::max_element(f.begin(), f.end());
  double z = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) {
    out[c] = std::exp(f[c] - m);
    z += out[c];
  }
  for (auto& v : out) v /= z;
}

bool has_scale_head(const PosteriorSampler& sampler) {
  return sampler.architecture().head == HeadType::heteroscedastic;
}

// Fills set.probs slice for weight sample i from its logit parameters.
void fill_sample(PredictiveSampleSet& set, std::size_t i, std::span<const double> f,
                 std::span<const double> sigma, double tau, Rng& logit_rng, bool hetero) {
  std::span<double> out(set.probs.data() + i * set.S * set.K, set.S * set.K);
  if (hetero) {
    tempered_softmax_row(f, sigma, tau, set.S, logit_rng, out);
  } else {
    softmax_row(f, out);
  }
}

}  // namespace

std::vector<PredictiveSampleSet> sample_predictive(const PosteriorSampler& sampler,
                                                   const Tensor& x, std::size_t S,
                                                   double temperature, Rng& rng) {
  if (S == 0) throw std::invalid_argument("uncertainty: S must be >= 1");
  if (x.rank() != 3) throw ShapeError("uncertainty: input must be batch x T x F");
  const bool hetero = has_scale_head(sampler);
  if (!hetero) S = 1;
  const std::size_t B = x.dim(0);
  const std::size_t K = sampler.architecture().classes;
  const std::size_t N = sampler.size();

  NoGradGuard no_grad;
  Rng weight_rng(rng.next_u64());
  Rng dropout_rng(rng.next_u64());
  Rng logit_rng(rng.next_u64());

  std::vector<PredictiveSampleSet> sets(B, PredictiveSampleSet(N, S, K));
  for (std::size_t i = 0; i < N; ++i) {
    const NetworkWeights w = sampler.weights_for(i, weight_rng);
    const NetworkOutput out =
        network_forward(sampler.architecture(), w, x, sampler.dropout_mode(), dropout_rng);
    for (std::size_t b = 0; b < B; ++b) {
      std::span<const double> f = out.logits.data().subspan(b * K, K);
      std::span<const double> sigma;
      if (hetero) sigma = out.sigma.data().subspan(b * K, K);
      fill_sample(sets[b], i, f, sigma, temperature, logit_rng, hetero);
    }
  }
  return sets;
}

UncertaintyReport predict_with_uncertainty(const PosteriorSampler& sampler, const Tensor& x,
                                           std::size_t S, double temperature, Rng& rng) {
  if (x.rank() != 3 || x.dim(0) != 1) {
    throw ShapeError("predict_with_uncertainty: expected a single input of shape 1 x T x F");
  }
  auto sets = sample_predictive(sampler, x, S, temperature, rng);
  return decompose(sets.front(), sampler.strategy());
}

std::vector<UncertaintyReport> batch_reports(const PosteriorSampler& sampler,
                                             std::span<const WindowedInstance> instances,
                                             const InferenceOptions& options) {
  if (options.logit_samples == 0) throw std::invalid_argument("uncertainty: S must be >= 1");
  if (!(options.temperature > 0.0)) throw std::invalid_argument("uncertainty: tau must be > 0");
  const bool hetero = has_scale_head(sampler);
  const std::size_t S = hetero ? options.logit_samples : 1;
  const std::size_t K = sampler.architecture().classes;
  const std::size_t N = sampler.size();
  const std::size_t R = instances.size();
  std::vector<UncertaintyReport> reports(R);
  if (R == 0) return reports;

  std::vector<NetworkWeights> weights;
  weights.reserve(N);
  {
    NoGradGuard no_grad;
    Rng weight_rng = Rng::stream(options.seed, "weight_noise");
    for (std::size_t i = 0; i < N; ++i) weights.push_back(sampler.weights_for(i, weight_rng));
  }

  const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
  const std::size_t n_chunks = (R + chunk - 1) / chunk;

  auto run_chunk = [&](std::size_t ci) {
    NoGradGuard no_grad;
    const std::size_t begin = ci * chunk;
    const std::size_t end = std::min(R, begin + chunk);
    const std::size_t rows = end - begin;
    std::vector<std::size_t> idx(rows);
    for (std::size_t k = 0; k < rows; ++k) idx[k] = begin + k;
    const Batch batch = make_batch(instances, idx);

    std::vector<PredictiveSampleSet> sets(rows, PredictiveSampleSet(N, S, K));
    std::vector<Rng> logit_rngs;
    logit_rngs.reserve(rows);
    for (std::size_t k = 0; k < rows; ++k) {
      logit_rngs.push_back(Rng::stream(options.seed, "logit_noise", begin + k));
    }
    std::vector<Rng> row_rngs;
    for (std::size_t i = 0; i < N; ++i) {
      row_rngs.clear();
      for (std::size_t k = 0; k < rows; ++k) {
        row_rngs.push_back(Rng::stream(options.seed, "dropout", (begin + k) * N + i));
      }
      const NetworkOutput out = network_forward_rows(sampler.architecture(), weights[i], batch.x,
                                                     sampler.dropout_mode(), row_rngs);
      for (std::size_t k = 0; k < rows; ++k) {
        std::span<const double> f = out.logits.data().subspan(k * K, K);
        std::span<const double> sigma;
        if (hetero) sigma = out.sigma.data().subspan(k * K, K);
        fill_sample(sets[k], i, f, sigma, options.temperature, logit_rngs[k], hetero);
      }
    }
    for (std::size_t k = 0; k < rows; ++k) {
      reports[begin + k] = decompose(sets[k], sampler.strategy());
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, n_chunks));
  if (jobs == 1) {
    for (std::size_t ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
    return reports;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&, j] {
      try {
        for (std::size_t ci = j; ci < n_chunks; ci += jobs) run_chunk(ci);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reports;
}

std::vector<PredictionRow> to_prediction_rows(std::span<const WindowedInstance> instances,
                                              std::span<const UncertaintyReport> reports,
                                              UncertaintyReduction reduction) {
  if (instances.size() != reports.size()) {
    throw std::invalid_argument("prediction rows: instance/report count mismatch");
  }
  std::vector<PredictionRow> rows;
  rows.reserve(instances.size());
  for (std::size_t r = 0; r < instances.size(); ++r) {
    const auto& inst = instances[r];
    const auto& rep = reports[r];
    PredictionRow row;
    row.record_id = inst.record_id;
    row.label = inst.label;
    row.weight = inst.weight;
    row.lead_time = inst.lead_time;
    row.p_class1 = rep.p.size() > 1 ? rep.p[1] : rep.p[0];
    row.eu = scalar_uncertainty(rep.eu, rep.predicted_class, reduction);
    row.au = scalar_uncertainty(rep.au, rep.predicted_class, reduction);
    row.tu = scalar_uncertainty(rep.tu, rep.predicted_class, reduction);
    row.predicted_class = static_cast<int>(rep.predicted_class);
    row.correct = row.predicted_class == row.label ? 1 : 0;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_predictions(std::span<const PredictionRow> rows, std::ostream& out) {
  out << kPredictionHeader << '\n';
  for (const auto& r : rows) {
    out << r.record_id << ',' << r.label << ',' << format_double(r.weight) << ',' << r.lead_time
        << ',' << format_double(r.p_class1) << ',' << format_double(r.eu) << ','
        << format_double(r.au) << ',' << format_double(r.tu) << ',' << r.predicted_class << ','
        << r.correct << '\n';
  }
}

namespace {

int parse_int(std::string_view text, std::size_t line, std::string_view column) {
  const double v = [&] {
    try {
      return parse_double(text);
    } catch (const std::exception&) {
      throw DataError("predictions line " + std::to_string(line) + ": bad value in column '" +
                      std::string(column) + "'");
    }
  }();
  if (v != std::floor(v)) {
    throw DataError("predictions line " + std::to_string(line) + ": column '" +
                    std::string(column) + "' is not an integer");
  }
  return static_cast<int>(v);
}

}  // namespace

std::vector<PredictionRow> read_predictions(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("predictions: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line, ',');
  const auto expected = split_fields(kPredictionHeader, ',');
  std::vector<std::size_t> col(expected.size());
  for (std::size_t e = 0; e < expected.size(); ++e) {
    auto it = std::find(header.begin(), header.end(), expected[e]);
    if (it == header.end()) {
      throw DataError("predictions: missing column '" + std::string(expected[e]) + "'");
    }
    col[e] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<PredictionRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != header.size()) {
      throw DataError("predictions line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    auto num = [&](std::size_t e) {
      try {
        return parse_double(f[col[e]]);
      } catch (const std::exception&) {
        throw DataError("predictions line " + std::to_string(lineno) + ": bad value in column '" +
                        std::string(expected[e]) + "'");
      }
    };
    PredictionRow r;
    r.record_id = std::string(f[col[0]]);
    r.label = parse_int(f[col[1]], lineno, expected[1]);
    r.weight = num(2);
    r.lead_time = parse_int(f[col[3]], lineno, expected[3]);
    r.p_class1 = num(4);
    r.eu = num(5);
    r.au = num(6);
    r.tu = num(7);
    r.predicted_class = parse_int(f[col[8]], lineno, expected[8]);
    r.correct = parse_int(f[col[9]], lineno, expected[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void save_predictions(std::span<const PredictionRow> rows, const std::string& path) {
  std::ostringstream os;
  write_predictions(rows, os);
  write_text_file(path, os.str());
}

std::vector<PredictionRow> load_predictions(const std::string& path) {
  std::istringstream is(read_text_file(path));
  return read_predictions(is);
}

}  // namespace uqfire
