#pragma once

// Training configuration, optimiser, training loop with early stopping,
// ensembles, on-disk artifacts and the lead-time experiment driver.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "uqfire/checkpoint.hpp"
#include "uqfire/data.hpp"
#include "uqfire/network.hpp"
#include "uqfire/posterior.hpp"
#include "uqfire/uncertainty.hpp"

namespace uqfire {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { deterministic, aleatoric_only, mcd, mcd_au, de, de_au, bbb, bbb_au };

std::string_view variant_name(Variant v);
/// Throws ConfigError listing the eight accepted names.
Variant parse_variant(std::string_view name);
std::span<const Variant> all_variants();

bool has_aleatoric_head(Variant v);
bool is_ensemble(Variant v);
WeightKind weight_kind(Variant v);
SamplerStrategy sampler_strategy(Variant v);

/// How the KL term is scaled against the per-sample data loss.
///   per_minibatch  kl_weight = kl_scale / (minibatches per epoch)
///   per_sample     kl_weight = kl_scale / (training instances)
enum class KlSchedule { per_minibatch, per_sample };
enum class Weighting { burned_area, uniform };

struct TrainConfig {
  Variant variant = Variant::deterministic;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  std::optional<std::size_t> n_samples;  // inference weight samples
  std::optional<std::size_t> members;    // ensemble variants only
  std::size_t logit_samples = kDefaultLogitSamples;  // S at inference
  std::size_t train_logit_samples = 100;             // S inside the training loss
  double temperature = kDefaultTemperature;
  double dropout = 0.5;
  double prior_std = 1.0;
  double rho_init = -5.0;
  KlSchedule kl_schedule = KlSchedule::per_sample;
  double kl_scale = 1.0;
  Weighting weighting = Weighting::burned_area;
  int lead = 1;
  std::size_t lstm_hidden = 128;
  std::size_t fc1 = 128;
  std::size_t fc2 = 64;
  std::size_t jobs = 1;

  /// Throws ConfigError on out-of-range values or fields that do not
  /// apply to the variant (e.g. members for a non-ensemble variant).
  void validate() const;

  std::size_t ensemble_size() const;
  std::size_t inference_samples() const;  // resolved N
};

std::string config_to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(std::string_view text);
TrainConfig load_config(const std::string& path);
std::string config_hash(const TrainConfig& config);

/// -sum w log(p_y + 1e-12) / sum w over rows of p (batch x K).
Tensor weighted_cross_entropy(const Tensor& p, std::span<const int> labels,
                              std::span<const double> weights);

/// 1 for negatives, 1 + log(1 + burned area) for positives. Throws
/// DataError on a negative area.
double event_weight(const SampleRecord& record);
WeightFn weight_rule(Weighting weighting);

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  double lr_, beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  double kl = 0.0;  // last minibatch KL, variational models only
};

struct MemberResult {
  Model model;
  std::vector<EpochLog> curve;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Trains one network on prepared windows. The returned model holds the
/// parameters of the epoch with the lowest validation loss (the last epoch
/// when there is no validation data). Throws TrainingError on a non-finite
/// loss.
MemberResult train_member(const TrainConfig& config, const Architecture& arch,
                          std::span<const WindowedInstance> train,
                          std::span<const WindowedInstance> validation,
                          std::uint64_t member_seed);

struct TrainedArtifact {
  TrainConfig config;
  Normalizer normalizer;
  DatasetSchema schema;
  std::vector<MemberResult> members;  // one, or M for ensembles
  std::string config_hash;

  Checkpoint checkpoint(std::size_t member) const;
  PosteriorSampler sampler(std::optional<std::size_t> n_samples = std::nullopt) const;
};

/// Standardises with statistics of splits.train only, windows every split
/// at config.lead and trains the configured variant. Ensemble members train
/// with distinct derived seeds, up to config.jobs at a time.
TrainedArtifact train(const TrainConfig& config, const DataSplits& splits);

/// Normalised windows of a dataset for the artifact's lead and weighting.
/// Throws DataError when the dataset schema differs from the artifact's.
std::vector<WindowedInstance> prepare_instances(const TrainedArtifact& artifact,
                                                const Dataset& dataset,
                                                std::optional<int> lead = std::nullopt);

/// Directory layout: config.json, schema.json, curves.csv, and either
/// checkpoint.json or members/member_XX.json.
void save_artifact(const TrainedArtifact& artifact, const std::string& dir);
TrainedArtifact load_artifact(const std::string& dir);
std::string curves_csv(const TrainedArtifact& artifact);

struct SweepRow {
  int lead = 1;
  double auprc = 0.0;
  double f1 = 0.0;
  double mean_au = 0.0;
  double mean_eu = 0.0;
  std::size_t test_size = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<TrainedArtifact> artifacts;  // in lead order
};

/// One fresh model per lead, trained and evaluated on the test split.
/// Leads run up to config.jobs at a time; errors are rethrown tagged with
/// the lead.
SweepResult run_leadtime_sweep(const TrainConfig& base, const DataSplits& splits,
                               std::span<const int> leads, const InferenceOptions& inference);

std::string sweep_csv(std::span<const SweepRow> rows);

/// Parses "3", "1..10" or "1,2,5" into leads in [1, 10].
std::vector<int> parse_leads(std::string_view text);

}  // namespace uqfire
