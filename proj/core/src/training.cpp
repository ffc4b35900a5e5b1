#include "uqfire/training.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "uqfire/io_util.hpp"
#include "uqfire/metrics.hpp"

namespace uqfire {

namespace {

using json = nlohmann::ordered_json;

constexpr Variant kVariants[] = {Variant::deterministic, Variant::aleatoric_only, Variant::mcd,
                                 Variant::mcd_au,        Variant::de,             Variant::de_au,
                                 Variant::bbb,           Variant::bbb_au};

std::string variant_list() {
  std::string s;
  for (Variant v : kVariants) {
    if (!s.empty()) s += ", ";
    s += variant_name(v);
  }
  return s;
}

// Runs fn(i) for i in [0, n) on up to jobs threads. The first exception
// (lowest index) is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::deterministic: return "deterministic";
    case Variant::aleatoric_only: return "aleatoric_only";
    case Variant::mcd: return "mcd";
    case Variant::mcd_au: return "mcd+au";
    case Variant::de: return "de";
    case Variant::de_au: return "de+au";
    case Variant::bbb: return "bbb";
    case Variant::bbb_au: return "bbb+au";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kVariants) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "'; expected one of: " +
                    variant_list());
}

std::span<const Variant> all_variants() { return kVariants; }

bool has_aleatoric_head(Variant v) {
  return v == Variant::aleatoric_only || v == Variant::mcd_au || v == Variant::de_au ||
         v == Variant::bbb_au;
}

bool is_ensemble(Variant v) { return v == Variant::de || v == Variant::de_au; }

WeightKind weight_kind(Variant v) {
  return (v == Variant::bbb || v == Variant::bbb_au) ? WeightKind::variational
                                                      : WeightKind::deterministic;
}

SamplerStrategy sampler_strategy(Variant v) {
  switch (v) {
    case Variant::deterministic:
    case Variant::aleatoric_only: return SamplerStrategy::deterministic;
    case Variant::mcd:
    case Variant::mcd_au: return SamplerStrategy::mc_dropout;
    case Variant::de:
    case Variant::de_au: return SamplerStrategy::deep_ensemble;
    case Variant::bbb:
    case Variant::bbb_au: return SamplerStrategy::bbb;
  }
  return SamplerStrategy::deterministic;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("config: " + what); };
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (max_epochs == 0) fail("max_epochs must be >= 1");
  if (patience == 0) fail("patience must be >= 1");
  if (logit_samples == 0 || train_logit_samples == 0) fail("logit sample counts must be >= 1");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(prior_std > 0.0)) fail("prior_std must be > 0");
  if (!std::isfinite(rho_init)) fail("rho_init must be finite");
  if (!(kl_scale >= 0.0)) fail("kl_scale must be >= 0");
  if (lead < kMinLead || lead > kMaxLead) fail("lead must lie in [1, 10]");
  if (lstm_hidden == 0 || fc1 == 0 || fc2 == 0) fail("layer sizes must be >= 1");
  if (jobs == 0) fail("jobs must be >= 1");
  const std::string name(variant_name(variant));
  if (members && !is_ensemble(variant)) fail("members is only valid for de variants, not " + name);
  if (is_ensemble(variant) && members && *members < 2) fail("members must be >= 2");
  if (n_samples) {
    if (*n_samples == 0) fail("n_samples must be >= 1");
    if (sampler_strategy(variant) == SamplerStrategy::deterministic && *n_samples != 1) {
      fail("variant " + name + " uses a single forward pass; n_samples must be 1");
    }
    if (is_ensemble(variant) && *n_samples != ensemble_size()) {
      fail("for de variants n_samples must equal members");
    }
  }
}

std::size_t TrainConfig::ensemble_size() const {
  return is_ensemble(variant) ? members.value_or(kDefaultEnsembleSize) : 1;
}

std::size_t TrainConfig::inference_samples() const {
  switch (sampler_strategy(variant)) {
    case SamplerStrategy::deterministic: return 1;
    case SamplerStrategy::deep_ensemble: return ensemble_size();
    default: return n_samples.value_or(kDefaultMcSamples);
  }
}

namespace {

json config_json(const TrainConfig& c) {
  json j;
  j["variant"] = variant_name(c.variant);
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["n_samples"] = c.n_samples ? json(*c.n_samples) : json(nullptr);
  j["members"] = c.members ? json(*c.members) : json(nullptr);
  j["logit_samples"] = c.logit_samples;
  j["train_logit_samples"] = c.train_logit_samples;
  j["temperature"] = c.temperature;
  j["dropout"] = c.dropout;
  j["prior_std"] = c.prior_std;
  j["rho_init"] = c.rho_init;
  j["kl_schedule"] = c.kl_schedule == KlSchedule::per_minibatch ? "per_minibatch" : "per_sample";
  j["kl_scale"] = c.kl_scale;
  j["weighting"] = c.weighting == Weighting::burned_area ? "burned_area" : "uniform";
  j["lead"] = c.lead;
  j["lstm_hidden"] = c.lstm_hidden;
  j["fc1"] = c.fc1;
  j["fc2"] = c.fc2;
  j["jobs"] = c.jobs;
  return j;
}

}  // namespace

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(2) + "\n"; }

TrainConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  TrainConfig c;
  const json defaults = config_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    auto get_opt = [&](const char* key, std::optional<std::size_t>& field) {
      if (!j.contains(key)) return;
      if (j.at(key).is_null()) field.reset();
      else field = j.at(key).get<std::size_t>();
    };
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    get("learning_rate", c.learning_rate);
    get("batch_size", c.batch_size);
    get("max_epochs", c.max_epochs);
    get("patience", c.patience);
    get("seed", c.seed);
    get_opt("n_samples", c.n_samples);
    get_opt("members", c.members);
    get("logit_samples", c.logit_samples);
    get("train_logit_samples", c.train_logit_samples);
    get("temperature", c.temperature);
    get("dropout", c.dropout);
    get("prior_std", c.prior_std);
    get("rho_init", c.rho_init);
    if (j.contains("kl_schedule")) {
      const auto s = j.at("kl_schedule").get<std::string>();
      if (s == "per_minibatch") c.kl_schedule = KlSchedule::per_minibatch;
      else if (s == "per_sample") c.kl_schedule = KlSchedule::per_sample;
      else throw ConfigError("config: kl_schedule must be per_minibatch or per_sample");
    }
    get("kl_scale", c.kl_scale);
    if (j.contains("weighting")) {
      const auto s = j.at("weighting").get<std::string>();
      if (s == "burned_area") c.weighting = Weighting::burned_area;
      else if (s == "uniform") c.weighting = Weighting::uniform;
      else throw ConfigError("config: weighting must be burned_area or uniform");
    }
    get("lead", c.lead);
    get("lstm_hidden", c.lstm_hidden);
    get("fc1", c.fc1);
    get("fc2", c.fc2);
    get("jobs", c.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) { return config_from_json(read_text_file(path)); }

std::string config_hash(const TrainConfig& config) {
  json j = config_json(config);
  j.erase("jobs");  // parallelism does not change results
  return content_hash(j.dump());
}

Tensor weighted_cross_entropy(const Tensor& p, std::span<const int> labels,
                              std::span<const double> weights) {
  return weighted_nll(p, labels, weights);
}

double event_weight(const SampleRecord& record) {
  if (record.burned_area_ha < 0.0) {
    throw DataError("record " + record.record_id + ": negative burned area");
  }
  if (record.label != 1) return 1.0;
  return 1.0 + std::log1p(record.burned_area_ha);
}

WeightFn weight_rule(Weighting weighting) {
  if (weighting == Weighting::uniform) return [](const SampleRecord&) { return 1.0; };
  return event_weight;
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

namespace {

struct Evaluation {
  double loss = 0.0;
  double f1 = 0.0;
};

Evaluation evaluate(const Model& model, const TrainConfig& config,
                    std::span<const WindowedInstance> data, std::uint64_t seed) {
  NoGradGuard no_grad;
  const Architecture& arch = model.architecture();
  const NetworkWeights w = model.mean_weights();
  Rng logit_rng = Rng::stream(seed, "validation_logit_noise");
  Rng unused = Rng::stream(seed, "validation_dropout");
  constexpr std::size_t kChunk = 512;
  double loss_sum = 0.0, weight_sum = 0.0;
  std::vector<double> p1;
  std::vector<int> labels;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const auto part = data.subspan(begin, std::min(kChunk, data.size() - begin));
    const Batch batch = make_batch(part);
    const NetworkOutput out = network_forward(arch, w, batch.x, DropoutMode::eval, unused);
    Tensor p = arch.head == HeadType::heteroscedastic
                   ? tempered_softmax_mc(out.logits, out.sigma, config.temperature,
                                         config.train_logit_samples, logit_rng)
                         .p
                   : softmax_last_axis(out.logits);
    double wsum = 0.0;
    for (double x : batch.weights) wsum += x;
    loss_sum += weighted_nll(p, batch.labels, batch.weights).item() * wsum;
    weight_sum += wsum;
    for (std::size_t r = 0; r < batch.size(); ++r) {
      p1.push_back(p.data()[r * arch.classes + 1]);
      labels.push_back(batch.labels[r]);
    }
  }
  Evaluation e;
  e.loss = loss_sum / weight_sum;
  e.f1 = classification_metrics(p1, labels).f1;
  return e;
}

}  // namespace

MemberResult train_member(const TrainConfig& config, const Architecture& arch,
                          std::span<const WindowedInstance> train,
                          std::span<const WindowedInstance> validation,
                          std::uint64_t member_seed) {
  config.validate();
  arch.validate();
  if (train.empty()) throw TrainingError("training split is empty");

  Rng init_rng = Rng::stream(member_seed, "init");
  Rng shuffle_rng = Rng::stream(member_seed, "shuffle");
  Rng weight_rng = Rng::stream(member_seed, "train_weight_noise");
  Rng dropout_rng = Rng::stream(member_seed, "train_dropout");
  Rng logit_rng = Rng::stream(member_seed, "train_logit_noise");

  MemberResult result;
  result.model = Model::create(arch, weight_kind(config.variant), init_rng,
                               VariationalInit{config.rho_init, config.prior_std});
  Model& model = result.model;
  Adam opt(model.trainable_parameters(), config.learning_rate);

  const std::size_t n = train.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  LossOptions lo;
  lo.temperature = config.temperature;
  lo.logit_samples = config.train_logit_samples;
  if (model.kind() == WeightKind::variational) {
    const double denom = config.kl_schedule == KlSchedule::per_minibatch
                             ? static_cast<double>(batches)
                             : static_cast<double>(n);
    lo.kl_weight = config.kl_scale / denom;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Model best = model.clone();
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double loss_sum = 0.0;
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t len = std::min(config.batch_size, n - begin);
      const Batch batch = make_batch(train, std::span(order).subspan(begin, len));
      LossTerms terms = elbo_loss(model, batch, weight_rng, dropout_rng, logit_rng, lo);
      const double total = terms.total.item();
      if (!std::isfinite(total)) {
        throw TrainingError("loss diverged (non-finite) at epoch " + std::to_string(epoch) +
                            ", minibatch " + std::to_string(b) + ": data loss " +
                            std::to_string(terms.data_loss) + ", kl " + std::to_string(terms.kl));
      }
      backward(terms.total);
      opt.step();
      loss_sum += total * static_cast<double>(len);
      log.kl = terms.kl;
    }
    log.train_loss = loss_sum / static_cast<double>(n);

    if (validation.empty()) {
      log.val_loss = log.train_loss;
      result.curve.push_back(log);
      result.best_epoch = epoch;
      result.best_val_loss = log.val_loss;
      continue;
    }
    const Evaluation ev = evaluate(model, config, validation, member_seed);
    log.val_loss = ev.loss;
    log.val_f1 = ev.f1;
    if (!std::isfinite(ev.loss)) {
      throw TrainingError("validation loss is non-finite at epoch " + std::to_string(epoch));
    }
    result.curve.push_back(log);
    if (ev.loss < best_loss) {
      best_loss = ev.loss;
      best = model.clone();
      result.best_epoch = epoch;
      result.best_val_loss = ev.loss;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  if (!validation.empty()) model.copy_values_from(best);
  model.set_requires_grad(false);
  model.set_trained(true);
  return result;
}

Checkpoint TrainedArtifact::checkpoint(std::size_t member) const {
  if (member >= members.size()) throw std::out_of_range("artifact: member index out of range");
  return Checkpoint{members[member].model, normalizer, std::string(variant_name(config.variant)),
                    config_hash};
}

PosteriorSampler TrainedArtifact::sampler(std::optional<std::size_t> n_samples) const {
  std::vector<Model> models;
  for (const auto& m : members) models.push_back(m.model);
  const std::size_t n = n_samples.value_or(config.inference_samples());
  return PosteriorSampler(sampler_strategy(config.variant), std::move(models), n);
}

namespace {

Architecture make_architecture(const TrainConfig& c, const DatasetSchema& schema) {
  Architecture a;
  a.input_features = schema.window_features();
  a.lstm_hidden = c.lstm_hidden;
  a.fc1 = c.fc1;
  a.fc2 = c.fc2;
  a.classes = 2;
  a.dropout = c.dropout;
  a.head = has_aleatoric_head(c.variant) ? HeadType::heteroscedastic : HeadType::softmax;
  return a;
}

std::uint64_t member_seed(const TrainConfig& c, std::size_t m) {
  if (!is_ensemble(c.variant)) return c.seed;
  return Rng::stream(c.seed, "ensemble_member", m).next_u64();
}

}  // namespace

TrainedArtifact train(const TrainConfig& config, const DataSplits& splits) {
  config.validate();
  TrainedArtifact art;
  art.config = config;
  art.config_hash = config_hash(config);
  art.schema = splits.train.schema;
  art.normalizer = fit_normalizer(splits.train);

  const WeightFn wf = weight_rule(config.weighting);
  const auto train_w = make_windows(apply_normalizer(art.normalizer, splits.train), config.lead, wf);
  const auto val_w =
      make_windows(apply_normalizer(art.normalizer, splits.validation), config.lead, wf);
  const Architecture arch = make_architecture(config, art.schema);

  const std::size_t M = config.ensemble_size();
  art.members.resize(M);
  parallel_for(M, config.jobs, [&](std::size_t m) {
    try {
      art.members[m] = train_member(config, arch, train_w, val_w, member_seed(config, m));
    } catch (const std::exception& e) {
      if (M == 1) throw;
      throw TrainingError("ensemble member " + std::to_string(m) + ": " + e.what());
    }
  });
  return art;
}

std::vector<WindowedInstance> prepare_instances(const TrainedArtifact& artifact,
                                                const Dataset& dataset, std::optional<int> lead) {
  if (!(dataset.schema == artifact.schema)) {
    throw DataError("dataset features do not match the trained model's features");
  }
  return make_windows(apply_normalizer(artifact.normalizer, dataset),
                      lead.value_or(artifact.config.lead), weight_rule(artifact.config.weighting));
}

std::string curves_csv(const TrainedArtifact& artifact) {
  std::ostringstream os;
  os << "member,epoch,train_loss,val_loss,val_f1,kl\n";
  for (std::size_t m = 0; m < artifact.members.size(); ++m) {
    for (const auto& e : artifact.members[m].curve) {
      os << m << ',' << e.epoch << ',' << format_double(e.train_loss) << ','
         << format_double(e.val_loss) << ',' << format_double(e.val_f1) << ','
         << format_double(e.kl) << '\n';
    }
  }
  return os.str();
}

namespace {

std::string member_file(std::size_t m) {
  std::string s = std::to_string(m);
  if (s.size() < 2) s.insert(0, 1, '0');
  return "member_" + s + ".json";
}

}  // namespace

void save_artifact(const TrainedArtifact& art, const std::string& dir) {
  ensure_directory(dir);
  write_text_file(join_path(dir, "config.json"), config_to_json(art.config));
  json meta;
  meta["format"] = "uqfire-artifact";
  meta["version"] = 1;
  meta["variant"] = variant_name(art.config.variant);
  meta["config_hash"] = art.config_hash;
  meta["dynamic_features"] = art.schema.dynamic_features;
  meta["static_features"] = art.schema.static_features;
  json members = json::array();
  for (std::size_t m = 0; m < art.members.size(); ++m) {
    const std::string file =
        art.members.size() == 1 ? "checkpoint.json" : "members/" + member_file(m);
    members.push_back({{"file", file},
                       {"best_epoch", art.members[m].best_epoch},
                       {"best_val_loss", art.members[m].best_val_loss}});
  }
  meta["members"] = members;
  write_text_file(join_path(dir, "artifact.json"), meta.dump(2) + "\n");
  write_text_file(join_path(dir, "curves.csv"), curves_csv(art));
  if (art.members.size() > 1) ensure_directory(join_path(dir, "members"));
  for (std::size_t m = 0; m < art.members.size(); ++m) {
    save_checkpoint(art.checkpoint(m), join_path(dir, members[m]["file"].get<std::string>()));
  }
}

TrainedArtifact load_artifact(const std::string& dir) {
  TrainedArtifact art;
  art.config = load_config(join_path(dir, "config.json"));
  json meta;
  try {
    meta = json::parse(read_text_file(join_path(dir, "artifact.json")));
    if (meta.value("format", "") != "uqfire-artifact") {
      throw std::runtime_error("artifact.json has the wrong format tag");
    }
    art.config_hash = meta.at("config_hash").get<std::string>();
    art.schema.dynamic_features = meta.at("dynamic_features").get<std::vector<std::string>>();
    art.schema.static_features = meta.at("static_features").get<std::vector<std::string>>();
    for (const auto& jm : meta.at("members")) {
      Checkpoint c = load_checkpoint(join_path(dir, jm.at("file").get<std::string>()));
      if (c.config_hash != art.config_hash) {
        throw std::runtime_error("checkpoint " + jm.at("file").get<std::string>() +
                                 " belongs to a different config");
      }
      art.normalizer = c.normalizer;
      MemberResult r;
      r.model = std::move(c.model);
      r.model.set_requires_grad(false);
      r.best_epoch = jm.at("best_epoch").get<std::size_t>();
      r.best_val_loss = jm.at("best_val_loss").get<double>();
      art.members.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("artifact " + dir + ": " + e.what());
  }
  if (art.members.empty()) throw std::runtime_error("artifact " + dir + ": no checkpoints");
  if (config_hash(art.config) != art.config_hash) {
    throw std::runtime_error("artifact " + dir + ": config.json does not match checkpoints");
  }
  // Curves are informational; reload them so a loaded artifact re-saves identically.
  std::istringstream curves(read_text_file(join_path(dir, "curves.csv")));
  std::string line;
  std::getline(curves, line);
  while (std::getline(curves, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != 6) throw std::runtime_error("artifact " + dir + ": malformed curves.csv");
    const auto m = static_cast<std::size_t>(parse_double(f[0]));
    if (m >= art.members.size()) throw std::runtime_error("artifact " + dir + ": bad member in curves.csv");
    EpochLog e;
    e.epoch = static_cast<std::size_t>(parse_double(f[1]));
    e.train_loss = parse_double(f[2]);
    e.val_loss = parse_double(f[3]);
    e.val_f1 = parse_double(f[4]);
    e.kl = parse_double(f[5]);
    art.members[m].curve.push_back(e);
  }
  return art;
}

SweepResult run_leadtime_sweep(const TrainConfig& base, const DataSplits& splits,
                               std::span<const int> leads, const InferenceOptions& inference) {
  if (leads.empty()) throw ConfigError("sweep: no leads given");
  for (int n : leads) {
    if (n < kMinLead || n > kMaxLead) throw ConfigError("sweep: lead outside [1, 10]");
  }
  SweepResult result;
  result.rows.resize(leads.size());
  result.artifacts.resize(leads.size());
  std::vector<std::vector<int>> label_sets(leads.size());
  const std::size_t outer_jobs = std::min(base.jobs, leads.size());

  parallel_for(leads.size(), outer_jobs, [&](std::size_t k) {
    const int n = leads[k];
    try {
      TrainConfig cfg = base;
      cfg.lead = n;
      cfg.seed = Rng::stream(base.seed, "lead", static_cast<std::uint64_t>(n)).next_u64();
      if (outer_jobs > 1) cfg.jobs = 1;
      TrainedArtifact art = train(cfg, splits);
      const auto test = prepare_instances(art, splits.test);
      InferenceOptions opt = inference;
      opt.seed = cfg.seed;
      if (outer_jobs > 1) opt.jobs = 1;
      const auto reports = batch_reports(art.sampler(), test, opt);
      const auto rows = to_prediction_rows(test, reports, opt.reduction);
      std::vector<double> p;
      std::vector<int> y;
      double au = 0.0, eu = 0.0;
      for (const auto& r : rows) {
        p.push_back(r.p_class1);
        y.push_back(r.label);
        au += r.au;
        eu += r.eu;
      }
      SweepRow row;
      row.lead = n;
      row.auprc = auprc(p, y);
      row.f1 = classification_metrics(p, y).f1;
      row.mean_au = au / static_cast<double>(rows.size());
      row.mean_eu = eu / static_cast<double>(rows.size());
      row.test_size = rows.size();
      result.rows[k] = row;
      label_sets[k] = std::move(y);
      result.artifacts[k] = std::move(art);
    } catch (const std::exception& e) {
      throw TrainingError("lead " + std::to_string(n) + ": " + e.what());
    }
  });
  for (std::size_t k = 1; k < label_sets.size(); ++k) {
    if (label_sets[k] != label_sets[0]) {
      throw TrainingError("sweep: test labels differ between leads");
    }
  }
  return result;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "lead,auprc,f1,mean_au,mean_eu,test_size\n";
  for (const auto& r : rows) {
    os << r.lead << ',' << format_double(r.auprc) << ',' << format_double(r.f1) << ','
       << format_double(r.mean_au) << ',' << format_double(r.mean_eu) << ',' << r.test_size
       << '\n';
  }
  return os.str();
}

std::vector<int> parse_leads(std::string_view text) {
  auto parse_one = [&](std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw ConfigError("leads: cannot parse '" + std::string(text) + "'");
    }
    if (v < kMinLead || v > kMaxLead) throw ConfigError("leads: lead outside [1, 10]");
    return v;
  };
  std::vector<int> out;
  if (const auto dots = text.find(".."); dots != std::string_view::npos) {
    const int a = parse_one(text.substr(0, dots));
    const int b = parse_one(text.substr(dots + 2));
    if (a > b) throw ConfigError("leads: empty range '" + std::string(text) + "'");
    for (int v = a; v <= b; ++v) out.push_back(v);
    return out;
  }
  for (auto part : split_fields(text, ',')) out.push_back(parse_one(part));
  return out;
}

}  // namespace uqfire
