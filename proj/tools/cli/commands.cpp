#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "manifest.hpp"
#include "svg.hpp"
#include "uqfire/io_util.hpp"
#include "uqfire/metrics.hpp"
#include "uqfire/synth.hpp"
#include "uqfire/training.hpp"
#include "uqfire/uncertainty.hpp"

namespace uqfire::cli {

using json = nlohmann::ordered_json;

std::string default_output_root() {
  if (const char* root = std::getenv("UQFIRE_OUT"); root && *root) return root;
  return "uqfire_runs";
}

namespace {

// ---------------------------------------------------------------------------
// Shared option handling

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_jobs) {
  cmd->add_option("--seed", c.seed, "Root seed for every random stream");
  cmd->add_option("--out", c.out, "Output directory (default $UQFIRE_OUT/<command>)");
  if (with_jobs) {
    cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  }
}

std::string output_dir(const Common& c, const std::string& command) {
  return c.out.empty() ? join_path(default_output_root(), command) : c.out;
}

YearRange parse_years(const std::string& text) {
  auto one = [&](std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw UsageError("cannot parse year range '" + text + "' (expected YYYY or YYYY..YYYY)");
    }
    return v;
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const int y = one(text);
    return {y, y};
  }
  return {one(std::string_view(text).substr(0, dots)),
          one(std::string_view(text).substr(dots + 2))};
}

struct SplitArgs {
  std::string train = "2006..2019";
  std::string validation = "2020";
  std::string test = "2021..2022";
};

void add_split_options(CLI::App* cmd, SplitArgs& s) {
  cmd->add_option("--train-years", s.train, "Training years, e.g. 2006..2019")->capture_default_str();
  cmd->add_option("--val-years", s.validation, "Validation years")->capture_default_str();
  cmd->add_option("--test-years", s.test, "Test years")->capture_default_str();
}

SplitSpec make_split_spec(const SplitArgs& s) {
  SplitSpec spec;
  spec.train = parse_years(s.train);
  spec.validation = parse_years(s.validation);
  spec.test = parse_years(s.test);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return spec;
}

json split_json(const SplitSpec& s) {
  auto r = [](const YearRange& y) { return json{y.first, y.last}; };
  return {{"train", r(s.train)}, {"validation", r(s.validation)}, {"test", r(s.test)}};
}

std::vector<std::string> argv_list(int argc, const char* const* argv) {
  std::vector<std::string> v;
  for (int i = 1; i < argc; ++i) v.emplace_back(argv[i]);
  return v;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Common common;
  SynthParams params;
  std::string config;
  std::string grid;  // WxH
  std::string grid_date = "2021-07-15";
};

json synth_json(const SynthParams& p) {
  return {{"n_positives", p.n_positives},
          {"noise_sigma", p.noise_sigma},
          {"seasonal_amplitude", p.seasonal_amplitude},
          {"interannual_drift", p.interannual_drift},
          {"flip_rate", p.flip_rate},
          {"noise_heterogeneity", p.noise_heterogeneity},
          {"first_year", p.first_year},
          {"last_year", p.last_year},
          {"dynamic_dim", p.dynamic_dim},
          {"static_dim", p.static_dim},
          {"class_gap", p.class_gap},
          {"signal_decay_days", p.signal_decay_days},
          {"ar_coeff", p.ar_coeff}};
}

SynthParams synth_from_json(const std::string& text) {
  SynthParams p;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("synth config: invalid JSON: ") + e.what());
  }
  const json defaults = synth_json(p);
  for (const auto& [key, v] : j.items()) {
    if (!defaults.contains(key)) throw UsageError("synth config: unknown key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_positives", p.n_positives);
    get("noise_sigma", p.noise_sigma);
    get("seasonal_amplitude", p.seasonal_amplitude);
    get("interannual_drift", p.interannual_drift);
    get("flip_rate", p.flip_rate);
    get("noise_heterogeneity", p.noise_heterogeneity);
    get("first_year", p.first_year);
    get("last_year", p.last_year);
    get("dynamic_dim", p.dynamic_dim);
    get("static_dim", p.static_dim);
    get("class_gap", p.class_gap);
    get("signal_decay_days", p.signal_decay_days);
    get("ar_coeff", p.ar_coeff);
  } catch (const json::exception& e) {
    throw UsageError(std::string("synth config: bad value: ") + e.what());
  }
  return p;
}

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic fire / non-fire dataset");
  add_common(cmd, a.common, false);
  auto& p = a.params;
  cmd->add_option("--config", a.config, "JSON file with generator parameters");
  cmd->add_option("--positives", p.n_positives, "Fire records (non-fire = 2x)");
  cmd->add_option("--noise", p.noise_sigma, "Day-to-day AR noise scale");
  cmd->add_option("--seasonal", p.seasonal_amplitude, "Seasonal cycle amplitude");
  cmd->add_option("--drift", p.interannual_drift, "Interannual drift per year");
  cmd->add_option("--flip-rate", p.flip_rate, "Label flip probability")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--heterogeneity", p.noise_heterogeneity, "Seasonal modulation of flips")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--first-year", p.first_year);
  cmd->add_option("--last-year", p.last_year);
  cmd->add_option("--dynamic", p.dynamic_dim, "Dynamic feature count");
  cmd->add_option("--static", p.static_dim, "Static feature count");
  cmd->add_option("--gap", p.class_gap, "Day t-1 temperature gap between classes");
  cmd->add_option("--decay", p.signal_decay_days, "Class signal decay (days)");
  cmd->add_option("--ar", p.ar_coeff, "AR(1) coefficient of the daily noise");
  cmd->add_option("--grid", a.grid, "Generate a WxH danger grid instead (e.g. 16x16)");
  cmd->add_option("--grid-date", a.grid_date, "Target date of grid cells")->capture_default_str();
}

int cmd_synth(const SynthArgs& a, CLI::App& cmd, int argc, const char* const* argv,
              std::ostream& out) {
  RunManifest manifest{"synth", argv_list(argc, argv), {}, a.common.seed.value_or(0), {}, {},
                       utc_timestamp()};
  SynthParams p = a.params;
  if (!a.config.empty()) {
    p = synth_from_json(read_text_file(a.config));
    manifest.inputs.push_back(a.config);
    // Flags given explicitly override the file.
    const SynthParams& f = a.params;
    if (cmd.count("--positives")) p.n_positives = f.n_positives;
    if (cmd.count("--noise")) p.noise_sigma = f.noise_sigma;
    if (cmd.count("--seasonal")) p.seasonal_amplitude = f.seasonal_amplitude;
    if (cmd.count("--drift")) p.interannual_drift = f.interannual_drift;
    if (cmd.count("--flip-rate")) p.flip_rate = f.flip_rate;
    if (cmd.count("--heterogeneity")) p.noise_heterogeneity = f.noise_heterogeneity;
    if (cmd.count("--first-year")) p.first_year = f.first_year;
    if (cmd.count("--last-year")) p.last_year = f.last_year;
    if (cmd.count("--dynamic")) p.dynamic_dim = f.dynamic_dim;
    if (cmd.count("--static")) p.static_dim = f.static_dim;
    if (cmd.count("--gap")) p.class_gap = f.class_gap;
    if (cmd.count("--decay")) p.signal_decay_days = f.signal_decay_days;
    if (cmd.count("--ar")) p.ar_coeff = f.ar_coeff;
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  manifest.config = synth_json(p);

  std::optional<GridParams> grid;
  if (!a.grid.empty()) {
    GridParams g;
    const auto x = a.grid.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument("missing 'x'");
      g.width = std::stoul(a.grid.substr(0, x));
      g.height = std::stoul(a.grid.substr(x + 1));
      g.date = Date::parse(a.grid_date);
    } catch (const std::exception&) {
      throw UsageError("--grid expects WxH (e.g. 16x16) and --grid-date YYYY-MM-DD");
    }
    if (g.width == 0 || g.height == 0) throw UsageError("--grid dimensions must be >= 1");
    manifest.config["grid"] = {{"width", g.width}, {"height", g.height},
                               {"date", g.date.to_string()}};
    grid = g;
  }

  const std::string dir = output_dir(a.common, "synth");
  ensure_directory(dir);
  Rng rng = Rng::stream(manifest.seed, "synth");
  const Dataset ds = grid ? synth_grid(p, *grid, rng) : synth_generate(p, rng);
  save_dataset(ds, join_path(dir, "dataset.csv"));
  manifest.outputs.push_back("dataset.csv");
  write_manifest(manifest, dir);

  std::size_t pos = 0;
  for (const auto& r : ds.records) pos += r.label == 1;
  const std::size_t neg = ds.records.size() - pos;
  out << "wrote " << ds.records.size() << " records (" << pos << " fire, " << neg
      << " non-fire";
  if (pos > 0) {
    out << ", ratio " << std::fixed << std::setprecision(2)
        << static_cast<double>(neg) / static_cast<double>(pos) << std::defaultfloat;
  }
  out << ") to " << join_path(dir, "dataset.csv") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train / sweep configuration

struct TrainArgs {
  Common common;
  std::string data;
  std::string config;
  std::string variant;
  std::optional<int> lead;
  std::optional<std::size_t> members, n, s, train_s, epochs, batch_size, patience, hidden;
  std::optional<double> lr, dropout, temperature, kl_scale;
  std::string weighting, kl_schedule;
  SplitArgs split;
  std::string leads = "1..10";  // sweep only
  bool save_artifacts = false;  // sweep only
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  add_common(cmd, a.common, true);
  cmd->add_option("--data", a.data, "Dataset file")->required();
  cmd->add_option("--config", a.config, "JSON training config; flags override it");
  cmd->add_option("--variant", a.variant,
                  "deterministic, aleatoric_only, mcd, mcd+au, de, de+au, bbb, bbb+au");
  cmd->add_option("--members", a.members, "Ensemble size (de variants)");
  cmd->add_option("--n", a.n, "Inference weight samples");
  cmd->add_option("--s", a.s, "Inference logit-noise samples");
  cmd->add_option("--train-s", a.train_s, "Logit-noise samples inside the training loss");
  cmd->add_option("--epochs", a.epochs, "Maximum epochs");
  cmd->add_option("--batch-size", a.batch_size);
  cmd->add_option("--patience", a.patience, "Early-stopping patience (epochs)");
  cmd->add_option("--hidden", a.hidden, "LSTM and first FC width (second FC is half)");
  cmd->add_option("--lr", a.lr, "Learning rate");
  cmd->add_option("--dropout", a.dropout);
  cmd->add_option("--temperature", a.temperature, "Softmax temperature of the AU head");
  cmd->add_option("--kl-scale", a.kl_scale);
  cmd->add_option("--kl-schedule", a.kl_schedule, "per_sample or per_minibatch");
  cmd->add_option("--weighting", a.weighting, "burned_area or uniform");
  add_split_options(cmd, a.split);
}

TrainConfig resolve_config(const TrainArgs& a, RunManifest& manifest) {
  try {
    TrainConfig c;
    if (!a.config.empty()) {
      c = load_config(a.config);
      manifest.inputs.push_back(a.config);
    }
    if (!a.variant.empty()) c.variant = parse_variant(a.variant);
    if (a.common.seed) c.seed = *a.common.seed;
    if (a.lead) c.lead = *a.lead;
    if (a.members) c.members = *a.members;
    if (a.n) c.n_samples = *a.n;
    if (a.s) c.logit_samples = *a.s;
    if (a.train_s) c.train_logit_samples = *a.train_s;
    if (a.epochs) c.max_epochs = *a.epochs;
    if (a.batch_size) c.batch_size = *a.batch_size;
    if (a.patience) c.patience = *a.patience;
    if (a.hidden) {
      c.lstm_hidden = *a.hidden;
      c.fc1 = *a.hidden;
      c.fc2 = std::max<std::size_t>(1, *a.hidden / 2);
    }
    if (a.lr) c.learning_rate = *a.lr;
    if (a.dropout) c.dropout = *a.dropout;
    if (a.temperature) c.temperature = *a.temperature;
    if (a.kl_scale) c.kl_scale = *a.kl_scale;
    if (!a.kl_schedule.empty()) {
      if (a.kl_schedule == "per_sample") c.kl_schedule = KlSchedule::per_sample;
      else if (a.kl_schedule == "per_minibatch") c.kl_schedule = KlSchedule::per_minibatch;
      else throw ConfigError("--kl-schedule must be per_sample or per_minibatch");
    }
    if (!a.weighting.empty()) {
      if (a.weighting == "burned_area") c.weighting = Weighting::burned_area;
      else if (a.weighting == "uniform") c.weighting = Weighting::uniform;
      else throw ConfigError("--weighting must be burned_area or uniform");
    }
    c.jobs = a.common.jobs;
    c.validate();
    manifest.seed = c.seed;
    manifest.config = json::parse(config_to_json(c));
    return c;
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

DataSplits load_splits(const std::string& path, const SplitSpec& spec, RunManifest& manifest) {
  manifest.inputs.push_back(path);
  const Dataset ds = load_dataset(path);
  DataSplits splits = split_by_year(ds, spec);
  if (splits.train.records.empty()) throw DataError("no records fall in the training years");
  return splits;
}

int cmd_train(const TrainArgs& a, int argc, const char* const* argv, std::ostream& out,
              std::ostream& err) {
  RunManifest manifest{"train", argv_list(argc, argv), {}, 0, {}, {}, utc_timestamp()};
  const TrainConfig config = resolve_config(a, manifest);
  const SplitSpec spec = make_split_spec(a.split);
  manifest.config["splits"] = split_json(spec);
  const DataSplits splits = load_splits(a.data, spec, manifest);
  if (splits.excluded > 0) {
    err << "warning: " << splits.excluded << " records fall outside every split\n";
  }

  const TrainedArtifact art = train(config, splits);
  const std::string dir = output_dir(a.common, "train");
  save_artifact(art, dir);

  json metrics;
  metrics["variant"] = variant_name(config.variant);
  metrics["train_records"] = splits.train.records.size();
  metrics["validation_records"] = splits.validation.records.size();
  json members = json::array();
  for (const auto& m : art.members) {
    json jm{{"best_epoch", m.best_epoch}, {"epochs_run", m.curve.size()},
            {"best_val_loss", m.best_val_loss}};
    for (const auto& e : m.curve) {
      if (e.epoch == m.best_epoch) jm["best_val_f1"] = e.val_f1;
    }
    members.push_back(std::move(jm));
  }
  metrics["members"] = std::move(members);
  write_text_file(join_path(dir, "metrics.json"), metrics.dump(2) + "\n");

  manifest.outputs = {"config.json", "artifact.json", "curves.csv", "metrics.json"};
  if (art.members.size() == 1) {
    manifest.outputs.push_back("checkpoint.json");
  } else {
    for (std::size_t m = 0; m < art.members.size(); ++m) {
      std::string idx = std::to_string(m);
      if (idx.size() < 2) idx.insert(0, 1, '0');
      manifest.outputs.push_back("members/member_" + idx + ".json");
    }
  }
  write_manifest(manifest, dir);
  out << "trained " << variant_name(config.variant) << " (" << art.members.size()
      << (art.members.size() == 1 ? " model" : " members") << ", best validation loss "
      << art.members.front().best_val_loss << ") -> " << dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// predict / map

struct PredictArgs {
  Common common;
  std::string artifact;
  std::string data;
  std::string split = "test";
  SplitArgs years;
  std::optional<std::size_t> n, s;
};

void add_predict_options(CLI::App* cmd, PredictArgs& a, bool with_split) {
  add_common(cmd, a.common, true);
  cmd->add_option("--artifact", a.artifact, "Trained artifact directory")->required();
  cmd->add_option("--data", a.data, "Dataset file")->required();
  cmd->add_option("--n", a.n, "Weight samples (default from the training config)");
  cmd->add_option("--s", a.s, "Logit-noise samples (default from the training config)");
  if (with_split) {
    cmd->add_option("--split", a.split, "train, validation, test or all")->capture_default_str()
        ->check(CLI::IsMember({"train", "validation", "test", "all"}));
    add_split_options(cmd, a.years);
  }
}

struct Inference {
  TrainedArtifact artifact;
  std::vector<WindowedInstance> instances;
  std::vector<UncertaintyReport> reports;
  Dataset dataset;
};

Inference infer(const PredictArgs& a, bool select_split, RunManifest& manifest) {
  Inference inf;
  manifest.inputs.push_back(join_path(a.artifact, "artifact.json"));
  manifest.inputs.push_back(a.data);
  inf.artifact = load_artifact(a.artifact);
  const TrainConfig& cfg = inf.artifact.config;
  manifest.seed = a.common.seed.value_or(0);

  std::optional<PosteriorSampler> sampler;
  try {
    sampler.emplace(inf.artifact.sampler(a.n ? std::optional<std::size_t>(*a.n) : std::nullopt));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  InferenceOptions opt;
  opt.logit_samples = a.s.value_or(cfg.logit_samples);
  if (opt.logit_samples == 0) throw UsageError("--s must be >= 1");
  opt.temperature = cfg.temperature;
  opt.seed = manifest.seed;
  opt.jobs = a.common.jobs;
  manifest.config = {{"variant", variant_name(cfg.variant)},
                     {"config_hash", inf.artifact.config_hash},
                     {"n", sampler->size()},
                     {"s", has_aleatoric_head(cfg.variant) ? opt.logit_samples : 1},
                     {"temperature", opt.temperature},
                     {"lead", cfg.lead}};

  inf.dataset = load_dataset(a.data);
  if (select_split && a.split != "all") {
    const SplitSpec spec = make_split_spec(a.years);
    manifest.config["split"] = a.split;
    manifest.config["splits"] = split_json(spec);
    DataSplits splits = split_by_year(inf.dataset, spec);
    inf.dataset = a.split == "train" ? std::move(splits.train)
                  : a.split == "validation" ? std::move(splits.validation)
                                            : std::move(splits.test);
  }
  inf.instances = prepare_instances(inf.artifact, inf.dataset);
  inf.reports = batch_reports(*sampler, inf.instances, opt);
  return inf;
}

int cmd_predict(const PredictArgs& a, int argc, const char* const* argv, std::ostream& out) {
  RunManifest manifest{"predict", argv_list(argc, argv), {}, 0, {}, {}, utc_timestamp()};
  const Inference inf = infer(a, true, manifest);
  const auto rows = to_prediction_rows(inf.instances, inf.reports);
  const std::string dir = output_dir(a.common, "predict");
  ensure_directory(dir);
  save_predictions(rows, join_path(dir, "predictions.csv"));
  manifest.outputs.push_back("predictions.csv");
  write_manifest(manifest, dir);
  out << "wrote " << rows.size() << " predictions to " << join_path(dir, "predictions.csv")
      << "\n";
  return kExitOk;
}

std::string raster_text(const std::vector<std::vector<double>>& grid) {
  std::ostringstream os;
  for (const auto& row : grid) {
    for (std::size_t x = 0; x < row.size(); ++x) {
      if (x) os << ' ';
      os << (std::isnan(row[x]) ? std::string("nan") : format_double(row[x]));
    }
    os << '\n';
  }
  return os.str();
}

int cmd_map(const PredictArgs& a, int argc, const char* const* argv, std::ostream& out) {
  RunManifest manifest{"map", argv_list(argc, argv), {}, 0, {}, {}, utc_timestamp()};
  // Coordinates are checked before any inference work.
  {
    const Dataset probe = load_dataset(a.data);
    for (const auto& r : probe.records) {
      if (!r.coords) throw DataError("record " + r.record_id + " has no grid coordinates");
    }
  }
  const Inference inf = infer(a, false, manifest);
  const auto rows = to_prediction_rows(inf.instances, inf.reports);
  const std::string dir = output_dir(a.common, "map");
  ensure_directory(dir);

  std::ostringstream cells;
  cells << "record_id,x,y,p_fire,eu,au,tu\n";
  bool integral = true;
  double max_x = 0, max_y = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const GridCoord c = *inf.dataset.records[i].coords;
    cells << rows[i].record_id << ',' << format_double(c.x) << ',' << format_double(c.y) << ','
          << format_double(rows[i].p_class1) << ',' << format_double(rows[i].eu) << ','
          << format_double(rows[i].au) << ',' << format_double(rows[i].tu) << '\n';
    integral = integral && c.x >= 0 && c.y >= 0 && c.x == std::floor(c.x) && c.y == std::floor(c.y);
    max_x = std::max(max_x, c.x);
    max_y = std::max(max_y, c.y);
  }
  write_text_file(join_path(dir, "cells.csv"), cells.str());
  manifest.outputs.push_back("cells.csv");

  if (integral && !rows.empty()) {
    const auto w = static_cast<std::size_t>(max_x) + 1;
    const auto h = static_cast<std::size_t>(max_y) + 1;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::map<std::string, std::vector<std::vector<double>>> layers;
    for (const char* name : {"p_fire", "eu", "au", "tu"}) {
      layers[name].assign(h, std::vector<double>(w, nan));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const GridCoord c = *inf.dataset.records[i].coords;
      const auto x = static_cast<std::size_t>(c.x);
      const auto y = static_cast<std::size_t>(c.y);
      layers["p_fire"][y][x] = rows[i].p_class1;
      layers["eu"][y][x] = rows[i].eu;
      layers["au"][y][x] = rows[i].au;
      layers["tu"][y][x] = rows[i].tu;
    }
    for (const auto& [name, grid] : layers) {
      write_text_file(join_path(dir, name + ".txt"), raster_text(grid));
      manifest.outputs.push_back(name + ".txt");
    }
  }
  write_manifest(manifest, dir);
  out << "mapped " << rows.size() << " cells -> " << dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  Common common;
  std::string predictions;
  std::size_t bins = 10;
  std::size_t steps = 10;
  std::size_t density_bins = 20;
  double threshold = 0.5;
  bool keep_below = false;
  bool svg = false;
};

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json num_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }
std::string fmt_num(double v) { return std::isfinite(v) ? format_double(v) : ""; }

int cmd_report(const ReportArgs& a, int argc, const char* const* argv, std::ostream& out) {
  RunManifest manifest{"report", argv_list(argc, argv), {}, a.common.seed.value_or(0), {}, {},
                       utc_timestamp()};
  manifest.inputs.push_back(a.predictions);
  manifest.config = {{"bins", a.bins},
                     {"steps", a.steps},
                     {"density_bins", a.density_bins},
                     {"threshold", a.threshold},
                     {"correlation_keeps", a.keep_below ? "at_or_below" : "above"}};
  const auto rows = load_predictions(a.predictions);
  if (rows.empty()) throw DataError("prediction file has no rows");
  const std::string dir = output_dir(a.common, "report");
  ensure_directory(dir);
  auto emit = [&](const std::string& name, const std::string& content) {
    write_text_file(join_path(dir, name), content);
    manifest.outputs.push_back(name);
  };

  json summary;
  json notes = json::array();
  summary["n"] = rows.size();

  const auto cm = classification_metrics(rows, a.threshold);
  summary["classification"] = {{"threshold", a.threshold},     {"precision", cm.precision},
                               {"recall", cm.recall},          {"f1", cm.f1},
                               {"tp", cm.tp},                  {"fp", cm.fp},
                               {"fn", cm.fn},                  {"tn", cm.tn},
                               {"no_positive_predictions", cm.no_positive_predictions}};
  {
    std::vector<double> p;
    std::vector<int> y;
    for (const auto& r : rows) {
      p.push_back(r.p_class1);
      y.push_back(r.label);
    }
    try {
      summary["classification"]["auroc"] = auroc(p, y);
      summary["classification"]["auprc"] = auprc(p, y);
    } catch (const MetricError& e) {
      summary["classification"]["auroc"] = nullptr;
      summary["classification"]["auprc"] = nullptr;
      notes.push_back(std::string("ranking metrics undefined: ") + e.what());
    }
  }
  double eu = 0, au = 0, tu = 0;
  for (const auto& r : rows) {
    eu += r.eu;
    au += r.au;
    tu += r.tu;
  }
  const double n = static_cast<double>(rows.size());
  summary["mean_uncertainty"] = {{"eu", eu / n}, {"au", au / n}, {"tu", tu / n}};

  const auto rel = reliability(rows, a.bins);
  summary["ece"] = rel.ece;
  {
    std::ostringstream os;
    os << "bin,lower,upper,count,accuracy,confidence\n";
    for (std::size_t b = 0; b < rel.bins.size(); ++b) {
      const auto& r = rel.bins[b];
      os << b << ',' << format_double(r.lower) << ',' << format_double(r.upper) << ','
         << r.count << ',' << (r.count ? format_double(r.accuracy) : "") << ','
         << (r.count ? format_double(r.confidence) : "") << '\n';
    }
    emit("reliability.csv", os.str());
  }
  {
    const auto bins = metrics_by_confidence_bin(rows, a.bins);
    std::ostringstream os;
    os << "bin,lower,upper,count,f1,auprc\n";
    for (std::size_t b = 0; b < bins.size(); ++b) {
      os << b << ',' << format_double(bins[b].lower) << ',' << format_double(bins[b].upper)
         << ',' << bins[b].count << ',' << fmt_opt(bins[b].f1) << ',' << fmt_opt(bins[b].auprc)
         << '\n';
    }
    emit("confidence_bins.csv", os.str());
  }

  json discard = json::object();
  std::vector<Series> discard_series;
  for (ErrorMeasure m : {ErrorMeasure::loss, ErrorMeasure::f1, ErrorMeasure::auprc}) {
    const std::string name(error_measure_name(m));
    try {
      const auto c = discard_test(rows, m, a.steps);
      std::ostringstream os;
      os << "fraction,retained,error,positive_fraction\n";
      for (std::size_t k = 0; k < c.fractions.size(); ++k) {
        os << format_double(c.fractions[k]) << ',' << c.retained[k] << ',' << fmt_num(c.error[k])
           << ',' << format_double(c.positive_fraction[k]) << '\n';
      }
      emit("discard_" + name + ".csv", os.str());
      json curve = json::array();
      for (double e : c.error) curve.push_back(num_json(e));
      discard[name] = {{"mf", c.mf}, {"di", c.di}, {"error", curve}};
      discard_series.push_back({name, c.fractions, c.error});
    } catch (const MetricError& e) {
      discard[name] = nullptr;
      notes.push_back("discard test (" + name + ") skipped: " + e.what());
    }
  }
  summary["discard"] = std::move(discard);

  {
    const auto d = density_summary(rows, a.density_bins);
    std::ostringstream os;
    os << "group,count,median";
    for (std::size_t b = 0; b < d.bins; ++b) os << ",bin" << b;
    os << '\n';
    json groups = json::object();
    for (const auto& g : d.groups) {
      os << g.name << ',' << g.count << ',' << fmt_opt(g.median);
      for (auto c : g.histogram) os << ',' << c;
      os << '\n';
      groups[g.name] = {{"count", g.count}, {"median", opt_json(g.median)}, {"empty", g.count == 0}};
    }
    emit("density.csv", os.str());
    summary["density"] = {{"lower", d.lower}, {"upper", d.upper}, {"groups", groups}};
  }

  try {
    const auto s = uncertainty_correctness_scores(rows);
    summary["uncertainty_correctness"] = {{"auroc", s.auroc}, {"auprc", s.auprc}};
  } catch (const MetricError& e) {
    summary["uncertainty_correctness"] = nullptr;
    notes.push_back(std::string("uncertainty-correctness undefined: ") + e.what());
  }

  {
    std::ostringstream os;
    os << "filter,threshold,retained,pearson,spearman\n";
    json corr = json::array();
    const double pcts[] = {25.0, 50.0, 75.0};
    std::vector<std::optional<double>> filters{std::nullopt, 25.0, 50.0, 75.0};
    for (const auto& f : filters) {
      const std::string label = f ? "p" + std::to_string(static_cast<int>(*f)) : "none";
      try {
        std::vector<CorrelationRow> res;
        if (f) {
          const double one[] = {*f};
          res = uncertainty_correlation(rows, one, !a.keep_below);
          res.erase(res.begin());
        } else {
          res = uncertainty_correlation(rows, pcts, !a.keep_below);
          res.resize(1);
        }
        const auto& r = res.front();
        os << label << ',' << format_double(r.threshold) << ',' << r.retained << ','
           << fmt_num(r.pearson) << ',' << fmt_num(r.spearman) << '\n';
        corr.push_back({{"filter", label}, {"retained", r.retained},
                        {"pearson", num_json(r.pearson)}, {"spearman", num_json(r.spearman)}});
      } catch (const MetricError& e) {
        os << label << ",,0,,\n";
        corr.push_back({{"filter", label}, {"retained", 0}, {"pearson", nullptr},
                        {"spearman", nullptr}});
        notes.push_back("correlation (" + label + ") undefined: " + e.what());
      }
    }
    emit("correlation.csv", os.str());
    summary["au_eu_correlation"] = std::move(corr);
  }
  summary["notes"] = std::move(notes);
  emit("summary.json", summary.dump(2) + "\n");

  if (a.svg) {
    Series diag{"model", {}, {}};
    for (const auto& b : rel.bins) {
      diag.x.push_back(b.count ? b.confidence : std::numeric_limits<double>::quiet_NaN());
      diag.y.push_back(b.count ? b.accuracy : std::numeric_limits<double>::quiet_NaN());
    }
    emit("reliability.svg",
         line_chart_svg("Reliability", "confidence", "accuracy", {diag}, 0, 1, 0, 1, true));
    if (!discard_series.empty()) {
      double lo = 0, hi = 1;
      for (const auto& s : discard_series) {
        for (double v : s.y) {
          if (std::isfinite(v)) hi = std::max(hi, v);
        }
      }
      emit("discard.svg", line_chart_svg("Discard test", "fraction discarded", "error",
                                         discard_series, 0, 1, lo, hi));
    }
  }
  write_manifest(manifest, dir);
  out << "report: n=" << rows.size() << " f1=" << cm.f1 << " ece=" << rel.ece << " -> " << dir
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep / stats

int cmd_sweep(const TrainArgs& a, int argc, const char* const* argv, std::ostream& out) {
  RunManifest manifest{"sweep", argv_list(argc, argv), {}, 0, {}, {}, utc_timestamp()};
  const TrainConfig config = resolve_config(a, manifest);
  std::vector<int> leads;
  try {
    leads = parse_leads(a.leads);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const SplitSpec spec = make_split_spec(a.split);
  manifest.config["splits"] = split_json(spec);
  manifest.config["leads"] = leads;
  const DataSplits splits = load_splits(a.data, spec, manifest);

  InferenceOptions opt;
  opt.logit_samples = config.logit_samples;
  opt.temperature = config.temperature;
  opt.jobs = config.jobs;
  const SweepResult res = run_leadtime_sweep(config, splits, leads, opt);

  const std::string dir = output_dir(a.common, "sweep");
  ensure_directory(dir);
  write_text_file(join_path(dir, "sweep.csv"), sweep_csv(res.rows));
  manifest.outputs.push_back("sweep.csv");
  if (a.save_artifacts) {
    for (std::size_t k = 0; k < leads.size(); ++k) {
      std::string name = std::to_string(leads[k]);
      if (name.size() < 2) name.insert(0, 1, '0');
      save_artifact(res.artifacts[k], join_path(dir, "lead_" + name));
      manifest.outputs.push_back("lead_" + name + "/artifact.json");
    }
  }
  write_manifest(manifest, dir);
  out << "lead  auprc   mean_au   mean_eu\n";
  for (const auto& r : res.rows) {
    out << std::setw(4) << r.lead << "  " << std::fixed << std::setprecision(4) << r.auprc << "  "
        << std::setprecision(5) << r.mean_au << "  " << r.mean_eu << std::defaultfloat << "\n";
  }
  return kExitOk;
}

struct StatsArgs {
  Common common;
  std::string data;
  std::string by = "month";
};

int cmd_stats(const StatsArgs& a, int argc, const char* const* argv, std::ostream& out) {
  RunManifest manifest{"stats", argv_list(argc, argv), {}, 0, {a.data}, {}, utc_timestamp()};
  GroupKey key;
  try {
    key = parse_group_key(a.by);
  } catch (const MetricError& e) {
    throw UsageError(e.what());
  }
  manifest.config = {{"group_by", std::string(group_key_name(key))}};
  const Dataset ds = load_dataset(a.data);
  const auto stats = group_statistics(ds, key);
  std::ostringstream os;
  os << group_key_name(key) << ",feature,count,mean,q25,median,q75\n";
  for (const auto& s : stats) {
    os << s.group << ',' << s.feature << ',' << s.count << ',' << format_double(s.mean) << ','
       << format_double(s.q25) << ',' << format_double(s.median) << ','
       << format_double(s.q75) << '\n';
  }
  const std::string dir = output_dir(a.common, "stats");
  ensure_directory(dir);
  write_text_file(join_path(dir, "groups.csv"), os.str());
  manifest.outputs.push_back("groups.csv");
  write_manifest(manifest, dir);
  out << "wrote " << stats.size() << " group statistics -> " << join_path(dir, "groups.csv")
      << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"uqfire: wildfire danger forecasting with uncertainty estimates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(library_version()));

  SynthArgs synth;
  add_synth(app, synth);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one model variant");
  add_train_options(train_cmd, train_args);
  train_cmd->add_option("--lead", train_args.lead, "Lead time in days (1-10)");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Predict with uncertainty decomposition");
  add_predict_options(predict_cmd, predict_args, true);

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Evaluate a prediction file");
  add_common(report_cmd, report.common, false);
  report_cmd->add_option("--predictions", report.predictions, "Prediction file")->required();
  report_cmd->add_option("--bins", report.bins, "Reliability bins")->capture_default_str()
      ->check(CLI::PositiveNumber);
  report_cmd->add_option("--steps", report.steps, "Discard-test steps")->capture_default_str()
      ->check(CLI::PositiveNumber);
  report_cmd->add_option("--density-bins", report.density_bins, "Histogram bins")->capture_default_str()
      ->check(CLI::PositiveNumber);
  report_cmd->add_option("--threshold", report.threshold, "Decision threshold")->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  report_cmd->add_flag("--keep-below", report.keep_below,
                       "Correlation filters keep samples at or below the TU percentile");
  report_cmd->add_flag("--svg", report.svg, "Also write simple SVG plots");

  PredictArgs map_args;
  auto* map_cmd = app.add_subcommand("map", "Danger and uncertainty layers for a grid dataset");
  add_predict_options(map_cmd, map_args, false);

  TrainArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate one model per lead time");
  add_train_options(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--leads", sweep_args.leads, "Lead times, e.g. 1..10 or 1,3,5")->capture_default_str();
  sweep_cmd->add_flag("--save-artifacts", sweep_args.save_artifacts,
                      "Keep the trained artifact of every lead");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Per-group feature statistics of a dataset");
  add_common(stats_cmd, stats.common, false);
  stats_cmd->add_option("--data", stats.data, "Dataset file")->required();
  stats_cmd->add_option("--by", stats.by, "year, month or class")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*app.get_subcommand("synth")) {
      return cmd_synth(synth, *app.get_subcommand("synth"), argc, argv, out);
    }
    if (*train_cmd) return cmd_train(train_args, argc, argv, out, err);
    if (*predict_cmd) return cmd_predict(predict_args, argc, argv, out);
    if (*report_cmd) return cmd_report(report, argc, argv, out);
    if (*map_cmd) return cmd_map(map_args, argc, argv, out);
    if (*sweep_cmd) return cmd_sweep(sweep_args, argc, argv, out);
    if (*stats_cmd) return cmd_stats(stats, argc, argv, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace uqfire::cli
