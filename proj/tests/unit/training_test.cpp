#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "uqfire/checkpoint.hpp"
#include "uqfire/io_util.hpp"
#include "uqfire/metrics.hpp"
#include "uqfire/synth.hpp"
#include "uqfire/training.hpp"

namespace uqfire {
namespace {

SplitSpec desk_split() {
  SplitSpec s;
  s.train = {2006, 2016};
  s.validation = {2017, 2018};
  s.test = {2019, 2022};
  return s;
}

DataSplits small_splits(double noise = 1.0, std::size_t positives = 60, double flip = 0.0) {
  SynthParams p;
  p.n_positives = positives;
  p.noise_sigma = noise;
  p.flip_rate = flip;
  if (noise == 0.0) {
    // Without any nuisance variation the classes are linearly separable.
    p.seasonal_amplitude = 0.0;
    p.interannual_drift = 0.0;
  }
  Rng rng(21);
  return split_by_year(synth_generate(p, rng), desk_split());
}

TrainConfig small_config(Variant v) {
  TrainConfig c;
  c.variant = v;
  c.lstm_hidden = 6;
  c.fc1 = 6;
  c.fc2 = 4;
  c.batch_size = 32;
  c.learning_rate = 5e-3;
  c.max_epochs = 6;
  c.patience = 3;
  c.seed = 5;
  c.logit_samples = 20;
  c.train_logit_samples = 5;
  c.dropout = 0.1;
  if (is_ensemble(v)) c.members = 2;
  if (!is_ensemble(v) && v != Variant::deterministic && v != Variant::aleatoric_only) {
    c.n_samples = 4;
  }
  return c;
}

TEST(Variants, NamesRoundTrip) {
  ASSERT_EQ(all_variants().size(), 8u);
  for (Variant v : all_variants()) EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_TRUE(has_aleatoric_head(Variant::bbb_au));
  EXPECT_FALSE(has_aleatoric_head(Variant::de));
  EXPECT_TRUE(is_ensemble(Variant::de_au));
  EXPECT_EQ(weight_kind(Variant::bbb), WeightKind::variational);
  EXPECT_EQ(sampler_strategy(Variant::mcd_au), SamplerStrategy::mc_dropout);
}

TEST(Variants, UnknownNameListsAllChoices) {
  try {
    parse_variant("swag");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (Variant v : all_variants()) {
      EXPECT_NE(msg.find(std::string(variant_name(v))), std::string::npos) << msg;
    }
  }
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c = small_config(Variant::de_au);
  c.kl_schedule = KlSchedule::per_minibatch;
  c.weighting = Weighting::uniform;
  c.lead = 7;
  const TrainConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  c.jobs = 8;
  EXPECT_EQ(config_hash(back), config_hash(c));  // thread count does not change results
  c.seed = 6;
  EXPECT_NE(config_hash(back), config_hash(c));
}

TEST(Config, MissingKeysKeepDefaultsAndUnknownKeysFail) {
  const TrainConfig c = config_from_json(R"({"variant":"bbb+au","lead":3})");
  EXPECT_EQ(c.variant, Variant::bbb_au);
  EXPECT_EQ(c.lead, 3);
  EXPECT_EQ(c.batch_size, TrainConfig{}.batch_size);
  EXPECT_THROW(config_from_json(R"({"variant":"bbb","learning_rat":0.1})"), ConfigError);
  EXPECT_THROW(config_from_json("not json"), ConfigError);
}

TEST(Config, ValidationRejectsInapplicableFields) {
  TrainConfig c = small_config(Variant::bbb);
  c.members = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Variant::bbb);
  c.lead = 11;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Variant::mcd);
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Variant::deterministic);
  c.n_samples = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, ResolvedDefaults) {
  TrainConfig c;
  c.variant = Variant::de;
  EXPECT_EQ(c.ensemble_size(), 10u);
  EXPECT_EQ(c.inference_samples(), 10u);
  c.variant = Variant::bbb_au;
  EXPECT_EQ(c.inference_samples(), 50u);
  c.variant = Variant::deterministic;
  EXPECT_EQ(c.inference_samples(), 1u);
}

TEST(Weights, EventWeightRule) {
  SampleRecord r;
  r.label = 0;
  r.burned_area_ha = 0.0;
  EXPECT_EQ(event_weight(r), 1.0);
  r.label = 1;
  EXPECT_EQ(event_weight(r), 1.0);
  r.burned_area_ha = std::exp(1.0) - 1.0;
  EXPECT_NEAR(event_weight(r), 2.0, 1e-15);
  r.burned_area_ha = -1.0;
  EXPECT_THROW(event_weight(r), DataError);
  EXPECT_EQ(weight_rule(Weighting::uniform)(r), 1.0);
}

TEST(Weights, WeightedCrossEntropy) {
  const Tensor p = Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}});
  const int y[] = {0, 1};
  const double w[] = {1.0, 3.0};
  EXPECT_NEAR(weighted_cross_entropy(p, y, w).item(), std::log(2.0), 1e-11);
  const Tensor q = Tensor::matrix({{0.2, 0.8}, {0.6, 0.4}});
  const double eq[] = {2.0, 2.0};
  EXPECT_NEAR(weighted_cross_entropy(q, y, eq).item(),
              -0.5 * (std::log(0.2) + std::log(0.4)), 1e-11);
  const Tensor sure = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
  EXPECT_NEAR(weighted_cross_entropy(sure, y, w).item(), 0.0, 1e-11);
}

TEST(Adam, OneSmallStepDecreasesQuadratic) {
  const Tensor w = Tensor::vector({1.5}, true);
  Adam opt({w}, 1e-3);
  const double before = w[0] * w[0];
  backward(sum(w * w));
  opt.step();
  EXPECT_LT(w[0] * w[0], before);
  EXPECT_FALSE(w.has_grad());
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Training, ZeroLearningRateLeavesParametersUnchanged) {
  const DataSplits splits = small_splits();
  TrainConfig c = small_config(Variant::deterministic);
  c.learning_rate = 0.0;
  c.max_epochs = 3;
  c.patience = 10;
  const auto art = train(c, splits);
  Rng init = Rng::stream(c.seed, "init");
  Architecture arch = art.members[0].model.architecture();
  const Model fresh = Model::create(arch, WeightKind::deterministic, init);
  const auto& got = art.members[0].model.slots();
  for (std::size_t s = 0; s < got.size(); ++s) {
    for (std::size_t i = 0; i < got[s].value.size(); ++i) {
      ASSERT_EQ(got[s].value[i], fresh.slots()[s].value[i]) << got[s].name;
    }
  }
  const auto& curve = art.members[0].curve;
  for (const auto& e : curve) EXPECT_EQ(e.val_loss, curve[0].val_loss);
}

TEST(Training, SeparableDataIsLearned) {
  const DataSplits splits = small_splits(0.0, 200);
  TrainConfig c = small_config(Variant::deterministic);
  c.lstm_hidden = 8;
  c.fc1 = 8;
  c.max_epochs = 50;
  c.patience = 50;
  c.dropout = 0.0;
  c.learning_rate = 1e-2;
  c.weighting = Weighting::uniform;
  const auto art = train(c, splits);
  double best = 1e9;
  for (const auto& e : art.members[0].curve) best = std::min(best, e.train_loss);
  EXPECT_LT(best, 0.05);
}

TEST(Training, FixedSeedGivesIdenticalCheckpoint) {
  const DataSplits splits = small_splits();
  const TrainConfig c = small_config(Variant::bbb_au);
  const auto a = train(c, splits);
  const auto b = train(c, splits);
  EXPECT_EQ(content_hash(serialize_checkpoint(a.checkpoint(0))),
            content_hash(serialize_checkpoint(b.checkpoint(0))));
}

TEST(Training, EarlyStoppingKeepsBestEpoch) {
  const DataSplits splits = small_splits(1.5, 60, 0.2);
  TrainConfig c = small_config(Variant::deterministic);
  c.max_epochs = 25;
  c.patience = 4;
  c.learning_rate = 2e-2;
  const auto art = train(c, splits);
  const auto& m = art.members[0];
  ASSERT_FALSE(m.curve.empty());
  for (const auto& e : m.curve) EXPECT_LE(m.best_val_loss, e.val_loss + 1e-15);
  bool found = false;
  for (const auto& e : m.curve) found = found || (e.epoch == m.best_epoch && e.val_loss == m.best_val_loss);
  EXPECT_TRUE(found);
  EXPECT_LE(m.curve.size(), m.best_epoch + c.patience);
}

TEST(Training, EnsembleMembersDifferButSameSeedReproduces) {
  const DataSplits splits = small_splits();
  const TrainConfig c = small_config(Variant::de);
  const auto art = train(c, splits);
  ASSERT_EQ(art.members.size(), 2u);
  EXPECT_NE(art.members[0].model.slots()[0].value[0], art.members[1].model.slots()[0].value[0]);

  const Normalizer norm = fit_normalizer(splits.train);
  const auto tr = make_windows(apply_normalizer(norm, splits.train), 1);
  const auto va = make_windows(apply_normalizer(norm, splits.validation), 1);
  Architecture arch = art.members[0].model.architecture();
  const auto m1 = train_member(c, arch, tr, va, 77);
  const auto m2 = train_member(c, arch, tr, va, 77);
  EXPECT_EQ(serialize_checkpoint({m1.model, norm, "de", ""}),
            serialize_checkpoint({m2.model, norm, "de", ""}));
}

TEST(Training, ParallelMembersMatchSerial) {
  const DataSplits splits = small_splits();
  TrainConfig c = small_config(Variant::de_au);
  const auto serial = train(c, splits);
  c.jobs = 2;
  const auto parallel = train(c, splits);
  for (std::size_t m = 0; m < 2; ++m) {
    EXPECT_EQ(serialize_checkpoint(serial.checkpoint(m)),
              serialize_checkpoint(parallel.checkpoint(m)));
  }
}

TEST(Training, EveryVariantTrainsAndPredicts) {
  const DataSplits splits = small_splits();
  for (Variant v : all_variants()) {
    TrainConfig c = small_config(v);
    c.max_epochs = 2;
    const auto art = train(c, splits);
    const auto sampler = art.sampler();
    const auto inst = prepare_instances(art, splits.test);
    InferenceOptions opt;
    opt.logit_samples = 10;
    const auto reports = batch_reports(sampler, inst, opt);
    ASSERT_EQ(reports.size(), splits.test.records.size()) << variant_name(v);
    for (const auto& r : reports) {
      EXPECT_NEAR(r.tu[1], r.eu[1] + r.au[1], 1e-12);
      if (!has_aleatoric_head(v)) EXPECT_EQ(r.au[1], 0.0) << variant_name(v);
      if (v == Variant::deterministic) EXPECT_EQ(r.tu[1], 0.0);
    }
  }
}

TEST(Artifact, SaveLoadPreservesPredictions) {
  testing::TempDir dir("artifact");
  const DataSplits splits = small_splits();
  for (Variant v : {Variant::bbb_au, Variant::de}) {
    const TrainConfig c = small_config(v);
    const auto art = train(c, splits);
    const std::string path = dir.file(std::string(variant_name(v)));
    save_artifact(art, path);
    const auto back = load_artifact(path);
    EXPECT_EQ(back.config_hash, art.config_hash);
    EXPECT_EQ(back.normalizer, art.normalizer);
    EXPECT_EQ(back.members.size(), art.members.size());
    InferenceOptions opt;
    opt.logit_samples = 10;
    opt.seed = 3;
    const auto inst = prepare_instances(art, splits.test);
    const auto a = to_prediction_rows(inst, batch_reports(art.sampler(), inst, opt));
    const auto b = to_prediction_rows(inst, batch_reports(back.sampler(), inst, opt));
    EXPECT_EQ(a, b);
  }
}

TEST(Artifact, SchemaMismatchIsRejected) {
  const DataSplits splits = small_splits();
  const auto art = train(small_config(Variant::deterministic), splits);
  Dataset other = splits.test;
  other.schema.dynamic_features[0] = "renamed";
  EXPECT_THROW(prepare_instances(art, other), DataError);
}

TEST(Checkpoint, SerializationIsExact) {
  const DataSplits splits = small_splits();
  const auto art = train(small_config(Variant::bbb_au), splits);
  const std::string text = serialize_checkpoint(art.checkpoint(0));
  EXPECT_EQ(serialize_checkpoint(deserialize_checkpoint(text)), text);
  EXPECT_THROW(deserialize_checkpoint("{}"), std::exception);
}

TEST(Sweep, ParseLeads) {
  EXPECT_EQ(parse_leads("3"), (std::vector<int>{3}));
  EXPECT_EQ(parse_leads("1..4"), (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(parse_leads("1,2,5"), (std::vector<int>{1, 2, 5}));
  EXPECT_THROW(parse_leads("0..3"), ConfigError);
  EXPECT_THROW(parse_leads("x"), ConfigError);
}

TEST(Sweep, SingleLeadEqualsDirectTraining) {
  const DataSplits splits = small_splits();
  TrainConfig c = small_config(Variant::bbb_au);
  InferenceOptions opt;
  opt.logit_samples = 10;
  const int leads[] = {1};
  const auto res = run_leadtime_sweep(c, splits, leads, opt);
  ASSERT_EQ(res.rows.size(), 1u);
  EXPECT_EQ(res.rows[0].lead, 1);
  EXPECT_EQ(res.rows[0].test_size, splits.test.records.size());
  // The lead's model is trained from a seed derived from the root seed.
  TrainConfig direct = c;
  direct.seed = Rng::stream(c.seed, "lead", 1).next_u64();
  const auto art = train(direct, splits);
  EXPECT_EQ(serialize_checkpoint(art.checkpoint(0)),
            serialize_checkpoint(res.artifacts[0].checkpoint(0)));
}

TEST(Sweep, RowsFollowLeadOrder) {
  const DataSplits splits = small_splits();
  TrainConfig c = small_config(Variant::bbb_au);
  c.max_epochs = 2;
  InferenceOptions opt;
  opt.logit_samples = 5;
  const int leads[] = {1, 4, 9};
  const auto res = run_leadtime_sweep(c, splits, leads, opt);
  ASSERT_EQ(res.rows.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(res.rows[k].lead, leads[k]);
    EXPECT_EQ(res.artifacts[k].config.lead, leads[k]);
  }
  const std::string csv = sweep_csv(res.rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "lead,auprc,f1,mean_au,mean_eu,test_size");
}

}  // namespace
}  // namespace uqfire
