#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "uqfire/posterior.hpp"
#include "uqfire/uncertainty.hpp"

namespace uqfire {
namespace {

using testing::random_sample_set;

PredictiveSampleSet binary_set(std::size_t N, std::size_t S, std::initializer_list<double> class1) {
  PredictiveSampleSet set(N, S, 2);
  std::size_t k = 0;
  for (double v : class1) {
    set.probs[2 * k] = 1.0 - v;
    set.probs[2 * k + 1] = v;
    ++k;
  }
  return set;
}

TEST(Decompose, ConstantSamplesHaveNoUncertainty) {
  const auto r = decompose(binary_set(2, 3, {0.7, 0.7, 0.7, 0.7, 0.7, 0.7}));
  EXPECT_NEAR(r.p[1], 0.7, 1e-15);
  EXPECT_NEAR(r.eu[1], 0.0, 1e-15);
  EXPECT_NEAR(r.au[1], 0.0, 1e-15);
  EXPECT_NEAR(r.tu[1], 0.0, 1e-15);
}

TEST(Decompose, TwoWeightSamples) {
  const auto r = decompose(binary_set(2, 1, {0.6, 0.8}));
  EXPECT_NEAR(r.p[1], 0.7, 1e-15);
  EXPECT_NEAR(r.au[1], 0.0, 1e-15);
  EXPECT_NEAR(r.eu[1], 0.01, 1e-15);
  EXPECT_NEAR(r.tu[1], 0.01, 1e-15);
}

TEST(Decompose, TwoNoiseSamples) {
  const auto r = decompose(binary_set(1, 2, {0.4, 0.6}));
  EXPECT_NEAR(r.p[1], 0.5, 1e-15);
  EXPECT_NEAR(r.eu[1], 0.0, 1e-15);
  EXPECT_NEAR(r.au[1], 0.01, 1e-15);
  EXPECT_NEAR(r.tu[1], 0.01, 1e-15);
}

TEST(Decompose, TwoByTwo) {
  const auto r = decompose(binary_set(2, 2, {0.5, 0.7, 0.1, 0.3}));
  EXPECT_NEAR(r.p[1], 0.4, 1e-15);
  EXPECT_NEAR(r.eu[1], 0.04, 1e-15);
  EXPECT_NEAR(r.au[1], 0.01, 1e-15);
  EXPECT_NEAR(r.tu[1], 0.05, 1e-15);
  EXPECT_EQ(r.predicted_class, 0u);
}

TEST(Decompose, MatchesDirectDefinitions) {
  Rng rng(1);
  const auto set = random_sample_set(rng, 4, 5, 3);
  const auto r = decompose(set);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> pbar(4, 0.0);
    double p = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t s = 0; s < 5; ++s) pbar[i] += set.at(i, s, c) / 5.0;
      p += pbar[i] / 4.0;
    }
    double eu = 0, au = 0, tu = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      eu += (pbar[i] - p) * (pbar[i] - p) / 4.0;
      for (std::size_t s = 0; s < 5; ++s) {
        au += (set.at(i, s, c) - pbar[i]) * (set.at(i, s, c) - pbar[i]) / 20.0;
        tu += (set.at(i, s, c) - p) * (set.at(i, s, c) - p) / 20.0;
      }
    }
    EXPECT_NEAR(r.p[c], p, 1e-14);
    EXPECT_NEAR(r.eu[c], eu, 1e-14);
    EXPECT_NEAR(r.au[c], au, 1e-14);
    EXPECT_NEAR(r.tu[c], tu, 1e-14);
  }
}

TEST(Decompose, IdentityHoldsOnRandomSets) {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t N = 1 + rng.below(20), S = 1 + rng.below(20), K = 2 + rng.below(3);
    const auto set = random_sample_set(rng, N, S, K);
    EXPECT_LT(verify_decomposition(set), 1e-10);
    const auto r = decompose(set);
    double total = 0.0;
    for (double v : r.p) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
    if (N == 1) {
      for (std::size_t c = 0; c < K; ++c) {
        EXPECT_EQ(r.eu[c], 0.0);
        EXPECT_NEAR(r.tu[c], r.au[c], 1e-15);
      }
    }
    if (S == 1) {
      for (std::size_t c = 0; c < K; ++c) {
        EXPECT_EQ(r.au[c], 0.0);
        EXPECT_NEAR(r.tu[c], r.eu[c], 1e-15);
      }
    }
  }
}

TEST(Decompose, BinaryClassesShareUncertainty) {
  Rng rng(3);
  const auto r = decompose(random_sample_set(rng, 6, 4, 2));
  EXPECT_NEAR(r.eu[0], r.eu[1], 1e-15);
  EXPECT_NEAR(r.au[0], r.au[1], 1e-15);
}

TEST(Decompose, ValidateRejectsOffSimplexRows) {
  auto set = binary_set(1, 2, {0.4, 0.6});
  EXPECT_NO_THROW(set.validate());
  set.at(0, 1, 0) = 0.9;
  EXPECT_THROW(set.validate(), std::invalid_argument);
  EXPECT_THROW(decompose(PredictiveSampleSet(0, 1, 2)), std::invalid_argument);
}

TEST(ScalarUncertainty, Reductions) {
  const std::vector<double> v{0.1, 0.3, 0.2};
  EXPECT_EQ(scalar_uncertainty(v, 2, UncertaintyReduction::positive_class), 0.3);
  EXPECT_EQ(scalar_uncertainty(v, 2, UncertaintyReduction::predicted_class), 0.2);
  EXPECT_EQ(scalar_uncertainty(v, 0, UncertaintyReduction::max_over_classes), 0.3);
}

// Small trained-looking models for sampler tests.

Architecture tiny_arch(HeadType head, double dropout = 0.0) {
  Architecture a;
  a.input_features = 2;
  a.lstm_hidden = 3;
  a.fc1 = 4;
  a.fc2 = 3;
  a.dropout = dropout;
  a.head = head;
  return a;
}

Model trained_model(const Architecture& arch, WeightKind kind, std::uint64_t seed,
                    double rho_init = -5.0) {
  Rng rng(seed);
  Model m = Model::create(arch, kind, rng, {rho_init, 1.0});
  m.set_requires_grad(false);
  m.set_trained(true);
  return m;
}

std::vector<WindowedInstance> random_instances(std::size_t n, std::size_t features, Rng& rng) {
  std::vector<WindowedInstance> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].record_id = "R" + std::to_string(i);
    out[i].features.resize(kWindowDays * features);
    for (double& v : out[i].features) v = rng.normal();
    out[i].label = static_cast<int>(i % 2);
    out[i].weight = 1.0 + 0.5 * static_cast<double>(i % 3);
  }
  return out;
}

TEST(Sampler, DeterministicIsSinglePassAndRepeatable) {
  const auto arch = tiny_arch(HeadType::softmax);
  PosteriorSampler s(SamplerStrategy::deterministic,
                     {trained_model(arch, WeightKind::deterministic, 1)});
  EXPECT_EQ(s.size(), 1u);
  Rng rng(2);
  const Tensor x = make_batch(random_instances(3, 2, rng)).x;
  Rng a(5), b(6);
  const auto p1 = draw_predictions(s, x, a);
  const auto p2 = draw_predictions(s, x, b);
  ASSERT_EQ(p1.size(), 1u);
  for (std::size_t i = 0; i < p1[0].logits.size(); ++i) {
    EXPECT_EQ(p1[0].logits[i], p2[0].logits[i]);
  }
}

TEST(Sampler, DegenerateBbbMatchesMeanNetwork) {
  const auto arch = tiny_arch(HeadType::softmax);
  const Model m = trained_model(arch, WeightKind::variational, 3, -40.0);
  PosteriorSampler s(SamplerStrategy::bbb, {m}, 8);
  Rng rng(4);
  const Tensor x = make_batch(random_instances(2, 2, rng)).x;
  Rng drop(0);
  const auto mean = network_forward(arch, m.mean_weights(), x, DropoutMode::eval, drop);
  Rng r(9);
  for (const auto& out : draw_predictions(s, x, r)) {
    for (std::size_t i = 0; i < out.logits.size(); ++i) {
      EXPECT_NEAR(out.logits[i], mean.logits[i], 1e-10);
    }
  }
}

TEST(Sampler, McDropoutWithRateZeroIsConstant) {
  const auto arch = tiny_arch(HeadType::softmax, 0.0);
  PosteriorSampler s(SamplerStrategy::mc_dropout,
                     {trained_model(arch, WeightKind::deterministic, 5)}, 5);
  Rng rng(6);
  const Tensor x = make_batch(random_instances(2, 2, rng)).x;
  Rng r(1);
  const auto outs = draw_predictions(s, x, r);
  ASSERT_EQ(outs.size(), 5u);
  for (const auto& o : outs) {
    for (std::size_t i = 0; i < o.logits.size(); ++i) EXPECT_EQ(o.logits[i], outs[0].logits[i]);
  }
}

TEST(Sampler, McDropoutVariesWithPositiveRate) {
  const auto arch = tiny_arch(HeadType::softmax, 0.5);
  PosteriorSampler s(SamplerStrategy::mc_dropout,
                     {trained_model(arch, WeightKind::deterministic, 5)}, 6);
  Rng rng(6);
  const Tensor x = make_batch(random_instances(1, 2, rng)).x;
  Rng r(1);
  const auto outs = draw_predictions(s, x, r);
  bool differs = false;
  for (const auto& o : outs) differs = differs || o.logits[0] != outs[0].logits[0];
  EXPECT_TRUE(differs);
}

TEST(Sampler, EnsembleUsesOnePassPerMember) {
  const auto arch = tiny_arch(HeadType::softmax);
  PosteriorSampler s(SamplerStrategy::deep_ensemble,
                     {trained_model(arch, WeightKind::deterministic, 1),
                      trained_model(arch, WeightKind::deterministic, 2),
                      trained_model(arch, WeightKind::deterministic, 3)});
  EXPECT_EQ(s.size(), 3u);
  EXPECT_THROW(PosteriorSampler(SamplerStrategy::deep_ensemble,
                                {trained_model(arch, WeightKind::deterministic, 1)}, 4),
               std::invalid_argument);
}

TEST(Sampler, RejectsUntrainedOrMismatchedModels) {
  const auto arch = tiny_arch(HeadType::softmax);
  Rng rng(1);
  const Model raw = Model::create(arch, WeightKind::deterministic, rng);
  EXPECT_THROW(PosteriorSampler(SamplerStrategy::deterministic, {raw}), std::invalid_argument);
  EXPECT_THROW(PosteriorSampler(SamplerStrategy::bbb,
                                {trained_model(arch, WeightKind::deterministic, 1)}),
               std::invalid_argument);
}

TEST(Predict, DeterministicWithoutHeadHasZeroUncertainty) {
  const auto arch = tiny_arch(HeadType::softmax);
  PosteriorSampler s(SamplerStrategy::deterministic,
                     {trained_model(arch, WeightKind::deterministic, 7)});
  Rng rng(8);
  const auto inst = random_instances(1, 2, rng);
  Rng r(1);
  const auto rep = predict_with_uncertainty(s, make_batch(inst).x, 1000, 0.2, r);
  EXPECT_EQ(rep.S, 1u);
  EXPECT_EQ(rep.N, 1u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(rep.eu[c], 0.0);
    EXPECT_EQ(rep.au[c], 0.0);
    EXPECT_EQ(rep.tu[c], 0.0);
  }
  EXPECT_THROW(predict_with_uncertainty(s, make_batch(inst).x, 0, 0.2, r), std::invalid_argument);
}

TEST(Predict, BbbWithHeadProducesBothComponents) {
  const auto arch = tiny_arch(HeadType::heteroscedastic);
  PosteriorSampler s(SamplerStrategy::bbb,
                     {trained_model(arch, WeightKind::variational, 9, -1.0)}, 10);
  Rng rng(8);
  const auto inst = random_instances(1, 2, rng);
  Rng r(1);
  const auto rep = predict_with_uncertainty(s, make_batch(inst).x, 50, 0.2, r);
  EXPECT_GT(rep.eu[1], 0.0);
  EXPECT_GT(rep.au[1], 0.0);
  EXPECT_NEAR(rep.tu[1], rep.eu[1] + rep.au[1], 1e-12);
}

TEST(BatchReports, IndependentOfChunkingAndThreads) {
  const auto arch = tiny_arch(HeadType::heteroscedastic, 0.3);
  for (auto strategy : {SamplerStrategy::bbb, SamplerStrategy::mc_dropout}) {
    const auto kind =
        strategy == SamplerStrategy::bbb ? WeightKind::variational : WeightKind::deterministic;
    PosteriorSampler s(strategy, {trained_model(arch, kind, 11, -2.0)}, 4);
    Rng rng(12);
    const auto inst = random_instances(9, 2, rng);
    InferenceOptions opt;
    opt.logit_samples = 7;
    opt.seed = 99;
    opt.chunk = 256;
    opt.jobs = 1;
    const auto ref = batch_reports(s, inst, opt);
    opt.chunk = 2;
    opt.jobs = 3;
    const auto alt = batch_reports(s, inst, opt);
    ASSERT_EQ(ref.size(), alt.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_EQ(ref[i].p, alt[i].p);
      EXPECT_EQ(ref[i].eu, alt[i].eu);
      EXPECT_EQ(ref[i].au, alt[i].au);
    }
    // A record's report does not depend on which other records are present.
    const auto single = batch_reports(s, std::span(inst).subspan(0, 1), opt);
    EXPECT_EQ(single[0].p, ref[0].p);
  }
}

TEST(PredictionFile, RoundTripIsExact) {
  Rng rng(13);
  const auto rows = testing::random_rows(rng, 25);
  std::stringstream ss;
  write_predictions(rows, ss);
  EXPECT_EQ(read_predictions(ss), rows);
}

TEST(PredictionFile, EmptyFileHasHeaderOnly) {
  std::stringstream ss;
  write_predictions({}, ss);
  EXPECT_EQ(ss.str(), std::string(kPredictionHeader) + "\n");
  EXPECT_TRUE(read_predictions(ss).empty());
}

TEST(PredictionFile, MissingColumnIsNamed) {
  std::stringstream ss("record_id,label,weight,lead_time,p_class1,eu,au,predicted_class,correct\n");
  try {
    read_predictions(ss);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("tu"), std::string::npos) << e.what();
  }
}

TEST(PredictionFile, RowsCarryInstanceMetadata) {
  Rng rng(14);
  const auto inst = random_instances(2, 2, rng);
  UncertaintyReport rep;
  rep.p = {0.3, 0.7};
  rep.eu = {0.01, 0.01};
  rep.au = {0.02, 0.02};
  rep.tu = {0.03, 0.03};
  rep.predicted_class = 1;
  const std::vector<UncertaintyReport> reps{rep, rep};
  const auto rows = to_prediction_rows(inst, reps);
  EXPECT_EQ(rows[1].record_id, "R1");
  EXPECT_EQ(rows[1].weight, inst[1].weight);
  EXPECT_EQ(rows[0].correct, 0);
  EXPECT_EQ(rows[1].correct, 1);
  EXPECT_EQ(rows[0].p_class1, 0.7);
}

}  // namespace
}  // namespace uqfire
