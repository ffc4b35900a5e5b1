#include <gtest/gtest.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <sstream>

#include "commands.hpp"
#include "support.hpp"
#include "uqfire/io_util.hpp"
#include "uqfire/uncertainty.hpp"

namespace uqfire {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "uqfire");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kSmallNet = {"--hidden", "6", "--epochs", "3", "--batch-size",
                                            "32",       "--train-years", "2006..2016",
                                            "--val-years", "2017..2018", "--test-years",
                                            "2019..2022"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class CliTest : public ::testing::Test {
 protected:
  testing::TempDir dir{"cli"};
  std::string p(const std::string& name) const { return dir.file(name); }

  void synth(const std::string& out, std::vector<std::string> extra = {}) {
    auto r = run_cli(with({"synth", "--positives", "40", "--seed", "7", "--out", p(out)}, extra));
    ASSERT_EQ(r.code, 0) << r.err;
  }
};

TEST_F(CliTest, SynthWritesTwoToOneDataset) {
  const auto r = run_cli({"synth", "--positives", "300", "--seed", "7", "--out", p("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Dataset ds = load_dataset(p("s/dataset.csv"));
  std::size_t pos = 0;
  for (const auto& rec : ds.records) pos += rec.label;
  EXPECT_EQ(pos, 300u);
  EXPECT_EQ(ds.records.size() - pos, 600u);
  const json m = json::parse(read_text_file(p("s/manifest.json")));
  EXPECT_EQ(m["command"], "synth");
  EXPECT_EQ(m["seed"], 7);
  EXPECT_EQ(m["outputs"][0]["hash"], file_hash(p("s/dataset.csv")));
}

TEST_F(CliTest, SynthRerunIsIdentical) {
  synth("a");
  synth("b");
  EXPECT_EQ(file_hash(p("a/dataset.csv")), file_hash(p("b/dataset.csv")));
}

TEST_F(CliTest, SynthConfigFileWithFlagOverride) {
  write_text_file(p("synth.json"), R"({"n_positives": 5, "flip_rate": 0.1})");
  const auto r = run_cli({"synth", "--config", p("synth.json"), "--positives", "4", "--out",
                          p("c")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_dataset(p("c/dataset.csv")).records.size(), 12u);
  write_text_file(p("bad.json"), R"({"n_positive": 5})");
  EXPECT_EQ(run_cli({"synth", "--config", p("bad.json"), "--out", p("d")}).code, 2);
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run_cli({"synth", "--flip-rate", "1.5", "--out", p("x")}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"stats", "--data", p("missing.csv"), "--by", "week"}).code, 2);
  const auto r = run_cli({"train", "--data", p("missing.csv"), "--variant", "gp"});
  EXPECT_EQ(r.code, 2);
  for (const char* v : {"deterministic", "aleatoric_only", "mcd", "mcd+au", "de", "de+au", "bbb",
                        "bbb+au"}) {
    EXPECT_NE(r.err.find(v), std::string::npos) << r.err;
  }
  EXPECT_EQ(run_cli({"train", "--data", p("x"), "--variant", "bbb", "--members", "3"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliTest, RuntimeErrorsExitWithOne) {
  EXPECT_EQ(run_cli({"train", "--data", p("missing.csv"), "--variant", "bbb"}).code, 1);
  EXPECT_EQ(run_cli({"report", "--predictions", p("missing.csv")}).code, 1);
}

TEST_F(CliTest, TrainPredictReportPipeline) {
  synth("s");
  auto r = run_cli(with({"train", "--data", p("s/dataset.csv"), "--variant", "bbb+au", "--seed",
                         "3", "--out", p("t")},
                        kSmallNet));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoint.json", "config.json", "artifact.json", "curves.csv",
                        "metrics.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(p(std::string("t/") + f))) << f;
  }

  r = run_cli({"predict", "--artifact", p("t"), "--data", p("s/dataset.csv"), "--seed", "4",
               "--s", "30", "--out", p("p"), "--train-years", "2006..2016", "--val-years",
               "2017..2018", "--test-years", "2019..2022"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = load_predictions(p("p/predictions.csv"));
  ASSERT_FALSE(rows.empty());
  for (const auto& row : rows) EXPECT_NEAR(row.tu, row.eu + row.au, 1e-12);
  const json pm = json::parse(read_text_file(p("p/manifest.json")));
  EXPECT_EQ(pm["config"]["n"], 50);  // default weight samples for bbb

  r = run_cli({"report", "--predictions", p("p/predictions.csv"), "--svg", "--out", p("r")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json summary = json::parse(read_text_file(p("r/summary.json")));
  for (const char* m : {"loss", "f1", "auprc"}) {
    if (summary["discard"][m].is_null()) continue;
    EXPECT_TRUE(summary["discard"][m].contains("mf")) << m;
    EXPECT_TRUE(summary["discard"][m].contains("di")) << m;
  }
  EXPECT_TRUE(summary.contains("ece"));
  EXPECT_TRUE(fs::exists(p("r/reliability.svg")));
  EXPECT_TRUE(fs::exists(p("r/discard_loss.csv")));

  // Rerunning predict and report reproduces every output byte.
  run_cli({"predict", "--artifact", p("t"), "--data", p("s/dataset.csv"), "--seed", "4", "--s",
           "30", "--out", p("p2"), "--train-years", "2006..2016", "--val-years", "2017..2018",
           "--test-years", "2019..2022"});
  EXPECT_EQ(file_hash(p("p/predictions.csv")), file_hash(p("p2/predictions.csv")));
  run_cli({"report", "--predictions", p("p2/predictions.csv"), "--svg", "--out", p("r2")});
  EXPECT_EQ(file_hash(p("r/summary.json")), file_hash(p("r2/summary.json")));
}

TEST_F(CliTest, DeterministicPredictionsHaveZeroUncertainty) {
  synth("s");
  ASSERT_EQ(run_cli(with({"train", "--data", p("s/dataset.csv"), "--variant", "deterministic",
                          "--out", p("t")},
                         kSmallNet))
                .code,
            0);
  ASSERT_EQ(run_cli({"predict", "--artifact", p("t"), "--data", p("s/dataset.csv"), "--split",
                     "all", "--out", p("p")})
                .code,
            0);
  const auto rows = load_predictions(p("p/predictions.csv"));
  EXPECT_EQ(rows.size(), 120u);
  for (const auto& row : rows) {
    EXPECT_EQ(row.eu, 0.0);
    EXPECT_EQ(row.au, 0.0);
    EXPECT_EQ(row.tu, 0.0);
  }
}

TEST_F(CliTest, EnsembleWritesOneCheckpointPerMember) {
  synth("s");
  const auto r = run_cli(with({"train", "--data", p("s/dataset.csv"), "--variant", "de",
                               "--members", "10", "--jobs", "2", "--epochs", "1", "--out",
                               p("t")},
                              {"--hidden", "4"}));
  ASSERT_EQ(r.code, 0) << r.err;
  for (int m = 0; m < 10; ++m) {
    const std::string f = p("t/members/member_0" + std::to_string(m) + ".json");
    EXPECT_TRUE(fs::exists(f)) << f;
  }
  const json man = json::parse(read_text_file(p("t/manifest.json")));
  EXPECT_EQ(man["outputs"].size(), 14u);
}

TEST_F(CliTest, MapLayers) {
  synth("s");
  ASSERT_EQ(run_cli(with({"train", "--data", p("s/dataset.csv"), "--variant", "bbb+au", "--out",
                          p("t")},
                         kSmallNet))
                .code,
            0);
  ASSERT_EQ(run_cli({"synth", "--grid", "1x1", "--seed", "2", "--out", p("g1")}).code, 0);
  ASSERT_EQ(run_cli({"map", "--artifact", p("t"), "--data", p("g1/dataset.csv"), "--s", "20",
                     "--seed", "9", "--out", p("m1")})
                .code,
            0);
  ASSERT_EQ(run_cli({"predict", "--artifact", p("t"), "--data", p("g1/dataset.csv"), "--split",
                     "all", "--s", "20", "--seed", "9", "--out", p("p1")})
                .code,
            0);
  const auto pred = load_predictions(p("p1/predictions.csv"));
  ASSERT_EQ(pred.size(), 1u);
  const std::string cells = read_text_file(p("m1/cells.csv"));
  EXPECT_NE(cells.find(format_double(pred[0].p_class1)), std::string::npos) << cells;
  EXPECT_EQ(read_text_file(p("m1/tu.txt")), format_double(pred[0].tu) + "\n");

  // Identical cells give constant layers when no noise is drawn.
  ASSERT_EQ(run_cli(with({"train", "--data", p("s/dataset.csv"), "--variant", "deterministic",
                          "--out", p("td")},
                         kSmallNet))
                .code,
            0);
  Dataset grid = load_dataset(p("g1/dataset.csv"));
  SampleRecord cell = grid.records[0];
  grid.records.clear();
  for (int x = 0; x < 3; ++x) {
    cell.record_id = "C" + std::to_string(x);
    cell.coords = GridCoord{static_cast<double>(x), 0.0};
    grid.records.push_back(cell);
  }
  save_dataset(grid, p("same.csv"));
  ASSERT_EQ(run_cli({"map", "--artifact", p("td"), "--data", p("same.csv"), "--s", "20", "--out",
                     p("m3")})
                .code,
            0);
  const std::string layer = read_text_file(p("m3/p_fire.txt"));
  const std::string v = layer.substr(0, layer.find(' '));
  EXPECT_EQ(layer, v + " " + v + " " + v + "\n");

  EXPECT_EQ(run_cli({"map", "--artifact", p("t"), "--data", p("s/dataset.csv"), "--out",
                     p("m4")})
                .code,
            1);
}

TEST_F(CliTest, SweepAndStats) {
  synth("s");
  auto r = run_cli(with({"sweep", "--data", p("s/dataset.csv"), "--variant", "bbb+au", "--leads",
                         "1", "--s", "10", "--n", "3", "--out", p("w")},
                        kSmallNet));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_text_file(p("w/sweep.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);

  r = run_cli({"stats", "--data", p("s/dataset.csv"), "--by", "class", "--out", p("st")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string groups = read_text_file(p("st/groups.csv"));
  EXPECT_EQ(groups.rfind("class,feature", 0), 0u) << groups.substr(0, 40);
}

TEST(CliOutputRoot, DefaultsAndEnvironment) {
  ::unsetenv("UQFIRE_OUT");
  EXPECT_EQ(cli::default_output_root(), "uqfire_runs");
  ::setenv("UQFIRE_OUT", "/tmp/elsewhere", 1);
  EXPECT_EQ(cli::default_output_root(), "/tmp/elsewhere");
  ::unsetenv("UQFIRE_OUT");
}

}  // namespace
}  // namespace uqfire
