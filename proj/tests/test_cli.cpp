#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

using namespace gbmo;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gbmo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gbmo_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  static std::string read(const std::string& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, MinimalTrainWritesModelAndHistory) {
  const auto data = write("tiny.csv", "x0,y0\n1,1\n2,1\n3,5\n4,5\n");
  const auto r = run_cli({"train", "--data", data, "--labels", "1", "--model", path("m.model"),
                          "--rounds", "3", "--min-samples", "1", "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("m.model")));
  const auto history = read(path("m.model.history.csv"));
  EXPECT_EQ(history.substr(0, history.find('\n')), "round,train_loss,eval_metric,seconds");
  EXPECT_NE(r.out.find("best_round 3"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("best_train_loss"), std::string::npos);
}

TEST_F(CliTest, PredictMatchesInProcessPredictions) {
  ASSERT_EQ(run_cli({"synth", "--kind", "friedman1", "--n", "300", "--seed", "5", "--out",
                     path("train.csv")})
                .code,
            0);
  ASSERT_EQ(run_cli({"train", "--data", path("train.csv"), "--labels", "5", "--model",
                     path("m.model"), "--rounds", "10", "--quiet"})
                .code,
            0);
  const auto ds = load_csv(path("train.csv"), LabelSpec::trailing(5));
  std::ostringstream features;
  for (std::size_t i = 0; i < ds.num_samples(); ++i) {
    for (std::size_t j = 0; j < ds.num_features(); ++j) {
      features << (j ? "," : "") << cli::format_real(ds.features(i, j));
    }
    features << '\n';
  }
  const auto x = write("x.csv", features.str());
  const auto r = run_cli({"predict", "--model", path("m.model"), "--data", x});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ostringstream expected;
  cli::write_predictions(expected, predict_raw(load_model(path("m.model")), ds.features));
  EXPECT_EQ(r.out, expected.str());
}

TEST_F(CliTest, PredictEdgeCases) {
  const auto data = write("tiny.csv", "1,2,1\n2,1,1\n3,3,5\n4,0,5\n");
  ASSERT_EQ(run_cli({"train", "--data", data, "--labels", "1", "--model", path("m.model"),
                     "--rounds", "2", "--min-samples", "1", "--quiet"})
                .code,
            0);
  const auto empty = run_cli({"predict", "--model", path("m.model"), "--data", write("e.csv", "")});
  EXPECT_EQ(empty.code, 0) << empty.err;
  EXPECT_EQ(empty.out, "y0\n");
  const auto wrong = run_cli({"predict", "--model", path("m.model"), "--data", write("w.csv", "1,2,3\n")});
  EXPECT_EQ(wrong.code, 2);
  EXPECT_EQ(run_cli({"predict", "--model", path("missing.model"), "--data", data}).code, 2);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  const auto data = write("tiny.csv", "1,1,0\n2,1,1\n");
  EXPECT_EQ(run_cli({"train", "--data", data, "--labels", "2", "--model", path("m"), "--bogus"}).code, 1);
  const auto sparse = run_cli({"train", "--data", data, "--labels", "2", "--model", path("m"),
                               "--mode", "mo_sparse"});
  EXPECT_EQ(sparse.code, 1);
  EXPECT_NE(sparse.err.find("topk"), std::string::npos) << sparse.err;
  EXPECT_EQ(run_cli({"train", "--data", data, "--model", path("m")}).code, 1);
  EXPECT_EQ(run_cli({"train", "--data", data, "--labels", "2", "--model", path("m"), "--mode",
                     "gbdt"})
                .code,
            1);
  EXPECT_EQ(run_cli({"bench", "--synth", "friedman1", "--bench-rounds", "0"}).code, 1);
  EXPECT_EQ(run_cli({"synth", "--n", "0"}).code, 1);
  EXPECT_EQ(run_cli({}).code, 1);
}

TEST_F(CliTest, DataErrorsExitTwo) {
  const auto bad = write("bad.csv", "1,2,0\nabc,4,1\n");
  const auto r = run_cli({"train", "--data", bad, "--labels", "1", "--model", path("m")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("row 1"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"train", "--data", path("nope.csv"), "--labels", "1", "--model", path("m")}).code, 2);
}

TEST_F(CliTest, SynthBinaryCacheFeedsTraining) {
  ASSERT_EQ(run_cli({"synth", "--kind", "random_projection", "--n", "200", "--format", "bmo",
                     "--out", path("p.bmo")})
                .code,
            0);
  std::ifstream in(path("p.bmo"), std::ios::binary);
  const auto ds = load_binary_cache(in);
  EXPECT_EQ(ds.num_outputs(), 8u);
  const auto r = run_cli({"train", "--data", path("p.bmo"), "--model", path("p.model"),
                          "--rounds", "3", "--quiet"});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto a = run_cli({"synth", "--n", "20", "--seed", "3"});
  const auto b = run_cli({"synth", "--n", "20", "--seed", "3"});
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, BenchPrintsRowsAndRatio) {
  const auto r = run_cli({"bench", "--synth", "friedman1", "--n", "500", "--bench-rounds", "2",
                          "--depth", "3", "--modes", "mo_dense,so_baseline", "--sweep-d", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "mode,outputs,rounds,workers,seconds_per_round");
  EXPECT_NE(r.out.find("mo_dense,10,2,1,"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("# ratio so_baseline 5->10 "), std::string::npos) << r.out;
}

TEST_F(CliTest, ConfidenceCommand) {
  const auto a = write("a.txt", "1\n2\n3\n4\n");
  const auto b = write("b.txt", "2,1,4,3\n");
  const auto r = run_cli({"confidence", "--a", a, "--b", b});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "0.5\n");
  EXPECT_EQ(run_cli({"confidence", "--a", a, "--b", a}).code, 3);
  EXPECT_EQ(run_cli({"confidence", "--a", a, "--b", write("c.txt", "1\n")}).code, 1);
  EXPECT_EQ(run_cli({"confidence", "--a", a, "--b", b, "--direction", "up"}).code, 1);
}

TEST_F(CliTest, ConfigFileSuppliesFlagsAndCommandLineWins) {
  const auto data = write("tiny.csv", "x0,y0\n1,1\n2,1\n3,5\n4,5\n");
  const auto cfg = write("run.cfg", "# defaults\nrounds = 2\nlr=0.5\nmin-samples=1\n\n");
  auto r = run_cli({"train", "--config", cfg, "--data", data, "--labels", "1", "--model",
                    path("a.model"), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto model = load_model(path("a.model"));
  EXPECT_EQ(model.trees.size(), 2u);
  EXPECT_EQ(model.learning_rate, 0.5);

  r = run_cli({"train", "--data", data, "--labels", "1", "--model", path("b.model"), "--rounds",
               "4", "--quiet", "--config=" + cfg});
  ASSERT_EQ(r.code, 0) << r.err;
  model = load_model(path("b.model"));
  EXPECT_EQ(model.trees.size(), 4u);
  EXPECT_EQ(model.learning_rate, 0.5);

  const auto bad = write("bad.cfg", "rounds 2\n");
  EXPECT_EQ(run_cli({"train", "--config", bad, "--data", data, "--model", path("c.model")}).code, 1);
  const auto unknown = write("unknown.cfg", "bogus=1\n");
  EXPECT_EQ(run_cli({"train", "--config", unknown, "--data", data, "--model", path("c.model")}).code, 1);
  EXPECT_EQ(run_cli({"train", "--config", path("missing.cfg"), "--data", data, "--model",
                     path("c.model")}).code,
            1);
}
