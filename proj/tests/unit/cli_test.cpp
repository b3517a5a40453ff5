#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "metalab/commands.hpp"

using namespace metalab;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "metalab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<nlohmann::json> json_lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    unsetenv("METALAB_SEED");
    dir_ = fs::temp_directory_path() /
           ("metalab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream f(dir_ / "small.conf");
    f << "hidden_h = 2\nembed_dim = 8\nimage_size = 16\nsynth_classes = 20\nsynth_per_class = 4\n"
         "generations = 2\nloss_gens = 2\ntrain_iters = 3\nval_every = 3\nval_episodes = 2\n"
         "eval_episodes = 3\nbatch_episodes = 2\n";
    f << "checkpoint = " << (dir_ / "m.ckpt").string() << "\n";
  }
  void TearDown() override {
    fs::remove_all(dir_);
    unsetenv("METALAB_SEED");
  }
  std::string conf() const { return (dir_ / "small.conf").string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({}).code, kExitConfig);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(cli({"train", "--k-way", "abc"}).code, kExitConfig);
  EXPECT_EQ(cli({"ablate", "--axis", "hidden_h"}).code, kExitConfig);
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
  const auto r = cli({"train", "--config", conf(), "--g", "2", "--loss-gens", "3"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("loss_gens"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"train", "--config", (dir_ / "missing.conf").string()}).code, kExitConfig);
  EXPECT_EQ(cli({"eval", "--config", conf(), "--split", "holdout", "--untrained"}).code, kExitConfig);
  EXPECT_EQ(cli({"eval", "--config", conf()}).code, kExitConfig);  // no checkpoint yet
  setenv("METALAB_SEED", "abc", 1);
  EXPECT_EQ(cli({"train", "--config", conf()}).code, kExitConfig);
}

TEST_F(CliTest, TrainWritesMetricsAndCheckpointThenEvalReads) {
  const auto r = cli({"train", "--config", conf()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto lines = json_lines(r.out);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_TRUE(lines[0]["val_acc"].is_null());
  EXPECT_FALSE(lines[2]["val_acc"].is_null());
  EXPECT_TRUE(fs::exists(dir_ / "m.ckpt"));

  const auto e = cli({"eval", "--config", conf(), "--trace", (dir_ / "trace.jsonl").string()});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const auto rows = json_lines(e.out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["ways"], 5);
  EXPECT_EQ(rows[0]["episodes"], 3);
  EXPECT_NE(e.err.find("5-way 1-shot: mean_acc"), std::string::npos);
  std::ifstream trace(dir_ / "trace.jsonl");
  std::stringstream ss;
  ss << trace.rdbuf();
  EXPECT_EQ(json_lines(ss.str()).size(), 3u);  // generations 0..2 of one episode
}

TEST_F(CliTest, SeedPrecedenceFlagOverEnvOverFile) {
  auto metrics = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"train", "--config", conf(), "--iters", "1", "--val-every", "0"};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = cli(args);
    EXPECT_EQ(r.code, kExitOk) << r.err;
    return json_lines(r.out).at(0)["loss_total"].get<double>();
  };
  {
    std::ofstream f(conf(), std::ios::app);
    f << "seed = 5\n";
  }
  const double file_seed = metrics({});
  EXPECT_EQ(metrics({"--seed", "5"}), file_seed);
  setenv("METALAB_SEED", "6", 1);
  const double env_seed = metrics({});
  EXPECT_NE(env_seed, file_seed);
  EXPECT_EQ(metrics({"--seed", "6"}), env_seed);
  EXPECT_EQ(metrics({"--seed", "5"}), file_seed);
}

TEST_F(CliTest, HighWaySweepWritesSixRows) {
  // K up to 10 needs at least 10 test classes.
  const auto r = cli({"eval", "--config", conf(), "--untrained", "--high-way", "--synth-classes", "40", "--report",
                      (dir_ / "k.jsonl").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::ifstream in(dir_ / "k.jsonl");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto rows = json_lines(ss.str());
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(rows[i]["ways"], 5 + i);
    EXPECT_GE(rows[i]["mean_acc"].get<double>(), 0.0);
    EXPECT_LE(rows[i]["mean_acc"].get<double>(), 1.0);
  }
  const auto few = cli({"eval", "--config", conf(), "--untrained", "--ways", "5,11", "--synth-classes", "20"});
  EXPECT_EQ(few.code, kExitConfig);
}

TEST_F(CliTest, AblationWritesOneRecordPerValue) {
  const auto r = cli({"ablate", "--config", conf(), "--axis", "generations", "--values", "1,2", "--iters", "2",
                      "--val-every", "0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto recs = json_lines(r.out);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0]["axis"], "generations");
  EXPECT_EQ(recs[0]["value"], 1);
  EXPECT_EQ(recs[1]["value"], 2);
  EXPECT_EQ(recs[1]["train_iters"], 2);
  EXPECT_FALSE(fs::exists(dir_ / "m.ckpt"));
  EXPECT_EQ(cli({"ablate", "--config", conf(), "--axis", "lr", "--values", "1"}).code, kExitConfig);
}

TEST_F(CliTest, SynthDataAndDumpLab) {
  const auto out = dir_ / "data";
  ASSERT_EQ(cli({"synth-data", "--config", conf(), "--synth-per-class", "2", "--out", out.string()}).code, kExitOk);
  EXPECT_TRUE(fs::exists(out / "train"));
  const auto r = cli({"eval", "--config", conf(), "--untrained", "--dataset", out.string(), "--synth-per-class", "2"});
  EXPECT_EQ(r.code, kExitOk) << r.err;

  const auto dump = dir_ / "dump";
  ASSERT_EQ(cli({"dump-lab", "--config", conf(), "--out", dump.string(), "--features", "--untrained"}).code, kExitOk);
  for (const char* f : {"L.png", "a.png", "b.png", "light_00.png", "color_01.png"}) EXPECT_TRUE(fs::exists(dump / f)) << f;
  EXPECT_EQ(cli({"dump-lab", "--config", conf(), "--out", dump.string(), "--class-index", "99"}).code, kExitConfig);
}

TEST_F(CliTest, GradcheckSmallRunPasses) {
  const auto r = cli({"gradcheck", "--trials", "2", "--e2e-trials", "1", "--coords", "4"});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}
