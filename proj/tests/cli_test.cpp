#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "spo/config.hpp"
#include "spo/oracle.hpp"

namespace fs = std::filesystem;

namespace {

const char* kConfig = R"([env]
kind = target-set
vocab = 2
horizon = 2
accepting = 1 1

[spo]
beta = 1.0

[q0]
method = exact

[run]
total_steps = 20
batch_size = 8
mix = online:0.5, all:0.5

[loss.online]
specs = terminal-q/squared

[loss.all]
specs = terminal-q/squared

[data.all]
generate = enumerate

[decoding]
temperature = 1.0
top_p = 1.0

[optimizer]
learning_rate = 0.05
warmup_steps = 0

[eval]
samples = 20
k = 10
temperature = 1.0
top_p = 1.0
)";

struct Cli {
  int code = 0;
  std::string out, err;
};

Cli call(std::vector<std::string> args) {
  std::ostringstream out, err;
  args.insert(args.begin(), "spo");
  const int code = spo::cli::main(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("spo_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    config = (dir / "e1.cfg").string();
    std::ofstream(config) << kConfig;
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path dir;
  std::string config;
};

}  // namespace

TEST_F(CliTest, TrainRefusesWithoutQ0) {
  const Cli r = call({"train", "--config", config, "--out", (dir / "run").string(), "--deterministic"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("q0"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "run" / "metrics.csv"));
}

TEST_F(CliTest, TrainIsReproducible) {
  std::vector<std::string> outputs;
  for (const char* name : {"a", "b"}) {
    const std::string out = (dir / name).string();
    ASSERT_EQ(call({"q0", "--config", config, "--out", out}).code, 0);
    const Cli r = call({"train", "--config", config, "--out", out, "--deterministic", "--seed", "7"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"config.cfg", "metrics.csv", "metrics.jsonl", "staleness.csv", "policy.txt", "eval.json"}) {
      EXPECT_TRUE(fs::exists(dir / name / f)) << f;
    }
    outputs.push_back(slurp(dir / name / "metrics.csv") + slurp(dir / name / "policy.txt") +
                      slurp(dir / name / "eval.json"));
  }
  EXPECT_EQ(outputs[0], outputs[1]);
}

TEST_F(CliTest, EvalOfReferenceMatchesOracle) {
  const Cli r = call({"eval", "--config", config, "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir / "eval.json"));
  EXPECT_NEAR(j["prompts"][0]["exact_success_probability"].get<double>(), 0.25, 1e-12);
}

TEST_F(CliTest, BadConfigGivesLineDiagnostic) {
  const std::string bad = (dir / "bad.cfg").string();
  std::ofstream(bad) << "[env]\nvocab = 2\nhorizon = three\n";
  const Cli r = call({"config", "--config", bad});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.cfg:3"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("env.horizon"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(call({"frobnicate"}).code, 2);
  EXPECT_EQ(call({}).code, 2);
}

TEST_F(CliTest, OracleWritesValues) {
  const Cli r = call({"oracle", "--config", config, "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("V = -0.64262"), std::string::npos) << r.out;
}

TEST_F(CliTest, PlotWritesSvg) {
  const std::string out = (dir / "run").string();
  ASSERT_EQ(call({"q0", "--config", config, "--out", out}).code, 0);
  ASSERT_EQ(call({"train", "--config", config, "--out", out, "--deterministic"}).code, 0);
  const std::string svg = (dir / "kl.svg").string();
  const Cli r = call({"plot", "--metrics", (dir / "run" / "metrics.csv").string(), "--out", svg, "--log-y"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(svg);
  EXPECT_EQ(text.rfind("<svg", 0), 0u);
  EXPECT_NE(text.find("<polyline"), std::string::npos);
}

TEST_F(CliTest, ConfigEchoReparses) {
  const Cli r = call({"config", "--config", config});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(spo::parse_config_string(r.out), spo::load_config(config));
}
