#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "nodefilter/checkpoint.hpp"
#include "nodefilter/graph.hpp"
#include "nodefilter/rng.hpp"

namespace fs = std::filesystem;
using namespace nodefilter;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
  std::map<std::string, std::string> record;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "nodefilter");
  std::ostringstream out, err;
  Result r{cli::run(args, out, err), out.str(), err.str(), {}};
  std::string last;
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);)
    if (!line.empty()) last = line;
  std::istringstream fields(last);
  for (std::string kv; fields >> kv;) {
    const auto eq = kv.find('=');
    if (eq != std::string::npos) r.record[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("nodefilter_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Three planted communities; labels follow the community.
  void write_toy_task(std::size_t n = 60) {
    Rng rng(1);
    std::ostringstream edges, feats, labels;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < (i % 3 == j % 3 ? 0.25 : 0.02)) edges << i << ' ' << j << '\n';
    labels << "node_id,label\n";
    for (std::size_t i = 0; i < n; ++i) {
      feats << (i % 3) + rng.uniform(-1, 1) << ',' << rng.uniform() << '\n';
      labels << i << ',' << i % 3 << '\n';
    }
    write(dir_ / "graph.txt", edges.str());
    write(dir_ / "features.csv", feats.str());
    write(dir_ / "labels.csv", labels.str());
  }

  Result make_tokens(const std::string& basis = "cheb", const std::string& k = "4") {
    return run({"tokens", "--graph", path("graph.txt"), "--features", path("features.csv"), "--basis", basis, "--K", k,
                "--out", path("tokens.ptk")});
  }

  fs::path dir_;
};

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"tokens", "--basis", "cheb"}).code, 2);
}

TEST_F(CliTest, TokensWritesCacheAndRecord) {
  write_toy_task();
  const Result r = make_tokens();
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.record.at("command"), "tokens");
  EXPECT_EQ(r.record.at("N"), "60");
  EXPECT_EQ(r.record.at("K"), "4");
  EXPECT_EQ(r.record.at("d"), "2");
  EXPECT_TRUE(r.record.count("nnz"));
  EXPECT_TRUE(r.record.count("wall_ms"));
  const std::string first = slurp(path("tokens.ptk"));
  ASSERT_EQ(make_tokens().code, 0);
  EXPECT_EQ(slurp(path("tokens.ptk")), first);
}

TEST_F(CliTest, TokensGridCacheSize) {
  std::ostringstream edges, feats;
  write_edge_list(edges, grid_graph(24, 24));
  for (int i = 0; i < 576; ++i) feats << i * 0.001 << '\n';
  write(dir_ / "graph.txt", edges.str());
  write(dir_ / "features.csv", feats.str());
  ASSERT_EQ(make_tokens("mono", "10").code, 0);
  EXPECT_EQ(fs::file_size(path("tokens.ptk")), 32u + 576u * 11u * 8u);
}

TEST_F(CliTest, TokensInputErrors) {
  write_toy_task();
  Result r = run({"tokens", "--graph", path("missing.txt"), "--features", path("features.csv"), "--basis", "cheb",
                  "--K", "3", "--out", path("t.ptk")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.txt"), std::string::npos);

  write(dir_ / "graph.txt", "0 1\n1 oops\n");
  r = make_tokens();
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;

  write_toy_task();
  EXPECT_EQ(make_tokens("legendre").code, 2);
  EXPECT_EQ(make_tokens("bern", "61").code, 2);
}

TEST_F(CliTest, TrainWritesArtifactsAndReproduces) {
  write_toy_task();
  ASSERT_EQ(make_tokens().code, 0);
  write(dir_ / "config.json", R"({"model": {"hidden": 8, "heads": 2}, "train": {"max_epochs": 15, "lr": 0.01}})");
  const Result a = run({"train", "--tokens", path("tokens.ptk"), "--labels", path("labels.csv"), "--config",
                        path("config.json"), "--seed", "4", "--out", path("run_a")});
  ASSERT_EQ(a.code, 0) << a.err;
  for (const char* f : {"config.json", "model.pfm", "history.csv", "metrics.txt"})
    EXPECT_TRUE(fs::exists(dir_ / "run_a" / f)) << f;
  EXPECT_EQ(a.record.at("command"), "train");
  EXPECT_EQ(a.record.at("metric"), "accuracy");
  EXPECT_EQ(a.record.at("epochs"), "15");

  // re-running from the archived, fully resolved config reproduces everything
  const Result b = run({"train", "--tokens", path("tokens.ptk"), "--labels", path("labels.csv"), "--config",
                        path("run_a/config.json"), "--out", path("run_b")});
  ASSERT_EQ(b.code, 0) << b.err;
  auto strip_time = [](std::map<std::string, std::string> m) {
    m.erase("wall_ms");
    return m;
  };
  EXPECT_EQ(strip_time(a.record), strip_time(b.record));
  EXPECT_EQ(slurp(dir_ / "run_a" / "model.pfm"), slurp(dir_ / "run_b" / "model.pfm"));

  const Result c = run({"train", "--tokens", path("tokens.ptk"), "--labels", path("labels.csv"), "--config",
                        path("config.json"), "--seed", "5", "--out", path("run_c")});
  ASSERT_EQ(c.code, 0);
  EXPECT_NE(slurp(dir_ / "run_a" / "model.pfm"), slurp(dir_ / "run_c" / "model.pfm"));
  EXPECT_NO_THROW(read_checkpoint(dir_ / "run_c" / "model.pfm"));
}

TEST_F(CliTest, TrainBasisMismatchExitsThree) {
  write_toy_task();
  ASSERT_EQ(make_tokens("mono").code, 0);
  write(dir_ / "config.json", R"({"model": {"basis": "cheb", "order": 4}})");
  const Result r = run({"train", "--tokens", path("tokens.ptk"), "--labels", path("labels.csv"), "--config",
                        path("config.json"), "--out", path("run")});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(CliTest, TrainValidatesBeforeTraining) {
  write_toy_task();
  ASSERT_EQ(make_tokens().code, 0);
  write(dir_ / "bad_heads.json", R"({"model": {"hidden": 6, "heads": 4}})");
  Result r = run({"train", "--tokens", path("tokens.ptk"), "--labels", path("labels.csv"), "--config",
                  path("bad_heads.json"), "--out", path("run")});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "run" / "history.csv"));

  write(dir_ / "typo.json", R"({"model": {"hiden": 8}})");
  r = run({"train", "--tokens", path("tokens.ptk"), "--labels", path("labels.csv"), "--config", path("typo.json"),
           "--out", path("run")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("hiden"), std::string::npos);
}

TEST_F(CliTest, TrainLabelErrors) {
  write_toy_task();
  ASSERT_EQ(make_tokens().code, 0);
  write(dir_ / "labels.csv", "node_id,label\n0,1\n0,2\n");
  Result r = run({"train", "--tokens", path("tokens.ptk"), "--labels", path("labels.csv"), "--out", path("run")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainNumericalBlowUpExitsFour) {
  // squared error on 1e200 targets overflows to inf in the first epoch
  write_toy_task();
  ASSERT_EQ(make_tokens().code, 0);
  std::string targets = "node_id,target\n";
  for (int i = 0; i < 60; ++i) targets += std::to_string(i) + (i % 2 ? ",1e200\n" : ",-1e200\n");
  write(dir_ / "targets.csv", targets);
  write(dir_ / "config.json", R"({"model": {"classes": 1}, "train": {"task": "regression", "max_epochs": 20, "patience": 0}})");
  const Result r = run({"train", "--tokens", path("tokens.ptk"), "--labels", path("targets.csv"), "--config",
                        path("config.json"), "--out", path("run")});
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
}

TEST_F(CliTest, SynthSmokeRunIsFast) {
  const auto start = std::chrono::steady_clock::now();
  const Result r = run({"synth", "--task", "low-and-high-pass", "--grid", "2x2", "--epochs", "200", "--out", path("s")});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(seconds, 1.0);
  for (const char* f : {"config.json", "task.csv", "alpha.csv", "curves.csv", "history.csv", "metrics.txt"})
    EXPECT_TRUE(fs::exists(dir_ / "s" / f)) << f;
  for (const char* k : {"r2", "sse", "params", "model", "task"}) EXPECT_TRUE(r.record.count(k)) << k;
}

TEST_F(CliTest, SynthModelsAndErrors) {
  const Result a = run({"synth", "--task", "mixed-band-pass", "--grid", "3x3", "--model", "selfattn", "--epochs", "5",
                        "--out", path("a")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.record.at("model"), "selfattn");
  const Result u = run({"synth", "--task", "mixed-band-pass", "--grid", "3x3", "--model", "unifilter", "--epochs", "5",
                        "--out", path("u")});
  ASSERT_EQ(u.code, 0) << u.err;
  EXPECT_EQ(run({"synth", "--task", "unknown", "--out", path("x")}).code, 2);
  EXPECT_EQ(run({"synth", "--task", "mixed-band-pass", "--grid", "3by3", "--out", path("x")}).code, 2);
}

TEST_F(CliTest, SynthReproducesFromArchivedConfig) {
  const Result a = run({"synth", "--task", "mixed-low-pass", "--grid", "3x3", "--epochs", "20", "--seed", "2", "--out",
                        path("a")});
  ASSERT_EQ(a.code, 0) << a.err;
  const Result b = run({"synth", "--config", path("a/config.json"), "--out", path("b")});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.record.at("r2"), b.record.at("r2"));
  EXPECT_EQ(a.record.at("sse"), b.record.at("sse"));
  EXPECT_EQ(slurp(dir_ / "a" / "alpha.csv"), slurp(dir_ / "b" / "alpha.csv"));
}

TEST(Cli, VerifySuites) {
  for (const char* suite : {"tokens", "theorem", "gradients", "spectral"}) {
    const Result r = run({"verify", "--suite", suite});
    EXPECT_EQ(r.code, 0) << suite << r.err;
    EXPECT_EQ(r.record.at("failed"), "0");
  }
  EXPECT_EQ(run({"verify", "--suite", "bogus"}).code, 2);
}

TEST(Cli, VerifyInjectedFaultNamesFailingChecks) {
  const Result r = run({"verify", "--suite", "all", "--inject-fault"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.record.at("failed_checks").find("tokens.dense_oracle"), std::string::npos);
  EXPECT_NE(r.record.at("failed_checks").find("theorem.node_identity"), std::string::npos);
  EXPECT_NE(r.err.find("FAIL tokens.dense_oracle"), std::string::npos);
}
