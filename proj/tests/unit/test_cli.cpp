#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fedsnt/cli.hpp"
#include "fedsnt/dataset_io.hpp"
#include "fedsnt/error.hpp"
#include "fedsnt/model_io.hpp"

using namespace fedsnt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("fedsnt_cli_" + name);
  fs::remove_all(d);
  return d;
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small scenario so each invocation stays fast.
const std::vector<std::string> kSmall{"-o", "rounds=5",         "-o", "task.dim=16",
                                      "-o", "samples_per_client=50", "-o", "eval.probe_count=100"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

}  // namespace

TEST(Cli, UnknownAggregatorIsConfigError) {
  auto o = cli({"run", "-o", "aggregator=bulyan", "--out", fresh_dir("bad").string()});
  EXPECT_EQ(o.code, kExitConfig);
  EXPECT_NE(o.err.find("bulyan"), std::string::npos);
  EXPECT_NE(o.err.find("fedavg"), std::string::npos);  // lists valid names
}

TEST(Cli, UnknownKeyIsConfigError) {
  auto o = cli({"run", "-o", "trainer.nope=1", "--out", fresh_dir("badkey").string()});
  EXPECT_EQ(o.code, kExitConfig);
}

TEST(Cli, MissingConfigFile) {
  auto o = cli({"run", "-c", "/nonexistent/cfg.json", "--out", fresh_dir("nofile").string()});
  EXPECT_NE(o.code, kExitOk);
}

TEST(Cli, RunWritesArtifacts) {
  auto d = fresh_dir("run");
  auto o = cli(with_small({"run", "--out", d.string(), "--forensics", "-o", "defense_level=3",
                           "-o", "defense_samples=100", "-o", "defense_steps=20"}));
  ASSERT_EQ(o.code, kExitOk) << o.err;
  for (auto f : {"run_log.jsonl", "final_model.bin", "defended_model.bin", "summary.csv",
                 "manifest.json", "forensics/weights.csv"}) {
    EXPECT_TRUE(fs::exists(d / f)) << f;
  }
  EXPECT_NE(o.out.find("safety_rate (proxy)"), std::string::npos);
  EXPECT_EQ(load_model(d / "final_model.bin").dim(), 17u);
}

TEST(Cli, ZeroRoundsSucceeds) {
  auto d = fresh_dir("t0");
  auto args = with_small({"run", "--out", d.string()});
  args.push_back("-o");
  args.push_back("rounds=0");
  auto o = cli(args);
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_EQ(load_model(d / "final_model.bin"), ParameterVector::zeros(17));
}

TEST(Cli, ManifestRerunIsByteIdentical) {
  auto a = fresh_dir("m1");
  auto b = fresh_dir("m2");
  ASSERT_EQ(cli(with_small({"run", "--out", a.string()})).code, kExitOk);
  auto o = cli({"run", "-c", (a / "manifest.json").string(), "--out", b.string()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  for (auto f : {"final_model.bin", "summary.csv", "run_log.jsonl"}) {
    EXPECT_EQ(bytes(a / f), bytes(b / f)) << f;
  }
}

TEST(Cli, TamperedManifestRejected) {
  auto a = fresh_dir("tamper");
  ASSERT_EQ(cli(with_small({"run", "--out", a.string()})).code, kExitOk);
  auto m = nlohmann::json::parse(bytes(a / "manifest.json"));
  m["config"]["rounds"] = 6;
  std::ofstream(a / "manifest.json") << m.dump();
  auto o = cli({"run", "-c", (a / "manifest.json").string(), "--out", fresh_dir("t2").string()});
  EXPECT_EQ(o.code, kExitConfig);
}

TEST(Cli, GenZeroIsInvalid) {
  auto o = cli({"gen", "--kind", "normal", "-n", "0", "--out", (fresh_dir("g0") / "x.jsonl").string()});
  EXPECT_NE(o.code, kExitOk);
}

TEST(Cli, GenWritesExactCount) {
  auto d = fresh_dir("gen");
  fs::create_directories(d);
  auto o = cli({"gen", "--kind", "unaligned", "-n", "25", "--out", (d / "u.jsonl").string(),
                "--dump-prompts", (d / "p.txt").string(), "--encode"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  auto data = read_dataset(d / "u.jsonl");
  ASSERT_EQ(data.size(), 25u);
  EXPECT_TRUE(data[0].features.has_value());
  EXPECT_EQ(data[0].kind, DataKind::kUnaligned);
}

TEST(Cli, DefendSavedModel) {
  auto d = fresh_dir("defend");
  ASSERT_EQ(cli(with_small({"run", "--out", d.string()})).code, kExitOk);
  auto o = cli({"defend", "--model", (d / "final_model.bin").string(), "-c",
                (d / "manifest.json").string(), "--level", "3", "--out",
                (d / "defended.bin").string()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_EQ(load_model(d / "defended.bin").dim(), 17u);
}

TEST(Cli, ForensicsFromLog) {
  auto d = fresh_dir("flog");
  ASSERT_EQ(cli(with_small({"run", "--out", d.string()})).code, kExitOk);
  auto o = cli({"forensics", "--log", (d / "run_log.jsonl").string(), "--out",
                (d / "f2").string(), "--rounds", "all"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_TRUE(fs::exists(d / "f2" / "similarity_round_0.csv"));
  EXPECT_TRUE(fs::exists(d / "f2" / "similarity_round_4.csv"));
}

TEST(Cli, SweepRowsPerGridPoint) {
  auto d = fresh_dir("sweep");
  auto o = cli(with_small({"sweep", "--out", d.string(), "-g", "aggregator=fedavg,median",
                           "-g", "malicious_ratio=0.1..0.3:0.1"}));
  ASSERT_EQ(o.code, kExitOk) << o.err;
  std::ifstream in(d / "sweep.csv");
  int lines = 0;
  std::string l;
  while (std::getline(in, l)) ++lines;
  EXPECT_EQ(lines, 1 + 2 * 3);
}

TEST(Cli, SweepBadKey) {
  auto o = cli(with_small({"sweep", "--out", fresh_dir("sweepbad").string(), "-g", "nope=1,2"}));
  EXPECT_EQ(o.code, kExitConfig);
}

TEST(Cli, GridValues) {
  auto v = parse_grid_values("1..3:1");
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[2], 3);
  auto w = parse_grid_values("krum,dnc");
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0], "krum");
  EXPECT_THROW(parse_grid_values("1..3:0"), Error);
}
