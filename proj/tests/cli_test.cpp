#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "toolplanner.hpp"
#include "toolplanner/cli.hpp"

using namespace toolplanner;
namespace fs = std::filesystem;

namespace {

const fs::path fixtures{TOOLPLANNER_FIXTURES};

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "toolplanner");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("toolplanner_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  }
  return files;
}

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run({}).code, exit_usage); }

TEST(Cli, ClusterFixtureCatalog) {
  TempDir dir;
  auto r = run({"cluster", "--catalog", (fixtures / "catalog.json").string(), "--embeddings",
                (fixtures / "embeddings.tsv").string(), "--k", "3", "--seed", "7", "--out", dir / "partition.json"});
  ASSERT_EQ(r.code, exit_ok) << r.err;
  auto p = parse_partition(read_file(dir / "partition.json"));
  EXPECT_EQ(p.result.toolkits.size(), 3u);
  EXPECT_EQ(p.result.partition.assignments.size(), 3u);
  EXPECT_EQ(p.config.seed, 7u);
  for (const auto& tk : p.result.toolkits) EXPECT_FALSE(tk.functionality.empty());
}

TEST(Cli, ClusterWithDbscan) {
  TempDir dir;
  auto r = run({"cluster", "--catalog", (fixtures / "catalog.json").string(), "--embeddings",
                (fixtures / "embeddings.tsv").string(), "--method", "dbscan", "--eps", "0.02", "--out",
                dir / "partition.json"});
  ASSERT_EQ(r.code, exit_ok) << r.err;
  auto p = parse_partition(read_file(dir / "partition.json"));
  std::size_t members = 0;
  for (const auto& tk : p.result.toolkits) members += tk.members.size();
  EXPECT_EQ(members, 3u);
}

TEST(Cli, ClusterArgumentErrors) {
  TempDir dir;
  const auto catalog = (fixtures / "catalog.json").string();
  const auto emb = (fixtures / "embeddings.tsv").string();
  EXPECT_EQ(run({"cluster", "--catalog", catalog, "--embeddings", emb, "--k", "0", "--out", dir / "p"}).code,
            exit_usage);
  EXPECT_EQ(run({"cluster", "--catalog", catalog, "--embeddings", emb, "--out", dir / "p"}).code, exit_usage);
  EXPECT_EQ(run({"cluster", "--catalog", "missing.json", "--embeddings", emb, "--k", "2", "--out", dir / "p"}).code,
            exit_usage);
  auto big = run({"cluster", "--catalog", catalog, "--embeddings", emb, "--k", "4", "--out", dir / "p"});
  EXPECT_EQ(big.code, exit_failure);
  EXPECT_NE(big.err.find("KTooLarge"), std::string::npos) << big.err;
}

TEST(Cli, PlanPrintsAPlan) {
  auto r = run({"plan", "--profile", "default", "--seed", "3", "--query", "Please help me to: weather -> currency"});
  ASSERT_EQ(r.code, exit_ok) << r.err;
  EXPECT_NE(r.out.find("Step 1: "), std::string::npos);
  EXPECT_NE(r.out.find("Step 2: "), std::string::npos);
}

TEST(Cli, RunWritesTracesAndReports) {
  TempDir dir;
  auto r = run({"run", "--profile", "default", "--seed", "2", "--methods", "tool_planner,react,dfsdt", "--episodes",
                "12", "--out", dir.path().string()});
  ASSERT_EQ(r.code, exit_ok) << r.err;
  for (const char* f : {"report.json", "report.csv", "report.md", "config.json"}) {
    EXPECT_TRUE(fs::exists(dir.path() / f)) << f;
  }
  for (const char* m : {"tool_planner", "react", "dfsdt"}) {
    EXPECT_TRUE(fs::exists(dir.path() / "traces" / m / "task-0011.jsonl")) << m;
  }
  auto report = report_from_json(nlohmann::json::parse(read_file(dir / "report.json")));
  EXPECT_EQ(report.methods.size(), 3u);
  EXPECT_EQ(report.episodes, 12u);
  auto echo = nlohmann::json::parse(read_file(dir / "config.json"));
  EXPECT_EQ(echo["experiment"]["k"], 5);
  EXPECT_EQ(echo["config_digest"], report.config_digest);
  EXPECT_NE(r.out.find("| tool_planner |"), std::string::npos);
}

TEST(Cli, RunTwiceIsByteIdentical) {
  TempDir a, b;
  ASSERT_EQ(run({"run", "--seed", "4", "--episodes", "10", "--out", a.path().string()}).code, exit_ok);
  ASSERT_EQ(run({"run", "--seed", "4", "--episodes", "10", "--jobs", "3", "--out", b.path().string()}).code, exit_ok);
  EXPECT_EQ(tree(a.path()), tree(b.path()));
}

TEST(Cli, RunArgumentErrors) {
  TempDir dir;
  EXPECT_EQ(run({"run", "--episodes", "0", "--out", dir.path().string()}).code, exit_usage);
  EXPECT_EQ(run({"run", "--k", "0", "--out", dir.path().string()}).code, exit_usage);
  EXPECT_EQ(run({"run", "--methods", "gpt", "--out", dir.path().string()}).code, exit_failure);
  EXPECT_EQ(run({"run", "--episodes", "999", "--out", dir.path().string()}).code, exit_failure);
}

TEST(Cli, ScenarioFileSeedMustAgree) {
  TempDir dir;
  save_scenario(generate_scenario(default_bench_profile(5)), dir / "scenario.json");
  EXPECT_EQ(run({"run", "--scenario", dir / "scenario.json", "--episodes", "2", "--out", dir / "o1"}).code, exit_ok);
  auto r = run({"run", "--scenario", dir / "scenario.json", "--seed", "6", "--episodes", "2", "--out", dir / "o2"});
  EXPECT_EQ(r.code, exit_failure);
  EXPECT_NE(r.err.find("ConfigError"), std::string::npos) << r.err;
}

TEST(Cli, BenchZeroProfilePasses) {
  TempDir dir;
  auto r = run({"bench", "--profile", "zero", "--seeds", "1", "--episodes", "10", "--out", dir.path().string()});
  EXPECT_EQ(r.code, exit_ok) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("PASS pass(tool_planner) == 1"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path() / "bench.json"));
}

TEST(Cli, BenchRejectsZeroEpisodes) { EXPECT_EQ(run({"bench", "--episodes", "0"}).code, exit_usage); }

TEST(Cli, ReportRendersEachFormat) {
  TempDir dir;
  ASSERT_EQ(run({"run", "--episodes", "5", "--out", dir.path().string()}).code, exit_ok);
  auto csv = run({"report", "--input", dir / "report.json", "--format", "csv"});
  ASSERT_EQ(csv.code, exit_ok);
  EXPECT_EQ(csv.out, read_file(dir / "report.csv"));
  auto md = run({"report", "--input", dir / "report.json", "--format", "markdown", "--out", dir / "again.md"});
  ASSERT_EQ(md.code, exit_ok);
  EXPECT_EQ(read_file(dir / "again.md"), read_file(dir / "report.md"));
  EXPECT_EQ(run({"report", "--input", dir / "report.json", "--format", "xml"}).code, exit_usage);
}

TEST(Cli, InspectChecksATrace) {
  TempDir dir;
  ASSERT_EQ(run({"run", "--methods", "tool_planner", "--episodes", "3", "--out", dir.path().string()}).code, exit_ok);
  auto r = run({"inspect", "--trace", dir / "traces/tool_planner/task-0000.jsonl"});
  EXPECT_EQ(r.code, exit_ok) << r.out;
  EXPECT_NE(r.out.find("ok   counters"), std::string::npos);
  EXPECT_NE(r.out.find("ok   plan_stability"), std::string::npos);

  auto t = parse_trace(read_file(dir / "traces/tool_planner/task-0000.jsonl"));
  ++t.counters.tool_calls;
  write_file(dir / "broken.jsonl", serialize_trace(t));
  auto bad = run({"inspect", "--trace", dir / "broken.jsonl"});
  EXPECT_EQ(bad.code, exit_failure);
  EXPECT_NE(bad.out.find("FAIL counters"), std::string::npos);

  EXPECT_EQ(run({"inspect"}).code, exit_usage);
}
