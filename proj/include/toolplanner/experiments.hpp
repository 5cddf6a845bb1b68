#pragma once

#include <atomic>
#include <chrono>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "toolplanner/baselines.hpp"
#include "toolplanner/clustering.hpp"
#include "toolplanner/evaluation.hpp"
#include "toolplanner/explorer.hpp"
#include "toolplanner/simenv.hpp"
#include "toolplanner/simmodel.hpp"

namespace toolplanner {

enum class Method { tool_planner, react, dfsdt };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::tool_planner: return "tool_planner";
    case Method::react: return "react";
    case Method::dfsdt: return "dfsdt";
  }
  return "tool_planner";
}

inline Method parse_method(std::string_view s) {
  if (s == "tool_planner" || s == "tool-planner") return Method::tool_planner;
  if (s == "react") return Method::react;
  if (s == "dfsdt") return Method::dfsdt;
  throw Error(ErrorCode::config_error, "unknown method '" + std::string(s) + "'");
}

inline std::vector<Method> parse_methods(std::string_view list) {
  std::vector<Method> out;
  for (const auto& part : split(list, ',')) {
    auto t = trim(part);
    if (t.empty()) continue;
    auto m = parse_method(t);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw Error(ErrorCode::config_error, "no methods selected");
  return out;
}

struct ExperimentConfig {
  ScenarioConfig scenario;
  // Toolkit count; unset means one toolkit per capability and distractor.
  std::optional<std::size_t> k;
  ClusteringConfig clustering;
  Budget budget;
  std::vector<Method> methods{Method::tool_planner, Method::react, Method::dfsdt};
  // Number of tasks to run; 0 means all of them.
  std::size_t episodes = 0;
  int jobs = 1;
  std::string reference = "react";

  std::size_t matched_k() const {
    return static_cast<std::size_t>(scenario.n_capabilities + scenario.distractor_tools);
  }
};

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["scenario"] = to_json(c.scenario);
  j["k"] = c.k ? nlohmann::ordered_json(*c.k) : nlohmann::ordered_json(nullptr);
  j["clustering"] = config_to_json(c.clustering);
  j["budget"] = to_json(c.budget);
  auto methods = nlohmann::ordered_json::array();
  for (auto m : c.methods) methods.push_back(std::string(to_string(m)));
  j["methods"] = std::move(methods);
  j["episodes"] = c.episodes;
  j["reference"] = c.reference;
  return j;
}

inline std::string config_digest(const ExperimentConfig& c) { return digest(to_json(c).dump()); }

/// Everything an episode needs: the scenario, the explained registry, the
/// toolkits, the environment and the models. Immutable once built.
struct World {
  Scenario scenario;
  ToolRegistry registry;
  ClusterResult clusters;
  std::unique_ptr<SimEnvironment> env;
  ProviderRoles roles;
};

inline ProviderRoles sim_roles(const ScenarioConfig& sc) {
  return ProviderRoles::same(make_sim_model({sc.probability(FailureKind::api_hallucinated)}));
}

/// Explains the tools, clusters their embeddings into k toolkits and
/// describes each toolkit, all with the planning model.
inline ClusterResult build_toolkits(ToolRegistry& registry, const EmbeddingSet& embeddings, ClusteringConfig config,
                                    PlannerProvider& planning_model, int parallelism = 1) {
  embeddings.check_against(registry);
  explain_all(registry, planning_model, parallelism, RetryPolicy::immediate());
  auto result = cluster(embeddings, config);
  describe_all(result.toolkits, registry, planning_model, RetryPolicy::immediate());
  return result;
}

inline World build_world(Scenario scenario, const ExperimentConfig& config) {
  World w;
  w.scenario = std::move(scenario);
  w.registry = w.scenario.registry;
  w.roles = sim_roles(w.scenario.config);
  auto cc = config.clustering;
  cc.k = config.k.value_or(config.matched_k());
  w.clusters = build_toolkits(w.registry, w.scenario.embeddings, cc, *w.roles.planning_model);
  w.env = std::make_unique<SimEnvironment>(w.scenario);
  return w;
}

inline Trace run_episode(const World& w, Method method, std::size_t index, const Budget& budget) {
  const auto& task = w.scenario.tasks.at(index);
  const auto seed = episode_seed(w.scenario.config.seed, index);
  switch (method) {
    case Method::tool_planner:
      return solve_task(task.task(), w.clusters.toolkits, w.registry, *w.env, w.roles, budget, seed,
                        &w.scenario.embeddings);
    case Method::react: return run_react(task.task(), w.registry, *w.env, w.roles, budget, seed);
    case Method::dfsdt: return run_dfsdt(task.task(), w.registry, *w.env, w.roles, budget, seed);
  }
  throw Error(ErrorCode::config_error, "unknown method");
}

/// Runs `count` episodes on up to `jobs` threads. Results are in episode
/// order whatever the thread count.
inline std::vector<Trace> run_episodes(const World& w, Method method, std::size_t count, const Budget& budget,
                                       int jobs = 1) {
  if (count > w.scenario.tasks.size()) throw Error(ErrorCode::config_error, "more episodes than tasks");
  std::vector<Trace> traces(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        traces[i] = run_episode(w, method, i, budget);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, jobs));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < std::min(n, count); ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);
  return traces;
}

struct ExperimentResult {
  MetricsReport report;
  std::vector<std::pair<Method, std::vector<Trace>>> traces;
};

inline std::string reference_for(const ExperimentConfig& c) {
  for (auto m : c.methods) {
    if (to_string(m) == c.reference) return c.reference;
  }
  return std::string(to_string(c.methods.front()));
}

inline ExperimentResult run_experiment(const ExperimentConfig& config, const Scenario& scenario,
                                       std::string label = {}) {
  auto world = build_world(scenario, config);
  const std::size_t count = config.episodes == 0 ? world.scenario.tasks.size() : config.episodes;
  ExperimentResult out;
  std::vector<std::pair<std::string, std::vector<RunRecord>>> records;
  for (auto m : config.methods) {
    auto traces = run_episodes(world, m, count, config.budget, config.jobs);
    std::vector<RunRecord> recs;
    for (const auto& t : traces) {
      recs.push_back(record_of(t, std::string(to_string(m)) + "/" + t.task_id + ".jsonl"));
    }
    records.emplace_back(std::string(to_string(m)), std::move(recs));
    out.traces.emplace_back(m, std::move(traces));
  }
  out.report = build_report(records, reference_for(config), config_digest(config), std::move(label));
  return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config, std::string label = {}) {
  return run_experiment(config, generate_scenario(config.scenario), std::move(label));
}

/// One report per toolkit count. Each k must not exceed the tool count.
inline std::vector<MetricsReport> k_sweep(const ExperimentConfig& base, const std::vector<std::size_t>& ks) {
  const auto scenario = generate_scenario(base.scenario);
  std::vector<MetricsReport> out;
  for (auto k : ks) {
    if (k == 0 || k > scenario.tools.size()) {
      throw Error(ErrorCode::config_error,
                  "k=" + std::to_string(k) + " outside 1.." + std::to_string(scenario.tools.size()));
    }
    auto c = base;
    c.k = k;
    out.push_back(run_experiment(c, scenario, "k=" + std::to_string(k)).report);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Efficiency and pass-rate comparisons
// ---------------------------------------------------------------------------

struct BenchCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct BenchOutcome {
  std::uint64_t seed = 0;
  MetricsReport report;
  double zero_failure_react_cost = 0.0;
  std::vector<BenchCheck> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const BenchCheck& c) { return c.passed; });
  }
};

/// Runs the three methods on `profile` and ReACT on its zero-failure twin,
/// then checks the efficiency and pass-rate orderings.
inline BenchOutcome run_bench(ScenarioConfig profile, std::size_t episodes, const Budget& budget = {}, int jobs = 1) {
  ExperimentConfig c;
  c.scenario = profile;
  c.episodes = episodes;
  c.budget = budget;
  c.jobs = jobs;
  BenchOutcome out;
  out.seed = profile.seed;
  out.report = run_experiment(c, "seed=" + std::to_string(profile.seed)).report;

  ExperimentConfig z = c;
  z.scenario.failure_profile.clear();
  z.methods = {Method::react};
  out.zero_failure_react_cost = run_experiment(z).report.at("react").mean_cost;

  const auto& tp = out.report.at("tool_planner");
  const auto& re = out.report.at("react");
  const auto& df = out.report.at("dfsdt");
  auto check = [&](std::string name, bool ok, std::string detail) {
    out.checks.push_back({std::move(name), ok, std::move(detail)});
  };
  check("replans(tool_planner) < replans(dfsdt)", tp.mean_replans < df.mean_replans,
        fixed4(tp.mean_replans) + " vs " + fixed4(df.mean_replans));
  check("cost(tool_planner) <= 3 x cost(react, zero failures)", tp.mean_cost <= 3.0 * out.zero_failure_react_cost,
        fixed4(tp.mean_cost) + " vs 3 x " + fixed4(out.zero_failure_react_cost));
  check("cost(dfsdt) > cost(tool_planner)", df.mean_cost > tp.mean_cost,
        fixed4(df.mean_cost) + " vs " + fixed4(tp.mean_cost));
  check("pass(tool_planner) > pass(react)", tp.pass_rate > re.pass_rate,
        fixed4(tp.pass_rate) + " vs " + fixed4(re.pass_rate));
  check("pass(tool_planner) >= pass(dfsdt)", tp.pass_rate >= df.pass_rate,
        fixed4(tp.pass_rate) + " vs " + fixed4(df.pass_rate));
  return out;
}

}  // namespace toolplanner
