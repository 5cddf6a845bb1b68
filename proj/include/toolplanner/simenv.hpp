#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "toolplanner/catalog.hpp"
#include "toolplanner/embedding.hpp"
#include "toolplanner/env.hpp"
#include "toolplanner/util.hpp"

namespace toolplanner {

enum class BehaviorKind { always_succeed, always_fail, fail_first_n, bernoulli_fail };

inline std::string_view to_string(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::always_succeed: return "always_succeed";
    case BehaviorKind::always_fail: return "always_fail";
    case BehaviorKind::fail_first_n: return "fail_first_n";
    case BehaviorKind::bernoulli_fail: return "bernoulli_fail";
  }
  return "always_succeed";
}

inline BehaviorKind parse_behavior_kind(std::string_view s) {
  for (auto k : {BehaviorKind::always_succeed, BehaviorKind::always_fail, BehaviorKind::fail_first_n,
                 BehaviorKind::bernoulli_fail}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::config_error, "unknown tool behavior '" + std::string(s) + "'");
}

struct ToolBehavior {
  BehaviorKind kind = BehaviorKind::always_succeed;
  // `{capability}` and `{value}` are substituted on success.
  std::string output_template = "{capability}={value}";
  int n = 0;
  double p = 0.0;
  FailureKind failure = FailureKind::invalid_input_parameters;

  static ToolBehavior succeed(std::string output = "{capability}={value}") {
    return {BehaviorKind::always_succeed, std::move(output), 0, 0.0, FailureKind::invalid_input_parameters};
  }
  static ToolBehavior fail(FailureKind kind) { return {BehaviorKind::always_fail, "{capability}={value}", 0, 0.0, kind}; }
  static ToolBehavior fail_first(int n, FailureKind kind) {
    return {BehaviorKind::fail_first_n, "{capability}={value}", n, 0.0, kind};
  }
  static ToolBehavior bernoulli(double p, FailureKind kind) {
    return {BehaviorKind::bernoulli_fail, "{capability}={value}", 0, p, kind};
  }

  bool operator==(const ToolBehavior&) const = default;
};

struct SimTool {
  std::string tool_id;
  std::string capability;
  ToolBehavior behavior;
  std::uint64_t latency_cost = 1;

  bool operator==(const SimTool&) const = default;
};

struct SimTask {
  std::string task_id;
  std::string goal;
  std::vector<std::string> required_capabilities;

  Task task() const { return {task_id, goal}; }
  bool operator==(const SimTask&) const = default;
};

/// Task text the simulated models understand: the required capabilities in
/// order after "to: ", joined by " -> ".
inline std::string task_goal_text(const std::vector<std::string>& caps) {
  return "Please help me to: " + join(caps, " -> ");
}

struct ScenarioConfig {
  int n_capabilities = 5;
  int tools_per_capability = 3;
  // Probabilities per failure kind. invalid_input_parameters,
  // false_api_call_format and miss_input_parameters add up to each tool's
  // failure probability; api_hallucinated is the chance a baseline model
  // invents a tool name; cluster_incomplete is the chance a tool's embedding
  // lands in another capability's region; decision_failure is the chance a
  // task needs a capability no tool provides.
  std::map<FailureKind, double> failure_profile;
  std::uint64_t seed = 0;
  int distractor_tools = 0;
  int n_tasks = 200;
  int min_steps = 1;
  int max_steps = 0;  // 0 means n_capabilities

  double probability(FailureKind k) const {
    auto it = failure_profile.find(k);
    return it == failure_profile.end() ? 0.0 : it->second;
  }

  double tool_failure_probability() const {
    return std::min(1.0, probability(FailureKind::invalid_input_parameters) +
                             probability(FailureKind::false_api_call_format) +
                             probability(FailureKind::miss_input_parameters));
  }

  int steps_cap() const { return max_steps > 0 ? std::min(max_steps, n_capabilities) : n_capabilities; }

  void validate() const {
    if (n_capabilities < 1) throw Error(ErrorCode::config_error, "n_capabilities must be >= 1");
    if (tools_per_capability < 1) throw Error(ErrorCode::config_error, "tools_per_capability must be >= 1");
    if (distractor_tools < 0) throw Error(ErrorCode::config_error, "distractor_tools must be >= 0");
    if (n_tasks < 1) throw Error(ErrorCode::config_error, "n_tasks must be >= 1");
    if (min_steps < 1 || min_steps > steps_cap()) throw Error(ErrorCode::config_error, "min_steps out of range");
    for (const auto& [k, p] : failure_profile) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw Error(ErrorCode::config_error, "probability for " + std::string(to_string(k)) + " must lie in [0, 1]");
      }
    }
  }
};

inline nlohmann::ordered_json to_json(const ScenarioConfig& c) {
  nlohmann::ordered_json j;
  j["n_capabilities"] = c.n_capabilities;
  j["tools_per_capability"] = c.tools_per_capability;
  nlohmann::ordered_json fp = nlohmann::ordered_json::object();
  for (auto k : all_failure_kinds) {
    auto it = c.failure_profile.find(k);
    if (it != c.failure_profile.end()) fp[std::string(to_string(k))] = it->second;
  }
  j["failure_profile"] = std::move(fp);
  j["seed"] = c.seed;
  j["distractor_tools"] = c.distractor_tools;
  j["n_tasks"] = c.n_tasks;
  j["min_steps"] = c.min_steps;
  j["max_steps"] = c.max_steps;
  return j;
}

inline ScenarioConfig scenario_config_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  try {
    c.n_capabilities = j.value("n_capabilities", c.n_capabilities);
    c.tools_per_capability = j.value("tools_per_capability", c.tools_per_capability);
    if (j.contains("failure_profile")) {
      for (const auto& [k, v] : j["failure_profile"].items()) c.failure_profile[parse_failure_kind(k)] = v.get<double>();
    }
    c.seed = j.value("seed", c.seed);
    c.distractor_tools = j.value("distractor_tools", c.distractor_tools);
    c.n_tasks = j.value("n_tasks", c.n_tasks);
    c.min_steps = j.value("min_steps", c.min_steps);
    c.max_steps = j.value("max_steps", c.max_steps);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config_error, std::string("scenario config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Five capabilities, three tools each, half of all calls to a tool failing
/// (mostly with bad parameters), occasional invented tool names.
inline ScenarioConfig default_bench_profile(std::uint64_t seed = 0) {
  ScenarioConfig c;
  c.n_capabilities = 5;
  c.tools_per_capability = 3;
  c.failure_profile = {{FailureKind::invalid_input_parameters, 0.35},
                       {FailureKind::false_api_call_format, 0.10},
                       {FailureKind::miss_input_parameters, 0.05},
                       {FailureKind::api_hallucinated, 0.05}};
  c.seed = seed;
  c.distractor_tools = 0;
  c.n_tasks = 200;
  return c;
}

inline ScenarioConfig zero_failure_profile(std::uint64_t seed = 0) {
  auto c = default_bench_profile(seed);
  c.failure_profile.clear();
  return c;
}

/// Larger groups with unreliable tools, used for the cluster-count sweep.
inline ScenarioConfig k_sweep_profile(std::uint64_t seed = 0) {
  ScenarioConfig c;
  c.n_capabilities = 6;
  c.tools_per_capability = 5;
  c.failure_profile = {{FailureKind::invalid_input_parameters, 0.5},
                       {FailureKind::false_api_call_format, 0.1},
                       {FailureKind::miss_input_parameters, 0.1}};
  c.seed = seed;
  c.distractor_tools = 2;
  c.n_tasks = 200;
  return c;
}

struct Scenario {
  ScenarioConfig config;
  std::vector<std::string> capabilities;
  std::vector<SimTool> tools;
  ToolRegistry registry;
  EmbeddingSet embeddings;
  std::vector<SimTask> tasks;
};

inline std::string capability_name(int i) {
  static const char* names[] = {"geocode", "weather", "translate", "currency", "search",  "calendar",
                                "email",   "stocks",  "news",      "recipes",  "flights", "hotels"};
  constexpr int n = static_cast<int>(sizeof(names) / sizeof(names[0]));
  return i < n ? std::string(names[i]) : "cap" + std::to_string(i);
}

inline ToolDescriptor sim_tool_descriptor(const SimTool& t, int variant) {
  ToolDescriptor d;
  d.tool_id = t.tool_id;
  d.name = t.tool_id;
  d.docs = "Capability: " + t.capability + ". Parameters: intent (string, required, must be \"" + t.capability +
           "\"), query (string).";
  d.description = t.capability + " service, variant " + std::to_string(variant);
  d.params = {{"intent", "string", true}, {"query", "string", false}};
  d.source_category = "sim";
  return d;
}

namespace detail {

inline std::vector<double> noisy_direction(std::size_t dims, std::size_t axis, double noise_norm, Rng& rng) {
  std::vector<double> noise(dims);
  double n2 = 0.0;
  for (auto& x : noise) {
    x = rng.uniform() * 2.0 - 1.0;
    n2 += x * x;
  }
  const double scale = n2 > 0.0 ? noise_norm / std::sqrt(n2) : 0.0;
  std::vector<double> v(dims, 0.0);
  v[axis] = 1.0;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < dims; ++i) {
    v[i] += noise[i] * scale;
    norm2 += v[i] * v[i];
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

}  // namespace detail

/// Builds tools, embeddings and tasks from the config; fully determined by
/// the seed. Capability tools sit near their capability's axis (noise of
/// norm 0.08), distractors on axes of their own.
inline Scenario generate_scenario(const ScenarioConfig& config) {
  config.validate();
  Scenario sc;
  sc.config = config;
  // Separate streams, so that changing failure probabilities leaves the
  // embeddings and the tasks untouched.
  Rng geometry(derive_seed(config.seed, 1));
  Rng faults(derive_seed(config.seed, 2));
  Rng tasks(derive_seed(config.seed, 3));
  Rng decisions(derive_seed(config.seed, 4));

  const auto n_caps = static_cast<std::size_t>(config.n_capabilities);
  const auto n_dis = static_cast<std::size_t>(config.distractor_tools);
  const std::size_t dims = n_caps + n_dis + 2;
  constexpr double noise = 0.08;

  for (std::size_t c = 0; c < n_caps; ++c) sc.capabilities.push_back(capability_name(static_cast<int>(c)));

  const double p_fail = config.tool_failure_probability();
  const double w_invalid = config.probability(FailureKind::invalid_input_parameters);
  const double w_format = config.probability(FailureKind::false_api_call_format);
  const double w_miss = config.probability(FailureKind::miss_input_parameters);
  const double w_total = w_invalid + w_format + w_miss;
  const double p_misplace = config.probability(FailureKind::cluster_incomplete);

  sc.embeddings = EmbeddingSet(dims, "sim");
  for (std::size_t c = 0; c < n_caps; ++c) {
    for (int j = 0; j < config.tools_per_capability; ++j) {
      SimTool t;
      t.capability = sc.capabilities[c];
      t.tool_id = t.capability + "_api_" + std::to_string(j + 1);
      if (p_fail > 0.0) {
        const double u = faults.uniform() * w_total;
        FailureKind kind = u < w_invalid              ? FailureKind::invalid_input_parameters
                           : u < w_invalid + w_format ? FailureKind::false_api_call_format
                                                      : FailureKind::miss_input_parameters;
        t.behavior = ToolBehavior::bernoulli(p_fail, kind);
      }
      std::size_t axis = c;
      if (p_misplace > 0.0 && n_caps > 1 && faults.uniform() < p_misplace) {
        axis = (c + 1 + faults.below(n_caps - 1)) % n_caps;
      }
      sc.embeddings.add(t.tool_id, EmbeddingVector(detail::noisy_direction(dims, axis, noise, geometry)));
      sc.registry.add(sim_tool_descriptor(t, j + 1));
      sc.tools.push_back(std::move(t));
    }
  }
  for (std::size_t d = 0; d < n_dis; ++d) {
    SimTool t;
    t.capability = "misc" + std::to_string(d);
    t.tool_id = t.capability + "_api_1";
    sc.embeddings.add(t.tool_id, EmbeddingVector(detail::noisy_direction(dims, n_caps + d, noise, geometry)));
    sc.registry.add(sim_tool_descriptor(t, 1));
    sc.tools.push_back(std::move(t));
  }

  const double p_decision = config.probability(FailureKind::decision_failure);
  const int max_len = config.steps_cap();
  for (int i = 0; i < config.n_tasks; ++i) {
    SimTask task;
    char id[32];
    std::snprintf(id, sizeof id, "task-%04d", i);
    task.task_id = id;
    const int len =
        config.min_steps + static_cast<int>(tasks.below(static_cast<std::size_t>(max_len - config.min_steps + 1)));
    std::vector<std::string> pool = sc.capabilities;
    for (int s = 0; s < len; ++s) {
      const auto pick = tasks.below(pool.size());
      task.required_capabilities.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    if (p_decision > 0.0 && decisions.uniform() < p_decision) {
      const auto at = decisions.below(task.required_capabilities.size() + 1);
      task.required_capabilities.insert(task.required_capabilities.begin() + static_cast<std::ptrdiff_t>(at),
                                        "unsupported" + std::to_string(i));
    }
    task.goal = task_goal_text(task.required_capabilities);
    sc.tasks.push_back(std::move(task));
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const ToolBehavior& b) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(b.kind));
  j["output"] = b.output_template;
  if (b.kind == BehaviorKind::fail_first_n) j["n"] = b.n;
  if (b.kind == BehaviorKind::bernoulli_fail) j["p"] = b.p;
  if (b.kind != BehaviorKind::always_succeed) j["failure"] = std::string(to_string(b.failure));
  return j;
}

inline ToolBehavior behavior_from_json(const nlohmann::json& j) {
  ToolBehavior b;
  b.kind = parse_behavior_kind(j.at("kind").get<std::string>());
  b.output_template = j.value("output", b.output_template);
  b.n = j.value("n", 0);
  b.p = j.value("p", 0.0);
  if (j.contains("failure")) b.failure = parse_failure_kind(j["failure"].get<std::string>());
  return b;
}

inline std::string serialize_scenario(const Scenario& sc) {
  nlohmann::ordered_json j;
  j["config"] = to_json(sc.config);
  j["capabilities"] = sc.capabilities;
  j["dims"] = sc.embeddings.dims();
  auto tools = nlohmann::ordered_json::array();
  for (const auto& t : sc.tools) {
    nlohmann::ordered_json tj;
    tj["tool_id"] = t.tool_id;
    tj["capability"] = t.capability;
    tj["behavior"] = to_json(t.behavior);
    tj["latency_cost"] = t.latency_cost;
    const auto& d = sc.registry.get(t.tool_id);
    tj["docs"] = d.docs;
    tj["description"] = d.description;
    if (sc.embeddings.contains(t.tool_id)) {
      auto v = sc.embeddings.at(t.tool_id).values();
      tj["embedding"] = std::vector<double>(v.begin(), v.end());
    }
    tools.push_back(std::move(tj));
  }
  j["tools"] = std::move(tools);
  auto tasks = nlohmann::ordered_json::array();
  for (const auto& t : sc.tasks) {
    tasks.push_back({{"task_id", t.task_id}, {"goal", t.goal}, {"required_capabilities", t.required_capabilities}});
  }
  j["tasks"] = std::move(tasks);
  return j.dump(2) + "\n";
}

inline Scenario parse_scenario(std::string_view text) {
  Scenario sc;
  try {
    auto j = nlohmann::json::parse(text);
    sc.config = scenario_config_from_json(j.at("config"));
    sc.capabilities = j.at("capabilities").get<std::vector<std::string>>();
    sc.embeddings = EmbeddingSet(j.at("dims").get<std::size_t>(), "sim");
    for (const auto& tj : j.at("tools")) {
      SimTool t;
      t.tool_id = tj.at("tool_id").get<std::string>();
      t.capability = tj.at("capability").get<std::string>();
      t.behavior = behavior_from_json(tj.at("behavior"));
      t.latency_cost = tj.value("latency_cost", std::uint64_t{1});
      ToolDescriptor d;
      d.tool_id = t.tool_id;
      d.name = t.tool_id;
      d.docs = tj.value("docs", "Capability: " + t.capability + ".");
      d.description = tj.value("description", t.capability);
      d.params = {{"intent", "string", true}, {"query", "string", false}};
      d.source_category = "sim";
      if (d.docs.empty()) throw Error(ErrorCode::empty_docs, "tool " + t.tool_id + " has empty docs");
      sc.registry.add(std::move(d));
      if (tj.contains("embedding")) {
        sc.embeddings.add(t.tool_id, EmbeddingVector(tj["embedding"].get<std::vector<double>>()));
      }
      sc.tools.push_back(std::move(t));
    }
    for (const auto& tj : j.at("tasks")) {
      SimTask t;
      t.task_id = tj.at("task_id").get<std::string>();
      t.goal = tj.at("goal").get<std::string>();
      t.required_capabilities = tj.at("required_capabilities").get<std::vector<std::string>>();
      if (t.required_capabilities.empty()) {
        throw Error(ErrorCode::config_error, "task " + t.task_id + " has no required capabilities");
      }
      sc.tasks.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("scenario: ") + e.what());
  }
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_file(path)); }

inline void save_scenario(const Scenario& sc, const std::filesystem::path& path) {
  write_file(path, serialize_scenario(sc));
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

/// The tool world of a scenario. Immutable; per-episode state (call counters,
/// cost meter, episode generator) lives in the EpisodeContext.
///
/// A bernoulli_fail tool is healthy or broken for a whole episode: the draw
/// is keyed by the episode seed and the tool id, so every method run on the
/// same episode sees the same broken tools.
class SimEnvironment : public ToolEnvironment {
 public:
  SimEnvironment(std::vector<SimTool> tools, std::vector<SimTask> tasks) {
    for (auto& t : tools) {
      auto id = t.tool_id;
      tools_.emplace(std::move(id), std::move(t));
    }
    for (auto& t : tasks) {
      auto id = t.task_id;
      tasks_.emplace(std::move(id), std::move(t));
    }
  }

  explicit SimEnvironment(const Scenario& sc) : SimEnvironment(sc.tools, sc.tasks) {}

  CallOutcome invoke(std::string_view tool_id, const nlohmann::json& params, EpisodeContext& ctx) const override {
    auto it = tools_.find(tool_id);
    if (it == tools_.end()) {
      ctx.cost_units += 1;
      return failure(FailureKind::api_hallucinated, "no API named '" + std::string(tool_id) + "'");
    }
    const SimTool& tool = it->second;
    const int call_no = ++ctx.calls_per_tool[tool.tool_id];
    ctx.cost_units += tool.latency_cost;

    if (!params.is_object()) return failure(FailureKind::false_api_call_format, "parameters must be a JSON object");
    if (!params.contains("intent") || !params["intent"].is_string()) {
      return failure(FailureKind::miss_input_parameters, "required parameter 'intent' is missing");
    }
    const auto intent = params["intent"].get<std::string>();
    if (intent != tool.capability) {
      return failure(FailureKind::cluster_incomplete,
                     "API provides " + tool.capability + ", request needs " + intent);
    }

    const auto& b = tool.behavior;
    switch (b.kind) {
      case BehaviorKind::always_succeed: break;
      case BehaviorKind::always_fail: return failure(b.failure, failure_message(b.failure));
      case BehaviorKind::fail_first_n:
        if (call_no <= b.n) return failure(b.failure, failure_message(b.failure));
        break;
      case BehaviorKind::bernoulli_fail:
        if (ctx.rng.keyed_uniform("health:" + tool.tool_id) < b.p) return failure(b.failure, failure_message(b.failure));
        break;
    }

    CallOutcome ok;
    ok.ok = true;
    ok.produced = tool.capability;
    ok.output = render_output(tool, params);
    return ok;
  }

  /// The required capabilities were produced, in order, by the completed
  /// steps.
  bool task_satisfied(const Task& task, const std::vector<StepResult>& results) const override {
    auto it = tasks_.find(task.task_id);
    if (it == tasks_.end()) return false;
    std::size_t next = 0;
    const auto& req = it->second.required_capabilities;
    for (const auto& r : results) {
      if (next < req.size() && r.produced == req[next]) ++next;
    }
    return next == req.size();
  }

  const SimTool* tool(std::string_view id) const {
    auto it = tools_.find(id);
    return it == tools_.end() ? nullptr : &it->second;
  }

 private:
  static CallOutcome failure(FailureKind kind, std::string message) {
    CallOutcome c;
    c.ok = false;
    c.failure = kind;
    c.message = std::move(message);
    return c;
  }

  static std::string failure_message(FailureKind kind) {
    switch (kind) {
      case FailureKind::invalid_input_parameters: return "400: invalid value for parameter 'query'";
      case FailureKind::false_api_call_format: return "400: malformed request body";
      case FailureKind::miss_input_parameters: return "400: missing required parameter";
      case FailureKind::api_hallucinated: return "404: unknown endpoint";
      case FailureKind::cluster_incomplete: return "400: unsupported operation";
      case FailureKind::decision_failure: return "task not solved";
    }
    return "error";
  }

  static std::string render_output(const SimTool& tool, const nlohmann::json& params) {
    std::string out = tool.behavior.output_template;
    const std::string value = digest(tool.tool_id + "|" + params.dump()).substr(0, 8);
    for (auto [key, val] : {std::pair<std::string_view, std::string>{"{capability}", tool.capability},
                            std::pair<std::string_view, std::string>{"{value}", value}}) {
      for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + val.size())) {
        out.replace(pos, key.size(), val);
      }
    }
    return out;
  }

  std::map<std::string, SimTool, std::less<>> tools_;
  std::map<std::string, SimTask, std::less<>> tasks_;
};

/// Seed of episode `index` in a scenario.
inline std::uint64_t episode_seed(std::uint64_t scenario_seed, std::uint64_t index) { return scenario_seed ^ index; }

}  // namespace toolplanner
