#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolplanner/error.hpp"
#include "toolplanner/plan.hpp"
#include "toolplanner/util.hpp"

namespace toolplanner {

/// Failure taxonomy for tool calls and episodes.
enum class FailureKind {
  invalid_input_parameters,
  api_hallucinated,
  false_api_call_format,
  cluster_incomplete,
  miss_input_parameters,
  decision_failure,
};

inline constexpr FailureKind all_failure_kinds[] = {
    FailureKind::invalid_input_parameters, FailureKind::api_hallucinated,     FailureKind::false_api_call_format,
    FailureKind::cluster_incomplete,       FailureKind::miss_input_parameters, FailureKind::decision_failure,
};

inline std::string_view to_string(FailureKind k) {
  switch (k) {
    case FailureKind::invalid_input_parameters: return "invalid_input_parameters";
    case FailureKind::api_hallucinated: return "api_hallucinated";
    case FailureKind::false_api_call_format: return "false_api_call_format";
    case FailureKind::cluster_incomplete: return "cluster_incomplete";
    case FailureKind::miss_input_parameters: return "miss_input_parameters";
    case FailureKind::decision_failure: return "decision_failure";
  }
  return "unknown";
}

inline FailureKind parse_failure_kind(std::string_view s) {
  for (auto k : all_failure_kinds) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::config_error, "unknown failure kind '" + std::string(s) + "'");
}

struct LedgerEntry {
  int step = 0;
  std::string toolkit;
  std::string tool_id;
  FailureKind kind = FailureKind::invalid_input_parameters;
  std::string message;

  bool operator==(const LedgerEntry&) const = default;
};

/// Append-only record of failures in an episode, in the order they happened.
class ErrorLedger {
 public:
  void append(LedgerEntry e) { entries_.push_back(std::move(e)); }
  void add_exhausted_plan(Plan p) { exhausted_plans_.push_back(std::move(p)); }
  const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }
  const std::vector<Plan>& exhausted_plans() const noexcept { return exhausted_plans_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  std::size_t count(FailureKind k) const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.kind == k;
    return n;
  }

  /// Tool-level failures, i.e. everything except decision_failure.
  std::size_t tool_failures() const { return entries_.size() - count(FailureKind::decision_failure); }

  /// "tool (toolkit, step n): kind - message; ..." as fed to replanning.
  std::string serialize() const {
    std::string out;
    for (const auto& e : entries_) {
      if (!out.empty()) out += "; ";
      out += e.tool_id + " (" + e.toolkit + ", step " + std::to_string(e.step) + "): " + std::string(to_string(e.kind));
      if (!e.message.empty()) out += " - " + e.message;
    }
    return out;
  }

 private:
  std::vector<LedgerEntry> entries_;
  std::vector<Plan> exhausted_plans_;
};

/// A user task as the planner sees it.
struct Task {
  std::string task_id;
  std::string query;
};

/// Per-episode mutable state owned by whoever runs the episode: the episode
/// generator, the cost meter, and per-tool call counters.
struct EpisodeContext {
  explicit EpisodeContext(std::uint64_t seed) : rng(seed) {}

  Rng rng;
  std::uint64_t cost_units = 0;
  std::map<std::string, int, std::less<>> calls_per_tool;
};

struct CallOutcome {
  bool ok = false;
  std::string output;
  // Capability tag the call produced, when the environment knows it.
  std::string produced;
  FailureKind failure = FailureKind::invalid_input_parameters;
  std::string message;
};

/// Output of one completed plan step.
struct StepResult {
  int step = 0;
  std::string toolkit;
  std::string tool_id;
  std::string output;
  std::string produced;
  std::string state;

  bool operator==(const StepResult&) const = default;
};

/// The world tools are called in. Implementations are immutable and may be
/// shared by concurrent episodes; all per-episode state lives in the context.
class ToolEnvironment {
 public:
  virtual ~ToolEnvironment() = default;
  virtual CallOutcome invoke(std::string_view tool_id, const nlohmann::json& params, EpisodeContext& ctx) const = 0;

  /// Whether the completed steps solve the task. Environments without a
  /// success predicate accept any answer.
  virtual bool task_satisfied(const Task&, const std::vector<StepResult>&) const { return true; }
};

}  // namespace toolplanner
