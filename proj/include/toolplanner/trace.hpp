#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolplanner/env.hpp"
#include "toolplanner/plan.hpp"
#include "toolplanner/util.hpp"

namespace toolplanner {

enum class Outcome { success, failure, budget_exhausted };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::failure: return "failure";
    case Outcome::budget_exhausted: return "budget_exhausted";
  }
  return "failure";
}

inline Outcome parse_outcome(std::string_view s) {
  if (s == "success") return Outcome::success;
  if (s == "failure") return Outcome::failure;
  if (s == "budget_exhausted") return Outcome::budget_exhausted;
  throw Error(ErrorCode::parse_error, "unknown outcome '" + std::string(s) + "'");
}

struct Counters {
  std::uint64_t tool_calls = 0;
  std::uint64_t replans = 0;
  std::uint64_t in_toolkit_retries = 0;
  std::uint64_t provider_calls = 0;
  std::uint64_t cost_units = 0;
  std::uint64_t hallucinated_calls = 0;
  std::uint64_t discarded_results = 0;
  std::uint64_t ledger = 0;

  bool operator==(const Counters&) const = default;
};

inline nlohmann::ordered_json to_json(const Counters& c) {
  nlohmann::ordered_json j;
  j["tool_calls"] = c.tool_calls;
  j["replans"] = c.replans;
  j["in_toolkit_retries"] = c.in_toolkit_retries;
  j["provider_calls"] = c.provider_calls;
  j["cost_units"] = c.cost_units;
  j["hallucinated_calls"] = c.hallucinated_calls;
  j["discarded_results"] = c.discarded_results;
  j["ledger"] = c.ledger;
  return j;
}

inline Counters counters_from_json(const nlohmann::json& j) {
  Counters c;
  c.tool_calls = j.value("tool_calls", std::uint64_t{0});
  c.replans = j.value("replans", std::uint64_t{0});
  c.in_toolkit_retries = j.value("in_toolkit_retries", std::uint64_t{0});
  c.provider_calls = j.value("provider_calls", std::uint64_t{0});
  c.cost_units = j.value("cost_units", std::uint64_t{0});
  c.hallucinated_calls = j.value("hallucinated_calls", std::uint64_t{0});
  c.discarded_results = j.value("discarded_results", std::uint64_t{0});
  c.ledger = j.value("ledger", std::uint64_t{0});
  return c;
}

/// Event kinds: plan, visit, call, param_error, state, replan, restart,
/// final, note.
struct TraceEvent {
  std::string kind;
  int step = 0;
  std::string toolkit;
  std::string tool;
  std::string params_digest;
  std::string status;  // "ok" / "fail" for calls and replans
  std::optional<FailureKind> failure;
  std::string text;  // call output, failure message, state, plan text or answer
  bool retry = false;
  int restart = 0;
  std::vector<std::string> retained;  // state digests kept across a restart
  Counters counters;

  bool operator==(const TraceEvent&) const = default;
};

/// A node of the exploration tree: one visit of a toolkit at a plan step.
struct TraceNode {
  int id = 0;
  int parent = -1;
  int step = 0;
  std::string toolkit;
  std::vector<std::pair<std::string, bool>> attempts;  // (tool, succeeded)

  bool operator==(const TraceNode&) const = default;
};

struct Trace {
  std::string method;
  std::string task_id;
  std::uint64_t seed = 0;
  std::vector<TraceNode> nodes;
  std::vector<TraceEvent> events;
  Outcome outcome = Outcome::failure;
  Counters counters;
  std::string answer;
  std::vector<StepResult> results;
  ErrorLedger ledger;
  std::vector<std::string> flags;

  bool has_final_answer() const {
    for (const auto& e : events)
      if (e.kind == "final" && !e.text.empty()) return true;
    return false;
  }
};

// ---------------------------------------------------------------------------
// JSON-lines serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json event_to_json(const TraceEvent& e, std::size_t seq) {
  nlohmann::ordered_json j;
  j["seq"] = seq;
  j["event"] = e.kind;
  j["step"] = e.step;
  if (!e.toolkit.empty()) j["toolkit"] = e.toolkit;
  if (!e.tool.empty()) j["tool"] = e.tool;
  if (!e.params_digest.empty()) j["params"] = e.params_digest;
  if (!e.status.empty()) j["status"] = e.status;
  if (e.failure) j["failure"] = std::string(to_string(*e.failure));
  if (!e.text.empty()) j["text"] = e.text;
  if (e.retry) j["retry"] = true;
  if (e.kind == "restart") {
    j["restart"] = e.restart;
    j["retained"] = e.retained;
  }
  j["counters"] = to_json(e.counters);
  return j;
}

inline nlohmann::ordered_json outcome_to_json(const Trace& t) {
  nlohmann::ordered_json j;
  j["event"] = "outcome";
  j["method"] = t.method;
  j["task_id"] = t.task_id;
  j["seed"] = t.seed;
  j["outcome"] = std::string(to_string(t.outcome));
  j["answer"] = t.answer;
  auto results = nlohmann::ordered_json::array();
  for (const auto& r : t.results) {
    nlohmann::ordered_json rj;
    rj["step"] = r.step;
    rj["toolkit"] = r.toolkit;
    rj["tool"] = r.tool_id;
    rj["produced"] = r.produced;
    rj["output"] = r.output;
    rj["state"] = r.state;
    results.push_back(std::move(rj));
  }
  j["results"] = std::move(results);
  auto ledger = nlohmann::ordered_json::array();
  for (const auto& e : t.ledger.entries()) {
    nlohmann::ordered_json ej;
    ej["step"] = e.step;
    ej["toolkit"] = e.toolkit;
    ej["tool"] = e.tool_id;
    ej["kind"] = std::string(to_string(e.kind));
    ej["message"] = e.message;
    ledger.push_back(std::move(ej));
  }
  j["ledger"] = std::move(ledger);
  auto tree = nlohmann::ordered_json::array();
  for (const auto& n : t.nodes) {
    nlohmann::ordered_json nj;
    nj["id"] = n.id;
    nj["parent"] = n.parent;
    nj["step"] = n.step;
    nj["toolkit"] = n.toolkit;
    auto attempts = nlohmann::ordered_json::array();
    for (const auto& [tool, ok] : n.attempts) attempts.push_back({{"tool", tool}, {"ok", ok}});
    nj["attempts"] = std::move(attempts);
    tree.push_back(std::move(nj));
  }
  j["tree"] = std::move(tree);
  j["flags"] = t.flags;
  j["counters"] = to_json(t.counters);
  return j;
}

/// One event per line; the last line is the outcome summary.
inline std::string serialize_trace(const Trace& t) {
  std::string out;
  for (std::size_t i = 0; i < t.events.size(); ++i) out += event_to_json(t.events[i], i).dump() + "\n";
  out += outcome_to_json(t).dump() + "\n";
  return out;
}

inline Trace parse_trace(std::string_view text) {
  Trace t;
  auto lines = split_lines(text);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw Error(ErrorCode::parse_error, "empty trace");
  try {
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
      auto j = nlohmann::json::parse(lines[i]);
      TraceEvent e;
      e.kind = j.at("event").get<std::string>();
      e.step = j.value("step", 0);
      e.toolkit = j.value("toolkit", std::string{});
      e.tool = j.value("tool", std::string{});
      e.params_digest = j.value("params", std::string{});
      e.status = j.value("status", std::string{});
      if (j.contains("failure")) e.failure = parse_failure_kind(j["failure"].get<std::string>());
      e.text = j.value("text", std::string{});
      e.retry = j.value("retry", false);
      e.restart = j.value("restart", 0);
      if (j.contains("retained")) e.retained = j["retained"].get<std::vector<std::string>>();
      e.counters = counters_from_json(j.at("counters"));
      t.events.push_back(std::move(e));
    }
    auto j = nlohmann::json::parse(lines.back());
    if (j.at("event") != "outcome") throw Error(ErrorCode::parse_error, "last trace line is not the outcome");
    t.method = j.at("method").get<std::string>();
    t.task_id = j.at("task_id").get<std::string>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.outcome = parse_outcome(j.at("outcome").get<std::string>());
    t.answer = j.value("answer", std::string{});
    for (const auto& r : j.at("results")) {
      t.results.push_back({r.at("step").get<int>(), r.at("toolkit").get<std::string>(), r.at("tool").get<std::string>(),
                           r.at("output").get<std::string>(), r.at("produced").get<std::string>(),
                           r.at("state").get<std::string>()});
    }
    for (const auto& e : j.at("ledger")) {
      t.ledger.append({e.at("step").get<int>(), e.at("toolkit").get<std::string>(), e.at("tool").get<std::string>(),
                       parse_failure_kind(e.at("kind").get<std::string>()), e.at("message").get<std::string>()});
    }
    for (const auto& n : j.at("tree")) {
      TraceNode node;
      node.id = n.at("id").get<int>();
      node.parent = n.at("parent").get<int>();
      node.step = n.at("step").get<int>();
      node.toolkit = n.at("toolkit").get<std::string>();
      for (const auto& a : n.at("attempts")) node.attempts.emplace_back(a.at("tool").get<std::string>(), a.at("ok").get<bool>());
      t.nodes.push_back(std::move(node));
    }
    t.flags = j.value("flags", std::vector<std::string>{});
    t.counters = counters_from_json(j.at("counters"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("trace: ") + e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Invariants
//
// Each checker returns an empty string when the invariant holds and a
// description of the first violation otherwise.
// ---------------------------------------------------------------------------

/// Counter totals equal event tallies, and success implies a final answer.
inline std::string check_counters(const Trace& t) {
  std::uint64_t calls = 0, replans = 0, retries = 0;
  for (const auto& e : t.events) {
    if (e.kind == "call") ++calls;
    if (e.kind == "replan") ++replans;
    if ((e.kind == "call" || e.kind == "param_error") && e.retry) ++retries;
  }
  if (calls != t.counters.tool_calls) return "tool_calls counter disagrees with call events";
  if (replans != t.counters.replans) return "replans counter disagrees with replan events";
  if (retries != t.counters.in_toolkit_retries) return "in_toolkit_retries counter disagrees with events";
  if (t.counters.ledger != t.ledger.size()) return "ledger counter disagrees with ledger";
  if (t.outcome == Outcome::success && !t.has_final_answer()) return "success without a final answer";
  return {};
}

/// Results kept across a restart are identical to those before the replan.
inline std::string check_prefix_preservation(const Trace& t) {
  std::map<int, std::string> states;
  for (const auto& e : t.events) {
    if (e.kind == "state") {
      states[e.step] = digest(e.text);
    } else if (e.kind == "restart") {
      if (e.retained.size() != static_cast<std::size_t>(e.restart - 1)) {
        return "restart at " + std::to_string(e.restart) + " retains " + std::to_string(e.retained.size()) + " results";
      }
      for (int s = 1; s < e.restart; ++s) {
        auto it = states.find(s);
        if (it == states.end() || it->second != e.retained[static_cast<std::size_t>(s - 1)]) {
          return "result for step " + std::to_string(s) + " changed across restart";
        }
      }
      for (auto it = states.begin(); it != states.end();) {
        it = it->first >= e.restart ? states.erase(it) : std::next(it);
      }
    }
  }
  return {};
}

/// Every replan at step v is preceded, within the current visit of v, by a
/// failure of each member of the toolkit at v.
inline std::string check_exhaustion_before_replan(const Trace& t,
                                                  const std::map<std::string, std::vector<std::string>>& members) {
  std::set<std::string> failed;
  int visit_step = 0;
  std::string visit_toolkit;
  for (const auto& e : t.events) {
    if (e.kind == "visit") {
      failed.clear();
      visit_step = e.step;
      visit_toolkit = e.toolkit;
    } else if ((e.kind == "call" || e.kind == "param_error") && e.status == "fail") {
      failed.insert(e.tool);
    } else if (e.kind == "replan") {
      if (e.step != visit_step || e.toolkit != visit_toolkit) {
        return "replan at step " + std::to_string(e.step) + " without a visit of its toolkit";
      }
      auto it = members.find(e.toolkit);
      if (it == members.end()) return "replan names unknown toolkit " + e.toolkit;
      for (const auto& m : it->second) {
        if (!failed.count(m)) return "replan at step " + std::to_string(e.step) + " before " + m + " was tried";
      }
    }
  }
  return {};
}

/// Between replans the step -> toolkit mapping of the active plan is fixed:
/// every visit uses the toolkit the active plan assigns to that step.
inline std::string check_plan_stability(const Trace& t) {
  std::optional<Plan> active;
  for (const auto& e : t.events) {
    if ((e.kind == "plan" || e.kind == "replan") && e.status != "fail" && !e.text.empty()) {
      active = parse_plan(e.text);
    } else if (e.kind == "visit") {
      if (!active) return "visit before any plan";
      if (e.step < 1 || static_cast<std::size_t>(e.step) > active->size() || active->toolkit_at(e.step) != e.toolkit) {
        return "visit of " + e.toolkit + " at step " + std::to_string(e.step) + " disagrees with the active plan";
      }
    }
  }
  return {};
}

inline std::string check_ledger_monotone(const Trace& t) {
  std::uint64_t last = 0;
  for (const auto& e : t.events) {
    if (e.counters.ledger < last) return "ledger shrank";
    last = e.counters.ledger;
  }
  return {};
}

}  // namespace toolplanner
