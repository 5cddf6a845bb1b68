#pragma once

#include <chrono>
#include <memory>
#include <regex>
#include <string>
#include <vector>

#include "toolplanner/catalog.hpp"
#include "toolplanner/env.hpp"
#include "toolplanner/explorer.hpp"
#include "toolplanner/planning.hpp"
#include "toolplanner/prompts.hpp"
#include "toolplanner/trace.hpp"

namespace toolplanner {

namespace detail {

/// Shared bookkeeping for the API-level baselines.
class BaselineEpisode {
 public:
  BaselineEpisode(const Task& task, const ProviderRoles& roles, const Budget& budget, std::uint64_t seed,
                  std::string method)
      : task_(task), budget_(budget), ctx_(seed), started_(std::chrono::steady_clock::now()) {
    roles.validate();
    budget.validate();
    planning_ = std::make_shared<CountingProvider>(roles.planning_model);
    behavior_ = roles.planning_model == roles.behavior_model ? planning_
                                                              : std::make_shared<CountingProvider>(roles.behavior_model);
    trace_.method = std::move(method);
    trace_.task_id = task.task_id;
    trace_.seed = seed;
  }

  std::string ask(CountingProvider& p, std::string prompt) {
    return complete_with_retry(p, ChatRequest::user(std::move(prompt), ctx_.rng.next_u64()), RetryPolicy::immediate());
  }
  std::string ask_planner(std::string prompt) { return ask(*planning_, std::move(prompt)); }
  std::string ask_behavior(std::string prompt) { return ask(*behavior_, std::move(prompt)); }

  bool out_of_calls() const { return trace_.counters.tool_calls >= budget_.max_tool_calls; }
  bool out_of_replans() const { return trace_.counters.replans >= budget_.max_replans; }
  bool out_of_time() const {
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started_);
    return elapsed.count() >= budget_.max_wall_ms;
  }

  /// Invokes a tool, records the attempt in the tree, the ledger and the
  /// event stream.
  CallOutcome call(const ToolEnvironment& env, int step, const std::string& tool_id, const nlohmann::json& params) {
    ++trace_.counters.tool_calls;
    auto outcome = env.invoke(tool_id, params, ctx_);
    trace_.nodes.push_back({static_cast<int>(trace_.nodes.size()), step > 1 ? last_node_ : -1, step, "", {}});
    trace_.nodes.back().attempts.emplace_back(tool_id, outcome.ok);
    last_node_ = trace_.nodes.back().id;
    if (!outcome.ok) {
      if (outcome.failure == FailureKind::api_hallucinated) ++trace_.counters.hallucinated_calls;
      ledger_.append({step, "", tool_id, outcome.failure, outcome.message});
    }
    emit({.kind = "call",
          .step = step,
          .tool = tool_id,
          .params_digest = digest(params.dump()),
          .status = outcome.ok ? "ok" : "fail",
          .failure = outcome.ok ? std::nullopt : std::optional<FailureKind>(outcome.failure),
          .text = outcome.ok ? outcome.output : outcome.message});
    return outcome;
  }

  void format_failure(int step, const std::string& tool_id, const std::string& response) {
    ledger_.append({step, "", tool_id, FailureKind::false_api_call_format, "call parameters are not a JSON object"});
    emit({.kind = "param_error",
          .step = step,
          .tool = tool_id,
          .status = "fail",
          .failure = FailureKind::false_api_call_format,
          .text = trim(response)});
  }

  void emit(TraceEvent e) {
    sync();
    e.counters = trace_.counters;
    trace_.events.push_back(std::move(e));
  }

  Trace finish(Outcome outcome, std::vector<StepResult> results) {
    if (outcome == Outcome::failure && ledger_.tool_failures() == 0) {
      ledger_.append({0, "", "", FailureKind::decision_failure, "episode failed without any tool failure"});
      emit({.kind = "note", .status = "fail", .failure = FailureKind::decision_failure});
    }
    sync();
    trace_.outcome = outcome;
    trace_.results = std::move(results);
    trace_.ledger = ledger_;
    return trace_;
  }

  Trace& trace() { return trace_; }
  ErrorLedger& ledger() { return ledger_; }
  const Task& task() const { return task_; }

 private:
  void sync() {
    auto& c = trace_.counters;
    c.provider_calls = planning_->calls() + (behavior_ == planning_ ? 0 : behavior_->calls());
    c.cost_units = ctx_.cost_units + c.provider_calls;
    c.ledger = ledger_.size();
  }

  Task task_;
  Budget budget_;
  EpisodeContext ctx_;
  std::chrono::steady_clock::time_point started_;
  std::shared_ptr<CountingProvider> planning_;
  std::shared_ptr<CountingProvider> behavior_;
  Trace trace_;
  ErrorLedger ledger_;
  int last_node_ = -1;
};

inline std::string api_list(const ToolRegistry& registry) {
  std::string out;
  for (const auto& t : registry.tools()) out += "- " + t.tool_id + ": " + t.docs + "\n";
  return out;
}

inline std::string final_answer_prompt(const Task& task, const std::vector<StepResult>& results) {
  std::string out(prompt_template(PromptName::final_output).text);
  out += "\n\nHere is the user's question: " + task.query + "\nIntermediate states:\n";
  for (const auto& r : results) out += "- " + r.state + "\n";
  return out;
}

}  // namespace detail

/// Linear reason-act agent: one API per step, chosen by the behavior model
/// from the flat API list. Any failure ends the episode.
inline Trace run_react(const Task& task, const ToolRegistry& registry, const ToolEnvironment& env,
                       const ProviderRoles& roles, const Budget& budget, std::uint64_t seed) {
  detail::BaselineEpisode ep(task, roles, budget, seed, "react");
  const auto apis = detail::api_list(registry);
  std::vector<StepResult> results;
  std::string observations;
  static const std::regex action_re(R"(Action:\s*(\S+))");
  try {
    for (int step = 1;; ++step) {
      if (ep.out_of_time()) return ep.finish(Outcome::budget_exhausted, results);
      auto response = ep.ask_behavior(render_prompt(
          prompt_template(PromptName::react_step),
          {{"user query", task.query}, {"api list", apis}, {"observations", observations.empty() ? "(none)\n" : observations}}));
      if (auto pos = response.find("Finish:"); pos != std::string::npos) {
        auto answer = trim(std::string_view(response).substr(pos + 7));
        ep.trace().answer = answer;
        ep.emit({.kind = "final", .status = answer.empty() ? "fail" : "ok", .text = answer});
        const bool solved = !answer.empty() && env.task_satisfied(task, results);
        return ep.finish(solved ? Outcome::success : Outcome::failure, results);
      }
      std::smatch m;
      if (!std::regex_search(response, m, action_re)) {
        ep.format_failure(step, "", response);
        return ep.finish(Outcome::failure, results);
      }
      const std::string tool_id = m[1].str();
      auto input_pos = response.find("Action Input:");
      auto params = extract_json_object(input_pos == std::string::npos ? std::string_view{}
                                                                        : std::string_view(response).substr(input_pos));
      if (!params) {
        ep.format_failure(step, tool_id, response);
        return ep.finish(Outcome::failure, results);
      }
      if (ep.out_of_calls()) return ep.finish(Outcome::budget_exhausted, results);
      auto outcome = ep.call(env, step, tool_id, *params);
      if (!outcome.ok) return ep.finish(Outcome::failure, results);
      results.push_back({step, "", tool_id, outcome.output, outcome.produced, outcome.output});
      observations += "- " + tool_id + " -> " + outcome.output + "\n";
    }
  } catch (const ProviderError& e) {
    ep.emit({.kind = "note", .status = "fail", .text = std::string("provider error: ") + e.what()});
    return ep.finish(Outcome::failure, results);
  }
}

namespace detail {

inline std::string dfsdt_params_prompt(const Task& task, const Plan& path, int step, const ToolRegistry& registry,
                                       const std::vector<StepResult>& results) {
  const auto& s = path.steps.at(static_cast<std::size_t>(step - 1));
  std::string out = "Generate the call parameters for the next API call of the path.";
  out += "\nHere is the user's question: " + task.query;
  out += "\nStep " + std::to_string(step) + " of " + std::to_string(path.size()) + ", goal: " + s.goal;
  out += "\nAPI: " + s.toolkit;
  out += "\nDocumentation: " + (registry.contains(s.toolkit) ? registry.get(s.toolkit).docs : "(none)");
  out += "\nPrevious state: " + (results.empty() ? task.query : results.back().state);
  out += "\nRespond with the call parameters as a JSON object.";
  return out;
}

}  // namespace detail

/// API-level depth-first search: the planning model proposes a path of API
/// calls; on any failure the error history goes back to it for a new path,
/// and execution starts over from the first step.
inline Trace run_dfsdt(const Task& task, const ToolRegistry& registry, const ToolEnvironment& env,
                       const ProviderRoles& roles, const Budget& budget, std::uint64_t seed) {
  detail::BaselineEpisode ep(task, roles, budget, seed, "dfsdt");
  const auto apis = detail::api_list(registry);
  std::vector<StepResult> results;
  std::string history;

  auto propose = [&]() {
    return parse_plan(ep.ask_planner(render_prompt(
        prompt_template(PromptName::dfsdt_path),
        {{"user query", task.query}, {"api list", apis}, {"error history", history.empty() ? "(none)\n" : history}})));
  };

  try {
    Plan path;
    try {
      path = propose();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::provider_error) throw;
      ep.emit({.kind = "plan", .status = "fail", .text = e.what()});
      return ep.finish(Outcome::failure, results);
    }
    ep.emit({.kind = "plan", .status = "ok", .text = path.to_text()});

    while (true) {
      bool failed = false;
      for (int step = 1; static_cast<std::size_t>(step) <= path.size(); ++step) {
        if (ep.out_of_calls() || ep.out_of_time()) return ep.finish(Outcome::budget_exhausted, results);
        const auto& tool_id = path.toolkit_at(step);
        auto response = ep.ask_behavior(detail::dfsdt_params_prompt(task, path, step, registry, results));
        auto params = extract_json_object(response);
        if (!params) {
          ep.format_failure(step, tool_id, response);
          history += "- " + tool_id + ": false_api_call_format\n";
          failed = true;
          break;
        }
        auto outcome = ep.call(env, step, tool_id, *params);
        if (!outcome.ok) {
          history += "- " + tool_id + ": " + std::string(to_string(outcome.failure)) + " - " + outcome.message + "\n";
          failed = true;
          break;
        }
        results.push_back({step, "", tool_id, outcome.output, outcome.produced, outcome.output});
      }
      if (!failed) break;

      if (ep.out_of_replans() || ep.out_of_time()) return ep.finish(Outcome::budget_exhausted, results);
      ++ep.trace().counters.replans;
      ep.trace().counters.discarded_results += results.size();
      results.clear();
      try {
        path = propose();
      } catch (const Error& e) {
        if (e.code() == ErrorCode::provider_error) throw;
        ep.emit({.kind = "replan", .status = "fail", .text = e.what()});
        return ep.finish(Outcome::failure, results);
      }
      ep.emit({.kind = "replan", .status = "ok", .text = path.to_text()});
      ep.emit({.kind = "restart", .step = 1, .restart = 1});
    }

    auto answer = trim(ep.ask_behavior(detail::final_answer_prompt(task, results)));
    ep.trace().answer = answer;
    ep.emit({.kind = "final", .status = answer.empty() ? "fail" : "ok", .text = answer});
    const bool solved = !answer.empty() && env.task_satisfied(task, results);
    return ep.finish(solved ? Outcome::success : Outcome::failure, results);
  } catch (const ProviderError& e) {
    ep.emit({.kind = "note", .status = "fail", .text = std::string("provider error: ") + e.what()});
    return ep.finish(Outcome::failure, results);
  }
}

enum class Judgement { a_wins, b_wins, tie };

inline std::string_view to_string(Judgement j) {
  switch (j) {
    case Judgement::a_wins: return "a_wins";
    case Judgement::b_wins: return "b_wins";
    case Judgement::tie: return "tie";
  }
  return "tie";
}

/// Deterministic stand-in for a judge model: a solved task beats an unsolved
/// one; between two solutions the cheaper wins.
inline Judgement oracle_judge(const Trace& a, const Trace& b) {
  if (a.task_id != b.task_id) {
    throw Error(ErrorCode::task_mismatch, "cannot compare " + a.task_id + " with " + b.task_id);
  }
  const bool sa = a.outcome == Outcome::success;
  const bool sb = b.outcome == Outcome::success;
  if (sa != sb) return sa ? Judgement::a_wins : Judgement::b_wins;
  if (!sa) return Judgement::tie;
  if (a.counters.cost_units != b.counters.cost_units) {
    return a.counters.cost_units < b.counters.cost_units ? Judgement::a_wins : Judgement::b_wins;
  }
  return Judgement::tie;
}

}  // namespace toolplanner
