#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "toolplanner/catalog.hpp"
#include "toolplanner/clustering.hpp"
#include "toolplanner/embedding.hpp"
#include "toolplanner/env.hpp"
#include "toolplanner/plan.hpp"
#include "toolplanner/planning.hpp"
#include "toolplanner/prompts.hpp"
#include "toolplanner/provider.hpp"
#include "toolplanner/trace.hpp"

namespace toolplanner {

struct Budget {
  std::uint64_t max_tool_calls = 64;
  std::uint64_t max_replans = 8;
  std::int64_t max_wall_ms = 300000;

  void validate() const {
    if (max_tool_calls == 0) throw Error(ErrorCode::config_error, "max_tool_calls must be positive");
    if (max_wall_ms <= 0) throw Error(ErrorCode::config_error, "max_wall_ms must be positive");
  }
};

inline nlohmann::ordered_json to_json(const Budget& b) {
  return {{"max_tool_calls", b.max_tool_calls}, {"max_replans", b.max_replans}, {"max_wall_ms", b.max_wall_ms}};
}

struct ExplorationState {
  Task task;
  std::vector<StepResult> results;
  int current_step = 1;
  Plan active_plan;
  ErrorLedger ledger;
  Budget budget;
};

struct ToolkitAttempt {
  enum class Status { success, exhausted, budget_exceeded };
  Status status = Status::exhausted;
  std::string tool_id;
  CallOutcome result;
};

/// 1 + the longest common prefix of the two plans' toolkit sequences, capped
/// at one past the end of the new plan.
inline int lca_restart(const Plan& old_plan, const Plan& new_plan) {
  std::size_t lcp = 0;
  while (lcp < old_plan.size() && lcp < new_plan.size() && old_plan.steps[lcp].toolkit == new_plan.steps[lcp].toolkit) {
    ++lcp;
  }
  return static_cast<int>(std::min(lcp + 1, new_plan.size() + 1));
}

/// Pulls the first JSON object out of a model response. Models often wrap
/// the object in prose or a code fence.
inline std::optional<nlohmann::json> extract_json_object(std::string_view text) {
  auto open = text.find('{');
  while (open != std::string_view::npos) {
    auto close = text.rfind('}');
    while (close != std::string_view::npos && close > open) {
      auto parsed = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
      if (!parsed.is_discarded() && parsed.is_object()) return parsed;
      close = text.rfind('}', close - 1);
    }
    open = text.find('{', open + 1);
  }
  return std::nullopt;
}

/// One episode of toolkit-level exploration. Holds the episode generator,
/// the trace under construction, and the exploration state.
class Explorer {
 public:
  Explorer(Task task, const std::vector<Toolkit>& toolkits, const ToolRegistry& registry, const ToolEnvironment& env,
           const ProviderRoles& roles, Budget budget, std::uint64_t seed, const EmbeddingSet* embeddings = nullptr,
           std::string method = "tool_planner")
      : toolkits_(toolkits),
        registry_(registry),
        env_(env),
        embeddings_(embeddings),
        ctx_(seed),
        started_(std::chrono::steady_clock::now()) {
    roles.validate();
    budget.validate();
    planning_ = std::make_shared<CountingProvider>(roles.planning_model);
    behavior_ = roles.planning_model == roles.behavior_model ? planning_
                                                              : std::make_shared<CountingProvider>(roles.behavior_model);
    roles_ = ProviderRoles{planning_, behavior_};
    state_.task = std::move(task);
    state_.budget = budget;
    trace_.method = std::move(method);
    trace_.task_id = state_.task.task_id;
    trace_.seed = seed;
    for (const auto& tk : toolkits_) by_label_[tk.label] = &tk;
  }

  ExplorationState& state() noexcept { return state_; }
  const Trace& trace() const noexcept { return trace_; }
  EpisodeContext& context() noexcept { return ctx_; }

  /// Tries the members of `toolkit` at the current step until one succeeds.
  ToolkitAttempt try_toolkit(const Toolkit& toolkit) {
    if (toolkit.members.empty()) throw Error(ErrorCode::config_error, "toolkit " + toolkit.label + " is empty");
    const int step = state_.current_step;
    const auto order = embeddings_ ? member_order(toolkit, *embeddings_) : toolkit.members;
    const int node = open_node(step, toolkit.label);
    emit({.kind = "visit", .step = step, .toolkit = toolkit.label});

    std::vector<std::string> failed;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (out_of_calls() || out_of_time()) return {ToolkitAttempt::Status::budget_exceeded, {}, {}};
      const auto& tool_id = order[i];
      const bool retry = i > 0;
      if (retry) ++counters().in_toolkit_retries;

      auto response = complete_with_retry(*behavior_, ChatRequest::user(param_prompt(toolkit, tool_id, failed),
                                                                         ctx_.rng.next_u64()),
                                          RetryPolicy::immediate());
      auto params = extract_json_object(response);
      if (!params) {
        record_failure(step, toolkit.label, tool_id, FailureKind::false_api_call_format,
                       "call parameters are not a JSON object");
        trace_.nodes[static_cast<std::size_t>(node)].attempts.emplace_back(tool_id, false);
        emit({.kind = "param_error",
              .step = step,
              .toolkit = toolkit.label,
              .tool = tool_id,
              .status = "fail",
              .failure = FailureKind::false_api_call_format,
              .text = trim(response),
              .retry = retry});
        failed.push_back(tool_id);
        continue;
      }

      ++counters().tool_calls;
      auto outcome = env_.invoke(tool_id, *params, ctx_);
      trace_.nodes[static_cast<std::size_t>(node)].attempts.emplace_back(tool_id, outcome.ok);
      if (!outcome.ok) {
        if (outcome.failure == FailureKind::api_hallucinated) ++counters().hallucinated_calls;
        record_failure(step, toolkit.label, tool_id, outcome.failure, outcome.message);
      }
      emit({.kind = "call",
            .step = step,
            .toolkit = toolkit.label,
            .tool = tool_id,
            .params_digest = digest(params->dump()),
            .status = outcome.ok ? "ok" : "fail",
            .failure = outcome.ok ? std::nullopt : std::optional<FailureKind>(outcome.failure),
            .text = outcome.ok ? outcome.output : outcome.message,
            .retry = retry});
      if (outcome.ok) return {ToolkitAttempt::Status::success, tool_id, std::move(outcome)};
      failed.push_back(tool_id);
    }
    return {ToolkitAttempt::Status::exhausted, {}, {}};
  }

  /// Produces x_l from a successful call and appends it to the results.
  const StepResult& synthesize_state(const Toolkit& toolkit, const std::string& tool_id, const CallOutcome& c) {
    if (!c.ok) throw Error(ErrorCode::config_error, "cannot synthesize a state from a failed call");
    auto text = complete_with_retry(*behavior_, ChatRequest::user(state_prompt(toolkit, tool_id, c), ctx_.rng.next_u64()),
                                    RetryPolicy::immediate());
    StepResult r{state_.current_step, toolkit.label, tool_id, c.output, c.produced, trim(text)};
    state_.results.push_back(std::move(r));
    emit({.kind = "state", .step = state_.current_step, .toolkit = toolkit.label, .tool = tool_id,
          .text = state_.results.back().state});
    ++state_.current_step;
    return state_.results.back();
  }

  /// Plans with the planning model, then explores.
  Trace run() {
    Plan plan;
    try {
      plan = make_plan(state_.task, offers_from(toolkits_), roles_, ctx_.rng.next_u64());
    } catch (const Error& e) {
      emit({.kind = "note", .status = "fail", .text = std::string("planning failed: ") + e.what()});
      return finish(Outcome::failure);
    }
    return explore(plan);
  }

  /// Walks `plan` step by step, retrying within toolkits and replanning
  /// across them when a toolkit is exhausted.
  Trace explore(const Plan& plan) {
    std::set<std::string, std::less<>> labels;
    for (const auto& tk : toolkits_) labels.insert(tk.label);
    validate_plan(plan, labels);
    state_.active_plan = plan;
    state_.current_step = 1;
    emit({.kind = "plan", .status = "ok", .text = plan.to_text()});

    std::vector<StepExclusion> exclusions;
    const auto offers = offers_from(toolkits_);
    try {
      while (static_cast<std::size_t>(state_.current_step) <= state_.active_plan.size()) {
        const int l = state_.current_step;
        const Toolkit& tk = *by_label_.at(state_.active_plan.toolkit_at(l));
        auto attempt = try_toolkit(tk);
        if (attempt.status == ToolkitAttempt::Status::budget_exceeded) return finish(Outcome::budget_exhausted);
        if (attempt.status == ToolkitAttempt::Status::success) {
          synthesize_state(tk, attempt.tool_id, attempt.result);
          continue;
        }

        // Toolkit exhausted: drop it from this step and plan again.
        const Plan old_plan = state_.active_plan;
        state_.ledger.add_exhausted_plan(old_plan);
        exclusions.push_back({l, tk.label});
        if (counters().replans >= state_.budget.max_replans || out_of_time()) return finish(Outcome::budget_exhausted);
        ++counters().replans;
        Plan next;
        try {
          next = replan(state_.task, state_.ledger.exhausted_plans(), state_.ledger, exclusions, offers, roles_,
                        ctx_.rng.next_u64());
        } catch (const Error& e) {
          if (e.code() == ErrorCode::provider_error) throw;
          emit({.kind = "replan", .step = l, .toolkit = tk.label, .status = "fail", .text = e.what()});
          return finish(Outcome::failure);
        }
        emit({.kind = "replan", .step = l, .toolkit = tk.label, .status = "ok", .text = next.to_text()});

        const int restart = lca_restart(old_plan, next);
        if (static_cast<std::size_t>(restart) > next.size()) flag("restart_beyond_new_plan");
        const auto keep = static_cast<std::size_t>(restart - 1);
        if (state_.results.size() > keep) {
          counters().discarded_results += state_.results.size() - keep;
          state_.results.resize(keep);
        }
        std::vector<std::string> retained;
        for (const auto& r : state_.results) retained.push_back(digest(r.state));
        state_.active_plan = std::move(next);
        state_.current_step = restart;
        emit({.kind = "restart", .step = restart, .restart = restart, .retained = std::move(retained)});
      }

      auto answer = trim(complete_with_retry(*behavior_, ChatRequest::user(final_prompt(), ctx_.rng.next_u64()),
                                             RetryPolicy::immediate()));
      trace_.answer = answer;
      emit({.kind = "final", .status = answer.empty() ? "fail" : "ok", .text = answer});
      const bool solved = !answer.empty() && env_.task_satisfied(state_.task, state_.results);
      return finish(solved ? Outcome::success : Outcome::failure);
    } catch (const ProviderError& e) {
      emit({.kind = "note", .status = "fail", .text = std::string("provider error: ") + e.what()});
      return finish(Outcome::failure);
    }
  }

 private:
  Counters& counters() { return trace_.counters; }

  bool out_of_calls() const { return trace_.counters.tool_calls >= state_.budget.max_tool_calls; }

  bool out_of_time() const {
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started_);
    return elapsed.count() >= state_.budget.max_wall_ms;
  }

  void flag(const std::string& f) {
    if (std::find(trace_.flags.begin(), trace_.flags.end(), f) == trace_.flags.end()) trace_.flags.push_back(f);
  }

  void record_failure(int step, const std::string& toolkit, const std::string& tool, FailureKind kind,
                      std::string message) {
    state_.ledger.append({step, toolkit, tool, kind, std::move(message)});
  }

  void sync_counters() {
    auto& c = trace_.counters;
    c.provider_calls = planning_->calls() + (behavior_ == planning_ ? 0 : behavior_->calls());
    c.cost_units = ctx_.cost_units + c.provider_calls;
    c.ledger = state_.ledger.size();
  }

  void emit(TraceEvent e) {
    sync_counters();
    e.counters = trace_.counters;
    trace_.events.push_back(std::move(e));
  }

  int open_node(int step, const std::string& label) {
    const int id = static_cast<int>(trace_.nodes.size());
    path_.resize(static_cast<std::size_t>(step - 1), -1);
    const int parent = step > 1 ? path_[static_cast<std::size_t>(step - 2)] : -1;
    trace_.nodes.push_back({id, parent, step, label, {}});
    path_.push_back(id);
    return id;
  }

  Trace finish(Outcome outcome) {
    if (outcome != Outcome::success && outcome != Outcome::budget_exhausted && state_.ledger.tool_failures() == 0) {
      state_.ledger.append({state_.current_step, "", "", FailureKind::decision_failure,
                            "episode failed without any tool failure"});
      emit({.kind = "note", .step = state_.current_step, .status = "fail", .failure = FailureKind::decision_failure});
    }
    sync_counters();
    trace_.outcome = outcome;
    trace_.results = state_.results;
    trace_.ledger = state_.ledger;
    return trace_;
  }

  std::string previous_state() const {
    return state_.results.empty() ? state_.task.query : state_.results.back().state;
  }

  std::string param_prompt(const Toolkit& toolkit, const std::string& tool_id,
                           const std::vector<std::string>& failed) const {
    std::string out(prompt_template(PromptName::plan_exploration).text);
    if (!failed.empty()) {
      out += "\n\n" + render_prompt(prompt_template(PromptName::in_toolkit_error), {{"previous API", join(failed, ", ")}});
    }
    const auto& step = state_.active_plan.steps.at(static_cast<std::size_t>(state_.current_step - 1));
    out += "\n\nHere is the user's question: " + state_.task.query;
    out += "\nStep " + std::to_string(state_.current_step) + " of " + std::to_string(state_.active_plan.size()) +
           ", goal: " + step.goal;
    out += "\nToolkit " + toolkit.label + ": " + toolkit.functionality;
    out += "\nAPI: " + tool_id;
    out += "\nDocumentation: " + (registry_.contains(tool_id) ? registry_.get(tool_id).docs : std::string{});
    out += "\nPrevious state: " + previous_state();
    out += "\nRespond with the call parameters as a JSON object.";
    return out;
  }

  std::string state_prompt(const Toolkit& toolkit, const std::string& tool_id, const CallOutcome& c) const {
    std::string toolkits, states, results;
    for (const auto& r : state_.results) {
      auto it = by_label_.find(r.toolkit);
      toolkits += "- " + r.toolkit + ": " + (it != by_label_.end() ? it->second->functionality : std::string{}) + "\n";
      states += "- " + r.state + "\n";
      results += "- " + r.output + "\n";
    }
    toolkits += "- " + toolkit.label + ": " + toolkit.functionality + "\n";
    return render_prompt(prompt_template(PromptName::intermediate_state),
                         {{"user query", state_.task.query},
                          {"toolkits", toolkits},
                          {"states", states.empty() ? "(none)\n" : states},
                          {"results", results.empty() ? "(none)\n" : results},
                          {"api name", tool_id},
                          {"documentation", registry_.contains(tool_id) ? registry_.get(tool_id).docs : ""},
                          {"result", c.output}});
  }

  std::string final_prompt() const {
    std::string out(prompt_template(PromptName::final_output).text);
    out += "\n\nHere is the user's question: " + state_.task.query + "\nIntermediate states:\n";
    for (const auto& r : state_.results) out += "- " + r.state + "\n";
    return out;
  }

  const std::vector<Toolkit>& toolkits_;
  const ToolRegistry& registry_;
  const ToolEnvironment& env_;
  const EmbeddingSet* embeddings_;
  std::map<std::string, const Toolkit*, std::less<>> by_label_;
  std::shared_ptr<CountingProvider> planning_;
  std::shared_ptr<CountingProvider> behavior_;
  ProviderRoles roles_;
  EpisodeContext ctx_;
  std::chrono::steady_clock::time_point started_;
  ExplorationState state_;
  Trace trace_;
  std::vector<int> path_;
};

/// Runs the exploration search over a given plan.
inline Trace explore(const Task& task, const Plan& plan, const std::vector<Toolkit>& toolkits,
                     const ToolRegistry& registry, const ToolEnvironment& env, const ProviderRoles& roles,
                     const Budget& budget, std::uint64_t seed, const EmbeddingSet* embeddings = nullptr) {
  Explorer explorer(task, toolkits, registry, env, roles, budget, seed, embeddings);
  return explorer.explore(plan);
}

/// Plans and explores a task end to end.
inline Trace solve_task(const Task& task, const std::vector<Toolkit>& toolkits, const ToolRegistry& registry,
                        const ToolEnvironment& env, const ProviderRoles& roles, const Budget& budget,
                        std::uint64_t seed, const EmbeddingSet* embeddings = nullptr) {
  Explorer explorer(task, toolkits, registry, env, roles, budget, seed, embeddings);
  return explorer.run();
}

}  // namespace toolplanner
