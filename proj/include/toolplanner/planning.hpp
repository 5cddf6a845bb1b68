#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolplanner/clustering.hpp"
#include "toolplanner/env.hpp"
#include "toolplanner/plan.hpp"
#include "toolplanner/prompts.hpp"
#include "toolplanner/provider.hpp"

namespace toolplanner {

/// A toolkit as offered to the planner: its label and functionality text.
struct ToolkitOffer {
  std::string label;
  std::string functionality;
};

inline std::vector<ToolkitOffer> offers_from(const std::vector<Toolkit>& toolkits) {
  std::vector<ToolkitOffer> out;
  for (const auto& tk : toolkits) out.push_back({tk.label, tk.functionality});
  return out;
}

/// Toolkit `toolkit` may not be used at 1-based step `step`.
struct StepExclusion {
  int step = 0;
  std::string toolkit;

  auto operator<=>(const StepExclusion&) const = default;
};

/// Regeneration attempts after a replan that violates an exclusion.
inline constexpr int replan_regenerations = 2;

inline constexpr std::string_view plan_format_instruction =
    "Respond with the plan only, one step per line, in the form `Step <n>: <toolkit> <goal>`.";

inline std::string toolkit_block(const std::vector<ToolkitOffer>& offers) {
  std::string out = "Toolkits:\n";
  for (const auto& o : offers) out += "- " + o.label + ": " + o.functionality + "\n";
  return out;
}

inline std::string plan_making_prompt(const Task& task, const std::vector<ToolkitOffer>& offers) {
  return render_prompt(prompt_template(PromptName::plan_making), {{"user query", task.query}}) + "\n\n" +
         toolkit_block(offers) + std::string(plan_format_instruction);
}

inline std::string replan_prompt(const Task& task, const std::vector<Plan>& prior_plans, const ErrorLedger& errors,
                                 const std::vector<StepExclusion>& exclusions,
                                 const std::vector<ToolkitOffer>& offers) {
  std::string out = render_prompt(prompt_template(PromptName::cross_toolkit_error),
                                  {{"previous API, previous toolkit", errors.serialize()}});
  out += "\n\nHere is the user's question: " + task.query + "\n";
  for (std::size_t i = 0; i < prior_plans.size(); ++i) {
    out += "Previous plan " + std::to_string(i + 1) + ":\n" + prior_plans[i].to_text();
  }
  out += "Excluded toolkits:\n";
  for (const auto& e : exclusions) out += "- step " + std::to_string(e.step) + ": " + e.toolkit + "\n";
  out += toolkit_block(offers) + std::string(plan_format_instruction);
  return out;
}

inline std::set<std::string, std::less<>> offered_labels(const std::vector<ToolkitOffer>& offers) {
  std::set<std::string, std::less<>> labels;
  for (const auto& o : offers) labels.insert(o.label);
  return labels;
}

/// Asks the planning model for a toolkit-level plan and validates it.
inline Plan make_plan(const Task& task, const std::vector<ToolkitOffer>& offers, const ProviderRoles& roles,
                      std::optional<std::uint64_t> seed = std::nullopt,
                      const RetryPolicy& policy = RetryPolicy::immediate()) {
  if (trim(task.query).empty()) throw Error(ErrorCode::config_error, "task must be non-empty");
  if (offers.empty()) throw Error(ErrorCode::config_error, "no toolkits offered");
  roles.validate();
  auto response =
      complete_with_retry(*roles.planning_model, ChatRequest::user(plan_making_prompt(task, offers), seed), policy);
  auto plan = parse_plan(response);
  validate_plan(plan, offered_labels(offers));
  plan.origin = PlanOrigin::initial;
  return plan;
}

inline bool violates(const Plan& plan, const std::vector<StepExclusion>& exclusions) {
  for (const auto& e : exclusions) {
    if (e.step >= 1 && static_cast<std::size_t>(e.step) <= plan.size() && plan.toolkit_at(e.step) == e.toolkit) {
      return true;
    }
  }
  return false;
}

/// Generates a new plan after the toolkit at an exhausted node failed. The
/// result never assigns an excluded toolkit to the step it is excluded from;
/// a model that keeps doing so yields NoAlternativePlan.
inline Plan replan(const Task& task, const std::vector<Plan>& prior_plans, const ErrorLedger& errors,
                   const std::vector<StepExclusion>& exclusions, const std::vector<ToolkitOffer>& offers,
                   const ProviderRoles& roles, std::optional<std::uint64_t> seed = std::nullopt,
                   const RetryPolicy& policy = RetryPolicy::immediate()) {
  if (exclusions.empty()) throw Error(ErrorCode::config_error, "replan needs an excluded node");
  if (errors.empty()) throw Error(ErrorCode::config_error, "replan needs a non-empty error ledger");
  roles.validate();
  const auto labels = offered_labels(offers);
  std::string prompt = replan_prompt(task, prior_plans, errors, exclusions, offers);
  for (int attempt = 0; attempt <= replan_regenerations; ++attempt) {
    std::optional<std::uint64_t> attempt_seed;
    if (seed) attempt_seed = attempt == 0 ? *seed : derive_seed(*seed, static_cast<std::uint64_t>(attempt));
    auto response = complete_with_retry(*roles.planning_model, ChatRequest::user(prompt, attempt_seed), policy);
    auto plan = parse_plan(response);
    validate_plan(plan, labels);
    if (!violates(plan, exclusions)) {
      plan.origin = PlanOrigin::replanned;
      return plan;
    }
    prompt += "\nThe previous answer reused an excluded toolkit. Choose a different toolkit for that step.";
  }
  throw Error(ErrorCode::no_alternative_plan,
              "planner kept choosing an excluded toolkit after " + std::to_string(replan_regenerations) +
                  " regenerations");
}

/// Counts calls to a wrapped provider; used for per-episode cost accounting.
class CountingProvider : public PlannerProvider {
 public:
  explicit CountingProvider(std::shared_ptr<PlannerProvider> inner) : inner_(std::move(inner)) {}

  std::string complete(const ChatRequest& request) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->complete(request);
  }
  ProviderKind kind() const override { return inner_->kind(); }
  std::string tag() const override { return inner_->tag(); }

  std::uint64_t calls() const noexcept { return calls_.load(std::memory_order_relaxed); }

 private:
  std::shared_ptr<PlannerProvider> inner_;
  std::atomic<std::uint64_t> calls_{0};
};

}  // namespace toolplanner
