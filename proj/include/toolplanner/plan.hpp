#pragma once

#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "toolplanner/error.hpp"
#include "toolplanner/util.hpp"

namespace toolplanner {

enum class PlanOrigin { initial, replanned };

inline std::string_view to_string(PlanOrigin o) { return o == PlanOrigin::initial ? "initial" : "replanned"; }

struct PlanStep {
  int index = 0;
  std::string toolkit;
  std::string goal;

  bool operator==(const PlanStep&) const = default;
};

/// Ordered toolkit steps 1..s.
struct Plan {
  std::vector<PlanStep> steps;
  std::string rationale;
  PlanOrigin origin = PlanOrigin::initial;

  std::size_t size() const noexcept { return steps.size(); }

  /// Toolkit at 1-based step l.
  const std::string& toolkit_at(int l) const { return steps.at(static_cast<std::size_t>(l - 1)).toolkit; }

  std::vector<std::string> toolkit_sequence() const {
    std::vector<std::string> out;
    for (const auto& s : steps) out.push_back(s.toolkit);
    return out;
  }

  /// The wire format providers are asked to produce.
  std::string to_text() const {
    std::string out;
    for (const auto& s : steps) {
      out += "Step " + std::to_string(s.index) + ": " + s.toolkit;
      if (!s.goal.empty()) out += " " + s.goal;
      out += "\n";
    }
    return out;
  }

  bool operator==(const Plan&) const = default;
};

/// Parses provider output. One step per line:
///
///   Step <n>: <toolkit> <goal>
///
/// The toolkit may be wrapped in angle brackets. "Step" is case-insensitive
/// and may be bolded. Other lines are kept as the rationale. Text without any
/// such line is read in the compact form "1:<toolkit> <goal> 2:<toolkit> ...".
/// Steps must be numbered 1..s in order.
inline Plan parse_plan(std::string_view text) {
  static const std::regex step_re(R"(^\s*[*#]*\s*step\s+(\d+)\s*[*]*\s*[:.)]\s*[*]*\s*<?([A-Za-z0-9_.\-]+)>?\s*(.*)$)",
                                  std::regex::icase);
  Plan plan;
  std::string rationale;
  for (const auto& raw : split_lines(text)) {
    std::smatch m;
    if (std::regex_match(raw, m, step_re)) {
      PlanStep step;
      try {
        step.index = std::stoi(m[1].str());
      } catch (const std::exception&) {
        throw Error(ErrorCode::plan_parse_error, "bad step number in '" + raw + "'");
      }
      step.toolkit = m[2].str();
      step.goal = trim(m[3].str());
      plan.steps.push_back(std::move(step));
    } else if (!trim(raw).empty()) {
      if (!rationale.empty()) rationale += "\n";
      rationale += trim(raw);
    }
  }
  if (plan.steps.empty()) {
    // Compact form on one or more lines: "1:geo find address 2:tracking".
    static const std::regex compact_re(R"((?:^|\s)(\d+)\s*:\s*<?([A-Za-z][A-Za-z0-9_.\-]*)>?)");
    const std::string all(text);
    std::vector<std::pair<std::smatch, std::size_t>> hits;
    for (auto it = std::sregex_iterator(all.begin(), all.end(), compact_re); it != std::sregex_iterator(); ++it) {
      hits.emplace_back(*it, static_cast<std::size_t>(it->position(0) + it->length(0)));
    }
    for (std::size_t i = 0; i < hits.size(); ++i) {
      const auto& m = hits[i].first;
      const auto goal_end = i + 1 < hits.size() ? static_cast<std::size_t>(hits[i + 1].first.position(0)) : all.size();
      if (m[1].length() > 6) throw Error(ErrorCode::plan_parse_error, "bad step number " + m[1].str());
      PlanStep step;
      step.index = std::stoi(m[1].str());
      step.toolkit = m[2].str();
      step.goal = trim(std::string_view(all).substr(hits[i].second, goal_end - hits[i].second));
      plan.steps.push_back(std::move(step));
    }
    if (!plan.steps.empty()) rationale.clear();
  }
  if (plan.steps.empty()) throw Error(ErrorCode::plan_parse_error, "no plan steps found");
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    if (plan.steps[i].index != static_cast<int>(i + 1)) {
      throw Error(ErrorCode::plan_parse_error, "step numbers must be 1.." + std::to_string(plan.steps.size()) +
                                                   " in order; got " + std::to_string(plan.steps[i].index) +
                                                   " at position " + std::to_string(i + 1));
    }
  }
  plan.rationale = std::move(rationale);
  return plan;
}

/// Every step must name one of `labels`.
inline void validate_plan(const Plan& plan, const std::set<std::string, std::less<>>& labels) {
  if (plan.steps.empty()) throw Error(ErrorCode::plan_parse_error, "empty plan");
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    if (plan.steps[i].index != static_cast<int>(i + 1)) {
      throw Error(ErrorCode::plan_parse_error, "non-contiguous step numbering");
    }
    if (!labels.count(plan.steps[i].toolkit)) {
      throw Error(ErrorCode::unknown_toolkit, "step " + std::to_string(i + 1) + " names '" + plan.steps[i].toolkit + "'");
    }
  }
}

}  // namespace toolplanner
