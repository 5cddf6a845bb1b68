#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace toolplanner {

enum class ErrorCode {
  parse_error,
  duplicate_tool_id,
  empty_docs,
  provider_error,
  partial_failure,
  dim_mismatch,
  non_finite_value,
  zero_vector,
  k_too_large,
  empty_set,
  missing_explanation,
  unassigned_point,
  missing_placeholder,
  plan_parse_error,
  unknown_toolkit,
  no_alternative_plan,
  budget_exceeded,
  config_error,
  task_mismatch,
  empty_input,
  unpaired_task,
  io_error,
  unknown_tool,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::duplicate_tool_id: return "DuplicateToolId";
    case ErrorCode::empty_docs: return "EmptyDocs";
    case ErrorCode::provider_error: return "ProviderError";
    case ErrorCode::partial_failure: return "PartialFailure";
    case ErrorCode::dim_mismatch: return "DimMismatch";
    case ErrorCode::non_finite_value: return "NonFiniteValue";
    case ErrorCode::zero_vector: return "ZeroVector";
    case ErrorCode::k_too_large: return "KTooLarge";
    case ErrorCode::empty_set: return "EmptySet";
    case ErrorCode::missing_explanation: return "MissingExplanation";
    case ErrorCode::unassigned_point: return "UnassignedPoint";
    case ErrorCode::missing_placeholder: return "MissingPlaceholder";
    case ErrorCode::plan_parse_error: return "PlanParseError";
    case ErrorCode::unknown_toolkit: return "UnknownToolkit";
    case ErrorCode::no_alternative_plan: return "NoAlternativePlan";
    case ErrorCode::budget_exceeded: return "BudgetExceeded";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::task_mismatch: return "TaskMismatch";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::unpaired_task: return "UnpairedTask";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::unknown_tool: return "UnknownTool";
  }
  return "Error";
}

/// Base exception for every failure raised by the library. The code is the
/// stable, testable part; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ProviderError : public Error {
 public:
  ProviderError(const std::string& message, int attempts = 1)
      : Error(ErrorCode::provider_error, message + " (attempts: " + std::to_string(attempts) + ")"),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Raised by batch operations that keep going after per-item failures.
class PartialFailure : public Error {
 public:
  explicit PartialFailure(std::vector<std::string> failed_ids)
      : Error(ErrorCode::partial_failure, join(failed_ids)), failed_ids_(std::move(failed_ids)) {}

  const std::vector<std::string>& failed_ids() const noexcept { return failed_ids_; }

 private:
  static std::string join(const std::vector<std::string>& ids) {
    std::string out = "failed:";
    for (const auto& id : ids) out += " " + id;
    return out;
  }

  std::vector<std::string> failed_ids_;
};

}  // namespace toolplanner
