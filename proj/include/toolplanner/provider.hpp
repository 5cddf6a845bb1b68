#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "toolplanner/error.hpp"

namespace toolplanner {

struct ChatMessage {
  std::string role;
  std::string content;
};

/// One completion request. `seed` mirrors the OpenAI sampling seed: scripted
/// and simulated providers use it for any stochastic choice, so all randomness
/// in an episode flows from the episode generator.
struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::optional<std::uint64_t> seed;

  static ChatRequest user(std::string content, std::optional<std::uint64_t> seed = std::nullopt) {
    return ChatRequest{{ChatMessage{"user", std::move(content)}}, seed};
  }

  /// Concatenated message contents; what scripted rules match against.
  std::string text() const {
    std::string out;
    for (const auto& m : messages) {
      if (!out.empty()) out += "\n";
      out += m.content;
    }
    return out;
  }
};

enum class ProviderKind { remote_chat, scripted };

/// The model behind planning, parameter generation and state synthesis.
/// Implementations must tolerate concurrent calls.
class PlannerProvider {
 public:
  virtual ~PlannerProvider() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual ProviderKind kind() const = 0;
  virtual std::string tag() const = 0;
};

/// Endpoint configuration shared by the remote chat provider and the CLI.
struct ProviderConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4";
  double temperature = 0.3;
  int max_tokens = 1024;
  std::chrono::milliseconds timeout{60000};
  std::string api_key_env = "TOOLPLANNER_API_KEY";

  void validate() const {
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
      throw Error(ErrorCode::config_error, "temperature must lie in [0, 2]");
    }
    if (max_tokens <= 0) throw Error(ErrorCode::config_error, "max_tokens must be positive");
  }
};

/// Table-driven provider: the first rule whose pattern occurs in the request
/// text answers it. A request no rule matches is a ProviderError.
class ScriptedProvider : public PlannerProvider {
 public:
  using Responder = std::function<std::string(const ChatRequest&)>;

  struct Rule {
    std::string pattern;
    Responder respond;
  };

  explicit ScriptedProvider(std::string name = "scripted") : name_(std::move(name)) {}

  ScriptedProvider& on(std::string pattern, std::string response) {
    return on(std::move(pattern), [response = std::move(response)](const ChatRequest&) { return response; });
  }

  ScriptedProvider& on(std::string pattern, Responder respond) {
    std::lock_guard lock(mu_);
    rules_.push_back(Rule{std::move(pattern), std::move(respond)});
    return *this;
  }

  std::string complete(const ChatRequest& request) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    const std::string text = request.text();
    Responder match;
    {
      std::lock_guard lock(mu_);
      for (const auto& rule : rules_) {
        if (text.find(rule.pattern) != std::string::npos) {
          match = rule.respond;
          break;
        }
      }
    }
    if (!match) throw ProviderError("no scripted response for request");
    return match(request);
  }

  ProviderKind kind() const override { return ProviderKind::scripted; }
  std::string tag() const override { return name_; }

  std::size_t call_count() const noexcept { return calls_.load(std::memory_order_relaxed); }

 private:
  std::string name_;
  std::mutex mu_;
  std::vector<Rule> rules_;
  std::atomic<std::size_t> calls_{0};
};

/// Planning model: plans, replans, toolkit descriptions, explanations.
/// Behavior model: call parameters, intermediate states, final answers.
struct ProviderRoles {
  std::shared_ptr<PlannerProvider> planning_model;
  std::shared_ptr<PlannerProvider> behavior_model;

  static ProviderRoles same(std::shared_ptr<PlannerProvider> p) { return ProviderRoles{p, p}; }

  void validate() const {
    if (!planning_model || !behavior_model) {
      throw Error(ErrorCode::config_error, "both planning and behavior models must be configured");
    }
  }
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };

  static RetryPolicy immediate(int attempts = 3) {
    RetryPolicy p;
    p.max_attempts = attempts;
    p.initial_backoff = std::chrono::milliseconds{0};
    p.sleep = [](std::chrono::milliseconds) {};
    return p;
  }
};

/// Calls the provider, retrying ProviderErrors with exponential backoff. The
/// final error reports how many attempts were made.
inline std::string complete_with_retry(PlannerProvider& provider, const ChatRequest& request,
                                       const RetryPolicy& policy) {
  auto backoff = policy.initial_backoff;
  std::string last;
  const int attempts = policy.max_attempts < 1 ? 1 : policy.max_attempts;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    try {
      return provider.complete(request);
    } catch (const ProviderError& e) {
      last = e.what();
    }
    if (attempt < attempts) {
      if (backoff.count() > 0 && policy.sleep) policy.sleep(backoff);
      backoff = std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(backoff.count()) * policy.multiplier));
    }
  }
  throw ProviderError(provider.tag() + " failed: " + last, attempts);
}

}  // namespace toolplanner
