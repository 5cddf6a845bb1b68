#pragma once

#include <chrono>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>

#include "toolplanner/catalog.hpp"
#include "toolplanner/embedding.hpp"
#include "toolplanner/provider.hpp"

namespace toolplanner {

inline std::optional<std::string> env_value(const std::string& name) {
  if (name.empty()) return std::nullopt;
  const char* v = std::getenv(name.c_str());
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

/// Replaces every occurrence of `secret` with "***".
inline std::string redact(std::string text, const std::optional<std::string>& secret) {
  if (!secret || secret->empty()) return text;
  for (auto pos = text.find(*secret); pos != std::string::npos; pos = text.find(*secret, pos + 3)) {
    text.replace(pos, secret->size(), "***");
  }
  return text;
}

namespace detail {

inline httplib::Client make_client(const std::string& base_url, std::chrono::milliseconds timeout) {
  httplib::Client client(base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  return client;
}

inline httplib::Headers auth_headers(const std::optional<std::string>& key) {
  httplib::Headers h;
  if (key) h.emplace("Authorization", "Bearer " + *key);
  return h;
}

inline std::string snippet(const std::string& body) { return body.size() > 200 ? body.substr(0, 200) + "..." : body; }

}  // namespace detail

/// OpenAI-compatible chat completion endpoint.
class RemoteChatProvider : public PlannerProvider {
 public:
  explicit RemoteChatProvider(ProviderConfig config) : config_(std::move(config)), key_(env_value(config_.api_key_env)) {
    config_.validate();
  }
  RemoteChatProvider(ProviderConfig config, std::optional<std::string> api_key)
      : config_(std::move(config)), key_(std::move(api_key)) {
    config_.validate();
  }

  std::string complete(const ChatRequest& request) override {
    nlohmann::ordered_json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    body["max_tokens"] = config_.max_tokens;
    auto messages = nlohmann::ordered_json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = std::move(messages);
    if (request.seed) body["seed"] = *request.seed;

    auto client = detail::make_client(config_.base_url, config_.timeout);
    auto res = client.Post(config_.path, detail::auth_headers(key_), body.dump(), "application/json");
    if (!res) throw ProviderError(redact("request to " + describe() + " failed: " + httplib::to_string(res.error()), key_));
    if (res->status != 200) {
      throw ProviderError(redact("HTTP " + std::to_string(res->status) + " from " + describe() + ": " +
                                     detail::snippet(res->body),
                                 key_));
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
      throw ProviderError("malformed completion from " + describe());
    }
    const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
    if (!msg.contains("content") || !msg["content"].is_string()) {
      throw ProviderError("completion from " + describe() + " has no text content");
    }
    return msg["content"].get<std::string>();
  }

  ProviderKind kind() const override { return ProviderKind::remote_chat; }
  std::string tag() const override { return "remote:" + config_.model; }

  /// Endpoint summary safe for logs: the key is never included.
  std::string describe() const {
    return config_.base_url + config_.path + " (model " + config_.model + ", key " + (key_ ? "***" : "none") + ")";
  }

  const ProviderConfig& config() const noexcept { return config_; }

 private:
  ProviderConfig config_;
  std::optional<std::string> key_;
};

/// Remote sentence encoder: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
struct EncoderConfig {
  std::string base_url = "http://127.0.0.1:8001";
  std::string path = "/embed";
  std::chrono::milliseconds timeout{60000};
  std::string api_key_env = "TOOLPLANNER_API_KEY";
  std::size_t batch_size = 32;
  std::string provider_tag = "remote";
};

/// Embeds every tool's explanation; unexplained tools are a MissingExplanation.
inline EmbeddingSet embed_remote(const ToolRegistry& registry, const EncoderConfig& config) {
  if (config.batch_size == 0) throw Error(ErrorCode::config_error, "batch_size must be positive");
  const auto key = env_value(config.api_key_env);
  const auto tools = registry.tools();
  EmbeddingSet out(0, config.provider_tag);
  for (std::size_t start = 0; start < tools.size(); start += config.batch_size) {
    const auto end = std::min(tools.size(), start + config.batch_size);
    nlohmann::json texts = nlohmann::json::array();
    for (auto i = start; i < end; ++i) texts.push_back(embedding_text(tools[i]));
    auto client = detail::make_client(config.base_url, config.timeout);
    auto res = client.Post(config.path, detail::auth_headers(key), nlohmann::json{{"texts", texts}}.dump(),
                           "application/json");
    if (!res) throw ProviderError(redact("encoder request failed: " + httplib::to_string(res.error()), key));
    if (res->status != 200) {
      throw ProviderError(redact("encoder returned HTTP " + std::to_string(res->status) + ": " +
                                     detail::snippet(res->body),
                                 key));
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("vectors") || !j["vectors"].is_array()) {
      throw ProviderError("malformed encoder response");
    }
    if (j["vectors"].size() != end - start) {
      throw ProviderError("encoder returned " + std::to_string(j["vectors"].size()) + " vectors for " +
                          std::to_string(end - start) + " texts");
    }
    for (auto i = start; i < end; ++i) {
      try {
        out.add(tools[i].tool_id, EmbeddingVector(j["vectors"][i - start].get<std::vector<double>>()));
      } catch (const nlohmann::json::exception&) {
        throw ProviderError("encoder vector for " + tools[i].tool_id + " is not a list of numbers");
      }
    }
  }
  return out;
}

}  // namespace toolplanner
