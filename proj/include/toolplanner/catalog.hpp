#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "toolplanner/error.hpp"
#include "toolplanner/prompts.hpp"
#include "toolplanner/provider.hpp"
#include "toolplanner/util.hpp"

namespace toolplanner {

struct ParamSpec {
  std::string name;
  std::string kind;
  bool required = false;

  bool operator==(const ParamSpec&) const = default;
};

/// One API. `docs` is its documentation, `description` the short catalog
/// description, `explanation` the generated functionality summary.
struct ToolDescriptor {
  std::string tool_id;
  std::string name;
  std::string docs;
  std::string description;
  std::vector<ParamSpec> params;
  std::optional<std::string> source_category;
  std::optional<std::string> explanation;

  bool operator==(const ToolDescriptor&) const = default;
};

/// Tools keyed (and therefore iterated) by tool_id. Explanations may be
/// attached concurrently; everything else is fixed after ingestion.
class ToolRegistry {
 public:
  ToolRegistry() = default;
  explicit ToolRegistry(std::string version) : version_(std::move(version)) {}

  ToolRegistry(const ToolRegistry& other) {
    std::shared_lock lock(other.mu_);
    tools_ = other.tools_;
    version_ = other.version_;
  }
  ToolRegistry& operator=(const ToolRegistry& other) {
    if (this != &other) {
      ToolRegistry copy(other);
      std::unique_lock lock(mu_);
      tools_ = std::move(copy.tools_);
      version_ = std::move(copy.version_);
    }
    return *this;
  }
  ToolRegistry(ToolRegistry&& other) noexcept : tools_(std::move(other.tools_)), version_(std::move(other.version_)) {}
  ToolRegistry& operator=(ToolRegistry&& other) noexcept {
    tools_ = std::move(other.tools_);
    version_ = std::move(other.version_);
    return *this;
  }

  void add(ToolDescriptor tool) {
    std::unique_lock lock(mu_);
    if (tool.tool_id.empty()) throw Error(ErrorCode::parse_error, "tool_id must be non-empty");
    if (tools_.count(tool.tool_id)) throw Error(ErrorCode::duplicate_tool_id, tool.tool_id);
    if (tool.explanation && tool.explanation->empty()) tool.explanation.reset();
    auto id = tool.tool_id;
    tools_.emplace(std::move(id), std::move(tool));
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return tools_.size();
  }
  bool empty() const { return size() == 0; }

  bool contains(const std::string& id) const {
    std::shared_lock lock(mu_);
    return tools_.count(id) != 0;
  }

  ToolDescriptor get(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = tools_.find(id);
    if (it == tools_.end()) throw Error(ErrorCode::unknown_tool, id);
    return it->second;
  }

  std::optional<std::string> explanation(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = tools_.find(id);
    if (it == tools_.end()) throw Error(ErrorCode::unknown_tool, id);
    return it->second.explanation;
  }

  void set_explanation(const std::string& id, std::string text) {
    if (text.empty()) throw Error(ErrorCode::provider_error, "empty explanation for " + id);
    std::unique_lock lock(mu_);
    auto it = tools_.find(id);
    if (it == tools_.end()) throw Error(ErrorCode::unknown_tool, id);
    it->second.explanation = std::move(text);
  }

  std::vector<std::string> ids() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    out.reserve(tools_.size());
    for (const auto& [id, _] : tools_) out.push_back(id);
    return out;
  }

  /// Snapshot of all descriptors in tool_id order.
  std::vector<ToolDescriptor> tools() const {
    std::shared_lock lock(mu_);
    std::vector<ToolDescriptor> out;
    out.reserve(tools_.size());
    for (const auto& [_, t] : tools_) out.push_back(t);
    return out;
  }

  const std::string& version() const noexcept { return version_; }
  void set_version(std::string v) { version_ = std::move(v); }

  bool operator==(const ToolRegistry& other) const {
    return version_ == other.version_ && tools() == other.tools();
  }

 private:
  std::map<std::string, ToolDescriptor> tools_;
  std::string version_ = "1";
  mutable std::shared_mutex mu_;
};

// ---------------------------------------------------------------------------
// Catalog files
// ---------------------------------------------------------------------------

/// `flat`: JSON array of {tool_id, name, docs, description,
/// params[{name,kind,required}], category?, explanation?}.
/// `toolbench`: JSON array of ToolBench-style tools, each with an api_list;
/// every API becomes one tool named "<tool_name>.<api name>".
enum class CatalogFormat { flat, toolbench };

inline CatalogFormat parse_catalog_format(std::string_view tag) {
  if (tag == "flat" || tag == "json") return CatalogFormat::flat;
  if (tag == "toolbench") return CatalogFormat::toolbench;
  throw Error(ErrorCode::config_error, "unknown catalog format '" + std::string(tag) + "'");
}

namespace detail {

inline std::string require_string(const nlohmann::json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw Error(ErrorCode::parse_error, where + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

inline ToolDescriptor flat_tool_from_json(const nlohmann::json& j, std::size_t index) {
  const std::string where = "entry " + std::to_string(index);
  if (!j.is_object()) throw Error(ErrorCode::parse_error, where + ": expected an object");
  ToolDescriptor t;
  t.tool_id = require_string(j, "tool_id", where);
  t.name = require_string(j, "name", where);
  t.docs = require_string(j, "docs", where);
  t.description = require_string(j, "description", where);
  auto params = j.find("params");
  if (params == j.end() || !params->is_array()) {
    throw Error(ErrorCode::parse_error, where + ": missing array field 'params'");
  }
  for (const auto& p : *params) {
    if (!p.is_object() || !p.contains("required") || !p["required"].is_boolean()) {
      throw Error(ErrorCode::parse_error, where + ": malformed param");
    }
    t.params.push_back({require_string(p, "name", where), require_string(p, "kind", where), p["required"].get<bool>()});
  }
  if (auto c = j.find("category"); c != j.end() && !c->is_null()) {
    if (!c->is_string()) throw Error(ErrorCode::parse_error, where + ": category must be a string");
    t.source_category = c->get<std::string>();
  }
  if (auto e = j.find("explanation"); e != j.end() && !e->is_null()) {
    if (!e->is_string()) throw Error(ErrorCode::parse_error, where + ": explanation must be a string");
    if (!e->get<std::string>().empty()) t.explanation = e->get<std::string>();
  }
  return t;
}

inline void toolbench_tools_from_json(const nlohmann::json& j, std::size_t index, ToolRegistry& out) {
  const std::string where = "tool " + std::to_string(index);
  if (!j.is_object()) throw Error(ErrorCode::parse_error, where + ": expected an object");
  const auto tool_name = require_string(j, "tool_name", where);
  std::optional<std::string> category;
  if (auto c = j.find("category_name"); c != j.end() && c->is_string()) category = c->get<std::string>();
  auto apis = j.find("api_list");
  if (apis == j.end() || !apis->is_array()) throw Error(ErrorCode::parse_error, where + ": missing api_list");
  for (const auto& api : *apis) {
    ToolDescriptor t;
    t.name = require_string(api, "name", where);
    t.tool_id = tool_name + "." + t.name;
    t.description = api.value("description", std::string{});
    t.docs = api.dump();
    t.source_category = category;
    for (const char* key : {"required_parameters", "optional_parameters"}) {
      if (auto ps = api.find(key); ps != api.end() && ps->is_array()) {
        for (const auto& p : *ps) {
          t.params.push_back({require_string(p, "name", where), p.value("type", std::string{"STRING"}),
                              std::string_view(key) == "required_parameters"});
        }
      }
    }
    out.add(std::move(t));
  }
}

}  // namespace detail

inline ToolRegistry parse_catalog(std::string_view text, CatalogFormat format) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
  nlohmann::json entries = doc;
  ToolRegistry registry;
  if (doc.is_object() && doc.contains("tools")) {
    entries = doc["tools"];
    if (doc.contains("version") && doc["version"].is_string()) registry.set_version(doc["version"].get<std::string>());
  }
  if (!entries.is_array()) throw Error(ErrorCode::parse_error, "catalog must be a JSON array");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (format == CatalogFormat::flat) {
      registry.add(detail::flat_tool_from_json(entries[i], i));
    } else {
      detail::toolbench_tools_from_json(entries[i], i, registry);
    }
  }
  return registry;
}

inline ToolRegistry ingest_catalog(const std::filesystem::path& path, CatalogFormat format = CatalogFormat::flat) {
  return parse_catalog(read_file(path), format);
}

inline nlohmann::ordered_json tool_to_json(const ToolDescriptor& t) {
  nlohmann::ordered_json j;
  j["tool_id"] = t.tool_id;
  j["name"] = t.name;
  j["docs"] = t.docs;
  j["description"] = t.description;
  j["params"] = nlohmann::ordered_json::array();
  for (const auto& p : t.params) {
    j["params"].push_back({{"name", p.name}, {"kind", p.kind}, {"required", p.required}});
  }
  if (t.source_category) j["category"] = *t.source_category;
  if (t.explanation) j["explanation"] = *t.explanation;
  return j;
}

/// Registry persistence uses the flat catalog schema plus `explanation`.
inline std::string serialize_registry(const ToolRegistry& registry) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : registry.tools()) arr.push_back(tool_to_json(t));
  return arr.dump(2) + "\n";
}

inline void save_registry(const ToolRegistry& registry, const std::filesystem::path& path) {
  write_file(path, serialize_registry(registry));
}

// ---------------------------------------------------------------------------
// Explanations
// ---------------------------------------------------------------------------

inline std::string explanation_prompt(const ToolDescriptor& tool) {
  return render_prompt(prompt_template(PromptName::tool_explanation),
                       {{"api name", tool.name}, {"documentation", tool.docs}, {"description", tool.description}});
}

/// Generates and stores the tool's explanation. Cached: a tool that already
/// has one is returned without calling the provider.
inline const std::string& explain_tool(ToolDescriptor& tool, PlannerProvider& provider,
                                       const RetryPolicy& policy = {}) {
  if (tool.explanation) return *tool.explanation;
  if (trim(tool.docs).empty() || trim(tool.description).empty()) {
    throw Error(ErrorCode::empty_docs, tool.tool_id);
  }
  auto text = trim(complete_with_retry(provider, ChatRequest::user(explanation_prompt(tool)), policy));
  if (text.empty()) throw ProviderError("empty explanation for " + tool.tool_id);
  tool.explanation = std::move(text);
  return *tool.explanation;
}

inline std::string explain_tool(ToolRegistry& registry, const std::string& id, PlannerProvider& provider,
                                const RetryPolicy& policy = {}) {
  auto tool = registry.get(id);
  if (tool.explanation) return *tool.explanation;
  auto text = explain_tool(tool, provider, policy);
  registry.set_explanation(id, text);
  return text;
}

/// Explains every tool with up to `parallelism` concurrent provider calls.
/// Failures are collected per tool and reported together as PartialFailure
/// after all other tools are explained.
inline void explain_all(ToolRegistry& registry, PlannerProvider& provider, int parallelism,
                        const RetryPolicy& policy = {}) {
  if (parallelism < 1) throw Error(ErrorCode::config_error, "parallelism must be >= 1");
  const auto ids = registry.ids();
  if (ids.empty()) return;

  std::vector<char> failed(ids.size(), 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < ids.size(); i = next.fetch_add(1)) {
      try {
        explain_tool(registry, ids[i], provider, policy);
      } catch (const Error&) {
        failed[i] = 1;
      }
    }
  };

  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(parallelism), ids.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<std::string> failed_ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (failed[i]) failed_ids.push_back(ids[i]);
  }
  if (!failed_ids.empty()) throw PartialFailure(std::move(failed_ids));
}

}  // namespace toolplanner
