#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "toolplanner/catalog.hpp"
#include "toolplanner/error.hpp"
#include "toolplanner/util.hpp"

namespace toolplanner {

/// Fixed-length vector of finite doubles. Stored as double even when the
/// source file had less precision.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw Error(ErrorCode::dim_mismatch, "embedding must have at least one dimension");
    for (double v : values_) {
      if (!std::isfinite(v)) throw Error(ErrorCode::non_finite_value, "embedding entry is not finite");
    }
  }

  std::size_t dims() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  double norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dims() != b.dims()) throw Error(ErrorCode::dim_mismatch, "cosine of vectors with different dims");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dims(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::zero_vector, "cosine similarity of a zero vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

inline double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  return 1.0 - cosine_similarity(a, b);
}

/// tool_id -> vector, all with the same dims.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(std::size_t dims, std::string provider_tag) : dims_(dims), provider_tag_(std::move(provider_tag)) {}

  void add(const std::string& tool_id, EmbeddingVector v) {
    if (dims_ == 0) dims_ = v.dims();
    if (v.dims() != dims_) {
      throw Error(ErrorCode::dim_mismatch, tool_id + " has " + std::to_string(v.dims()) + " values, expected " +
                                               std::to_string(dims_));
    }
    if (!vectors_.emplace(tool_id, std::move(v)).second) {
      throw Error(ErrorCode::parse_error, "duplicate embedding for " + tool_id);
    }
  }

  std::size_t size() const noexcept { return vectors_.size(); }
  bool empty() const noexcept { return vectors_.empty(); }
  std::size_t dims() const noexcept { return dims_; }
  const std::string& provider_tag() const noexcept { return provider_tag_; }
  void set_provider_tag(std::string tag) { provider_tag_ = std::move(tag); }

  bool contains(const std::string& id) const { return vectors_.count(id) != 0; }
  const EmbeddingVector& at(const std::string& id) const {
    auto it = vectors_.find(id);
    if (it == vectors_.end()) throw Error(ErrorCode::unknown_tool, "no embedding for " + id);
    return it->second;
  }

  const std::map<std::string, EmbeddingVector>& vectors() const noexcept { return vectors_; }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(vectors_.size());
    for (const auto& [id, _] : vectors_) out.push_back(id);
    return out;
  }

  /// Every id must resolve in the registry.
  void check_against(const ToolRegistry& registry) const {
    for (const auto& [id, _] : vectors_) {
      if (!registry.contains(id)) throw Error(ErrorCode::unknown_tool, "embedding for unregistered tool " + id);
    }
  }

  bool operator==(const EmbeddingSet&) const = default;

 private:
  std::size_t dims_ = 0;
  std::string provider_tag_;
  std::map<std::string, EmbeddingVector> vectors_;
};

// ---------------------------------------------------------------------------
// File format
//
//   dims=<d> count=<n> provider=<tag>
//   <tool_id>\t<v1>,<v2>,...,<vd>
// ---------------------------------------------------------------------------

inline EmbeddingSet parse_embeddings(std::string_view text) {
  auto lines = split_lines(text);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw Error(ErrorCode::parse_error, "missing header line");

  std::size_t dims = 0, count = 0;
  bool have_dims = false, have_count = false;
  std::string provider;
  for (const auto& field : split(trim(lines[0]), ' ')) {
    if (field.empty()) continue;
    auto eq = field.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::parse_error, "bad header field '" + field + "'");
    auto key = field.substr(0, eq);
    auto value = field.substr(eq + 1);
    try {
      if (key == "dims") {
        dims = std::stoul(value);
        have_dims = true;
      } else if (key == "count") {
        count = std::stoul(value);
        have_count = true;
      } else if (key == "provider") {
        provider = value;
      }
    } catch (const std::exception&) {
      throw Error(ErrorCode::parse_error, "bad header value '" + field + "'");
    }
  }
  if (!have_dims || !have_count || dims == 0) throw Error(ErrorCode::parse_error, "header needs dims>0 and count");

  EmbeddingSet set(dims, provider);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(ErrorCode::parse_error, "line " + std::to_string(i + 1) + ": no tab");
    auto id = line.substr(0, tab);
    std::vector<double> values;
    for (const auto& cell : split(std::string_view(line).substr(tab + 1), ',')) {
      double v = 0.0;
      auto t = trim(cell);
      if (t == "nan" || t == "NaN" || t == "-nan" || t == "inf" || t == "-inf" || t == "Infinity" || t == "-Infinity") {
        throw Error(ErrorCode::non_finite_value, id);
      }
      if (!parse_double(t, v)) throw Error(ErrorCode::parse_error, "line " + std::to_string(i + 1) + ": bad number");
      if (!std::isfinite(v)) throw Error(ErrorCode::non_finite_value, id);
      values.push_back(v);
    }
    if (values.size() != dims) {
      throw Error(ErrorCode::dim_mismatch, id + " has " + std::to_string(values.size()) + " values, expected " +
                                               std::to_string(dims));
    }
    set.add(id, EmbeddingVector(std::move(values)));
  }
  if (set.size() != count) {
    throw Error(ErrorCode::parse_error, "header count " + std::to_string(count) + " but " +
                                            std::to_string(set.size()) + " rows");
  }
  return set;
}

inline EmbeddingSet load_embeddings(const std::filesystem::path& path) { return parse_embeddings(read_file(path)); }

inline std::string serialize_embeddings(const EmbeddingSet& set) {
  std::string out = "dims=" + std::to_string(set.dims()) + " count=" + std::to_string(set.size()) +
                    " provider=" + (set.provider_tag().empty() ? std::string("unknown") : set.provider_tag()) + "\n";
  for (const auto& [id, v] : set.vectors()) {
    out += id;
    out += '\t';
    for (std::size_t i = 0; i < v.dims(); ++i) {
      if (i) out += ',';
      out += format_double(v[i]);
    }
    out += '\n';
  }
  return out;
}

inline void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  write_file(path, serialize_embeddings(set));
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

/// Model-free deterministic embedder: a seeded hash of the text expanded to
/// `dims` uniform values in [-1, 1), then L2-normalized.
inline EmbeddingVector test_embedder(std::string_view text, std::size_t dims, std::uint64_t seed) {
  if (dims < 2) throw Error(ErrorCode::config_error, "test_embedder needs dims >= 2");
  std::uint64_t state = splitmix64(fnv1a64(text) ^ splitmix64(seed));
  std::vector<double> values(dims);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& v : values) {
      state = splitmix64(state);
      v = static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;
      norm2 += v * v;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& v : values) v *= inv;
  return EmbeddingVector(std::move(values));
}

/// The text embedded for a tool: its explanation, optionally followed by
/// its description.
inline std::string embedding_text(const ToolDescriptor& tool, bool append_description = false) {
  if (!tool.explanation) throw Error(ErrorCode::missing_explanation, tool.tool_id);
  if (!append_description) return *tool.explanation;
  return *tool.explanation + "\n" + tool.description;
}

inline EmbeddingSet embed_registry_with_test_embedder(const ToolRegistry& registry, std::size_t dims,
                                                      std::uint64_t seed, bool append_description = false) {
  EmbeddingSet set(dims, "test-embedder");
  for (const auto& tool : registry.tools()) {
    set.add(tool.tool_id, test_embedder(embedding_text(tool, append_description), dims, seed));
  }
  return set;
}

}  // namespace toolplanner
