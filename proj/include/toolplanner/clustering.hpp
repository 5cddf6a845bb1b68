#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "toolplanner/catalog.hpp"
#include "toolplanner/embedding.hpp"
#include "toolplanner/error.hpp"
#include "toolplanner/prompts.hpp"
#include "toolplanner/provider.hpp"
#include "toolplanner/util.hpp"

namespace toolplanner {

enum class ClusterMethod { kmeans, dbscan };

inline std::string_view to_string(ClusterMethod m) { return m == ClusterMethod::kmeans ? "kmeans" : "dbscan"; }

inline ClusterMethod parse_cluster_method(std::string_view s) {
  if (s == "kmeans") return ClusterMethod::kmeans;
  if (s == "dbscan") return ClusterMethod::dbscan;
  throw Error(ErrorCode::config_error, "unknown clustering method '" + std::string(s) + "'");
}

/// Named k presets for catalogs of benchmark scale.
inline std::optional<std::size_t> k_profile(std::string_view name) {
  if (name == "toolbench") return 1800;
  if (name == "apibench") return 65;
  return std::nullopt;
}

struct ClusteringConfig {
  ClusterMethod method = ClusterMethod::kmeans;
  std::size_t k = 1;
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-9;
  int restarts = 1;
  // Scale every vector to unit length before k-means.
  bool normalize = false;
  double eps = 0.02;
  std::size_t min_pts = 1;

  void validate(std::size_t n_points) const {
    if (method == ClusterMethod::kmeans) {
      if (k < 1) throw Error(ErrorCode::config_error, "k must be >= 1");
      if (k > n_points) {
        throw Error(ErrorCode::k_too_large, "k=" + std::to_string(k) + " exceeds " + std::to_string(n_points) + " points");
      }
      if (max_iter < 1) throw Error(ErrorCode::config_error, "max_iter must be >= 1");
      if (restarts < 1) throw Error(ErrorCode::config_error, "restarts must be >= 1");
      if (!(tol >= 0.0)) throw Error(ErrorCode::config_error, "tol must be non-negative");
    } else {
      if (!(eps > 0.0)) throw Error(ErrorCode::config_error, "eps must be positive");
      if (min_pts < 1) throw Error(ErrorCode::config_error, "min_pts must be >= 1");
    }
  }
};

/// A cluster of tools. `label` is the name plans use to refer to it.
struct Toolkit {
  int toolkit_id = 0;
  std::string label;
  std::vector<std::string> members;
  EmbeddingVector centroid;
  std::string functionality;

  bool operator==(const Toolkit&) const = default;
};

inline std::string default_toolkit_label(int id) { return "tk" + std::to_string(id); }

struct Partition {
  std::map<std::string, int> assignments;
  double objective = 0.0;
  int iterations_run = 0;
  // Objective after each Lloyd iteration of the winning restart.
  std::vector<double> objective_history;
  // DBSCAN noise points (only possible with min_pts > 1); each is a singleton.
  std::vector<std::string> noise;
};

struct ClusterResult {
  Partition partition;
  std::vector<Toolkit> toolkits;
};

namespace detail {

using Points = std::vector<std::vector<double>>;

inline Points points_of(const EmbeddingSet& set, bool normalize = false) {
  Points pts;
  pts.reserve(set.size());
  for (const auto& [_, v] : set.vectors()) {
    std::vector<double> p(v.values().begin(), v.values().end());
    if (normalize) {
      const double n = v.norm();
      if (n == 0.0) throw Error(ErrorCode::zero_vector, "cannot normalize a zero embedding");
      for (auto& x : p) x /= n;
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) { return squared_distance(a, b); }

/// D² seeding. Returns indices of the chosen points in pick order.
inline std::vector<std::size_t> kmeanspp_indices(const Points& pts, std::size_t k, Rng& rng) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> chosen;
  std::vector<char> taken(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t idx) {
    chosen.push_back(idx);
    taken[idx] = 1;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqdist(pts[i], pts[idx]));
  };

  take(rng.below(n));
  while (chosen.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += taken[i] ? 0.0 : d2[i];
    if (total <= 0.0) {
      // Every remaining point coincides with a centroid: pick uniformly among them.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i]) rest.push_back(i);
      take(rest[rng.below(rest.size())]);
      continue;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i] || d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (target < acc) break;
    }
    take(pick);
  }
  return chosen;
}

inline std::vector<int> assign_nearest(const Points& pts, const Points& centroids) {
  std::vector<int> labels(pts.size(), 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = sqdist(pts[i], centroids[c]);
      if (d < best) {  // strict: the lowest id wins exact ties
        best = d;
        labels[i] = static_cast<int>(c);
      }
    }
  }
  return labels;
}

inline Points cluster_means(const Points& pts, const std::vector<int>& labels, std::size_t k) {
  const std::size_t dims = pts.empty() ? 0 : pts[0].size();
  Points means(k, std::vector<double>(dims, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    auto& m = means[static_cast<std::size_t>(labels[i])];
    for (std::size_t d = 0; d < dims; ++d) m[d] += pts[i][d];
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (auto& x : means[c]) x /= static_cast<double>(counts[c]);
  }
  return means;
}

inline double sse(const Points& pts, const std::vector<int>& labels, const Points& means) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) s += sqdist(pts[i], means[static_cast<std::size_t>(labels[i])]);
  return s;
}

/// Moves, for each empty cluster, the point farthest from its centroid into
/// it. Only points from clusters with at least two members are eligible.
inline void repair_empty(const Points& pts, std::vector<int>& labels, Points& centroids) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> counts(k, 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    double worst = -1.0;
    std::size_t pick = pts.size();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto from = static_cast<std::size_t>(labels[i]);
      if (counts[from] < 2) continue;
      const double d = sqdist(pts[i], centroids[from]);
      if (d > worst) {
        worst = d;
        pick = i;
      }
    }
    if (pick == pts.size()) continue;  // cannot happen while k <= n
    --counts[static_cast<std::size_t>(labels[pick])];
    labels[pick] = static_cast<int>(c);
    ++counts[c];
    centroids[c] = pts[pick];
  }
}

struct LloydRun {
  std::vector<int> labels;
  double objective = 0.0;
  int iterations = 0;
  std::vector<double> history;
};

inline LloydRun lloyd(const Points& pts, Points centroids, int max_iter, double tol) {
  LloydRun run;
  const std::size_t k = centroids.size();
  std::vector<int> prev;
  for (int it = 1; it <= max_iter; ++it) {
    auto labels = assign_nearest(pts, centroids);
    repair_empty(pts, labels, centroids);
    centroids = cluster_means(pts, labels, k);
    const double obj = sse(pts, labels, centroids);
    run.iterations = it;
    const bool fixed_point = labels == prev;
    const bool small_gain = !run.history.empty() && run.history.back() - obj < tol;
    run.history.push_back(obj);
    run.labels = std::move(labels);
    run.objective = obj;
    if (fixed_point || small_gain) break;
    prev = run.labels;
  }
  return run;
}

/// Relabels clusters by the smallest point index they contain.
inline std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

inline std::vector<Toolkit> toolkits_from_labels(const EmbeddingSet& set, const Points& pts,
                                                 const std::vector<int>& labels) {
  const auto ids = set.ids();
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  std::vector<Toolkit> out(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    out[static_cast<std::size_t>(c)].toolkit_id = c;
    out[static_cast<std::size_t>(c)].label = default_toolkit_label(c);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) out[static_cast<std::size_t>(labels[i])].members.push_back(ids[i]);
  const auto means = cluster_means(pts, labels, static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) out[static_cast<std::size_t>(c)].centroid = EmbeddingVector(means[static_cast<std::size_t>(c)]);
  return out;
}

}  // namespace detail

struct Seeding {
  std::vector<std::size_t> indices;  // into the set's tool_id order
  std::vector<EmbeddingVector> centroids;
};

/// k-means++ seeding: first centroid uniform over the points, each next one
/// drawn with probability proportional to its squared distance to the nearest
/// centroid chosen so far.
inline Seeding kmeanspp_seed(const EmbeddingSet& set, std::size_t k, std::uint64_t seed) {
  if (set.empty()) throw Error(ErrorCode::empty_set, "no embeddings to seed from");
  if (k < 1 || k > set.size()) {
    throw Error(ErrorCode::k_too_large, "k=" + std::to_string(k) + " for " + std::to_string(set.size()) + " points");
  }
  const auto pts = detail::points_of(set);
  Rng rng(seed);
  Seeding out;
  out.indices = detail::kmeanspp_indices(pts, k, rng);
  for (auto i : out.indices) out.centroids.emplace_back(pts[i]);
  return out;
}

/// Within-cluster sum of squared distances to the cluster means, with the
/// means recomputed from the assignment.
inline double objective(const EmbeddingSet& set, const Partition& partition) {
  std::map<int, std::pair<std::vector<double>, std::size_t>> sums;
  for (const auto& [id, v] : set.vectors()) {
    auto it = partition.assignments.find(id);
    if (it == partition.assignments.end()) throw Error(ErrorCode::unassigned_point, id);
    auto& [sum, count] = sums[it->second];
    if (sum.empty()) sum.assign(v.dims(), 0.0);
    for (std::size_t d = 0; d < v.dims(); ++d) sum[d] += v[d];
    ++count;
  }
  for (auto& [_, sc] : sums)
    for (auto& x : sc.first) x /= static_cast<double>(sc.second);
  double total = 0.0;
  for (const auto& [id, v] : set.vectors()) {
    total += squared_distance(v.values(), sums[partition.assignments.at(id)].first);
  }
  return total;
}

/// Lloyd's algorithm from k-means++ seeds; the best of `restarts` runs wins.
/// Toolkits come back ordered by id, members by tool_id, ids assigned by the
/// smallest member so that equal partitions get equal labels.
inline ClusterResult kmeans_cluster(const EmbeddingSet& set, const ClusteringConfig& config) {
  if (config.method != ClusterMethod::kmeans) throw Error(ErrorCode::config_error, "config method is not kmeans");
  if (set.empty()) throw Error(ErrorCode::empty_set, "no embeddings to cluster");
  config.validate(set.size());
  const auto pts = detail::points_of(set, config.normalize);

  std::optional<detail::LloydRun> best;
  for (int r = 0; r < config.restarts; ++r) {
    Rng rng(r == 0 ? config.seed : derive_seed(config.seed, static_cast<std::uint64_t>(r)));
    detail::Points centroids;
    for (auto i : detail::kmeanspp_indices(pts, config.k, rng)) centroids.push_back(pts[i]);
    auto run = detail::lloyd(pts, std::move(centroids), config.max_iter, config.tol);
    if (!best || run.objective < best->objective) best = std::move(run);
  }

  auto labels = detail::canonical_labels(best->labels);
  ClusterResult result;
  const auto ids = set.ids();
  for (std::size_t i = 0; i < ids.size(); ++i) result.partition.assignments[ids[i]] = labels[i];
  result.partition.objective = best->objective;
  result.partition.iterations_run = best->iterations;
  result.partition.objective_history = best->history;
  result.toolkits = detail::toolkits_from_labels(set, pts, labels);
  return result;
}

/// DBSCAN with distance 1 - cosine similarity. With min_pts = 1 every point is
/// a core point and clusters are the connected components of the eps-graph.
inline ClusterResult dbscan_cluster(const EmbeddingSet& set, const ClusteringConfig& config) {
  if (config.method != ClusterMethod::dbscan) throw Error(ErrorCode::config_error, "config method is not dbscan");
  if (set.empty()) throw Error(ErrorCode::empty_set, "no embeddings to cluster");
  config.validate(set.size());

  std::vector<const EmbeddingVector*> vecs;
  for (const auto& [_, v] : set.vectors()) vecs.push_back(&v);
  const std::size_t n = vecs.size();

  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || cosine_distance(*vecs[i], *vecs[j]) <= config.eps) neighbors[i].push_back(j);
    }
  }

  constexpr int unvisited = -1;
  std::vector<int> labels(n, unvisited);
  std::vector<char> is_noise(n, 0);
  int next_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != unvisited) continue;
    if (neighbors[i].size() < config.min_pts) {
      is_noise[i] = 1;
      continue;
    }
    const int label = next_label++;
    labels[i] = label;
    std::queue<std::size_t> frontier;
    frontier.push(i);
    while (!frontier.empty()) {
      auto p = frontier.front();
      frontier.pop();
      if (neighbors[p].size() < config.min_pts) continue;  // border point
      for (auto q : neighbors[p]) {
        if (labels[q] == unvisited) {
          labels[q] = label;
          is_noise[q] = 0;
          frontier.push(q);
        }
      }
    }
  }

  ClusterResult result;
  const auto ids = set.ids();
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == unvisited) {
      labels[i] = next_label++;
      result.partition.noise.push_back(ids[i]);
    }
  }
  labels = detail::canonical_labels(labels);
  for (std::size_t i = 0; i < n; ++i) result.partition.assignments[ids[i]] = labels[i];
  const auto pts = detail::points_of(set);
  result.toolkits = detail::toolkits_from_labels(set, pts, labels);
  result.partition.objective = objective(set, result.partition);
  return result;
}

inline ClusterResult cluster(const EmbeddingSet& set, const ClusteringConfig& config) {
  return config.method == ClusterMethod::kmeans ? kmeans_cluster(set, config) : dbscan_cluster(set, config);
}

// ---------------------------------------------------------------------------
// Toolkit helpers
// ---------------------------------------------------------------------------

inline std::string description_prompt(const Toolkit& toolkit, const ToolRegistry& registry) {
  std::string explanations;
  for (const auto& id : toolkit.members) {
    auto e = registry.explanation(id);
    if (!e) throw Error(ErrorCode::missing_explanation, id);
    explanations += "- " + id + ": " + *e + "\n";
  }
  return render_prompt(prompt_template(PromptName::toolkit_description), {{"explanations", explanations}});
}

/// Synthesizes the toolkit's functionality description from its members'
/// explanations. Cached on the toolkit.
inline const std::string& describe_toolkit(Toolkit& toolkit, const ToolRegistry& registry, PlannerProvider& provider,
                                           const RetryPolicy& policy = {}) {
  if (!toolkit.functionality.empty()) return toolkit.functionality;
  auto prompt = description_prompt(toolkit, registry);
  auto text = trim(complete_with_retry(provider, ChatRequest::user(prompt), policy));
  if (text.empty()) throw ProviderError("empty toolkit description for " + toolkit.label);
  toolkit.functionality = std::move(text);
  return toolkit.functionality;
}

inline void describe_all(std::vector<Toolkit>& toolkits, const ToolRegistry& registry, PlannerProvider& provider,
                         const RetryPolicy& policy = {}) {
  for (auto& tk : toolkits) describe_toolkit(tk, registry, provider, policy);
}

/// In-toolkit trial order: ascending cosine distance to the centroid, ties by
/// tool_id. A zero centroid falls back to tool_id order.
inline std::vector<std::string> member_order(const Toolkit& toolkit, const EmbeddingSet& embeddings) {
  std::vector<std::pair<double, std::string>> keyed;
  const bool usable = toolkit.centroid.dims() > 0 && toolkit.centroid.norm() > 0.0;
  for (const auto& id : toolkit.members) {
    double d = 0.0;
    if (usable && embeddings.contains(id) && embeddings.at(id).norm() > 0.0) {
      d = cosine_distance(embeddings.at(id), toolkit.centroid);
    }
    keyed.emplace_back(d, id);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::string> out;
  for (auto& [_, id] : keyed) out.push_back(std::move(id));
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json config_to_json(const ClusteringConfig& c) {
  nlohmann::ordered_json j;
  j["method"] = std::string(to_string(c.method));
  if (c.method == ClusterMethod::kmeans) {
    j["k"] = c.k;
    j["seed"] = c.seed;
    j["max_iter"] = c.max_iter;
    j["tol"] = c.tol;
    j["restarts"] = c.restarts;
    j["normalize"] = c.normalize;
  } else {
    j["eps"] = c.eps;
    j["min_pts"] = c.min_pts;
  }
  return j;
}

inline ClusteringConfig config_from_json(const nlohmann::json& j) {
  ClusteringConfig c;
  c.method = parse_cluster_method(j.at("method").get<std::string>());
  c.k = j.value("k", std::size_t{1});
  c.seed = j.value("seed", std::uint64_t{0});
  c.max_iter = j.value("max_iter", 300);
  c.tol = j.value("tol", 1e-9);
  c.restarts = j.value("restarts", 1);
  c.normalize = j.value("normalize", false);
  c.eps = j.value("eps", 0.02);
  c.min_pts = j.value("min_pts", std::size_t{1});
  return c;
}

inline std::string serialize_partition(const ClusteringConfig& config, const ClusterResult& result) {
  nlohmann::ordered_json j;
  j["config"] = config_to_json(config);
  j["objective"] = result.partition.objective;
  j["iterations"] = result.partition.iterations_run;
  j["assignments"] = nlohmann::ordered_json::object();
  for (const auto& [id, tk] : result.partition.assignments) j["assignments"][id] = tk;
  if (!result.partition.noise.empty()) j["noise"] = result.partition.noise;
  j["toolkits"] = nlohmann::ordered_json::array();
  for (const auto& tk : result.toolkits) {
    nlohmann::ordered_json t;
    t["toolkit_id"] = tk.toolkit_id;
    t["label"] = tk.label;
    t["members"] = tk.members;
    t["functionality"] = tk.functionality;
    t["centroid"] = std::vector<double>(tk.centroid.values().begin(), tk.centroid.values().end());
    j["toolkits"].push_back(std::move(t));
  }
  return j.dump(2) + "\n";
}

struct PartitionFile {
  ClusteringConfig config;
  ClusterResult result;
};

inline PartitionFile parse_partition(std::string_view text) {
  PartitionFile out;
  try {
    auto j = nlohmann::json::parse(text);
    out.config = config_from_json(j.at("config"));
    out.result.partition.objective = j.at("objective").get<double>();
    out.result.partition.iterations_run = j.value("iterations", 0);
    for (const auto& [id, tk] : j.at("assignments").items()) out.result.partition.assignments[id] = tk.get<int>();
    if (j.contains("noise")) out.result.partition.noise = j["noise"].get<std::vector<std::string>>();
    for (const auto& t : j.at("toolkits")) {
      Toolkit tk;
      tk.toolkit_id = t.at("toolkit_id").get<int>();
      tk.label = t.value("label", default_toolkit_label(tk.toolkit_id));
      tk.members = t.at("members").get<std::vector<std::string>>();
      tk.functionality = t.value("functionality", std::string{});
      tk.centroid = EmbeddingVector(t.at("centroid").get<std::vector<double>>());
      out.result.toolkits.push_back(std::move(tk));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("partition file: ") + e.what());
  }
  return out;
}

}  // namespace toolplanner
