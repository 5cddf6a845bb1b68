#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolplanner/baselines.hpp"
#include "toolplanner/trace.hpp"
#include "toolplanner/util.hpp"

namespace toolplanner {

struct RunRecord {
  std::string task_id;
  std::string method;
  std::string trace_ref;
  Outcome outcome = Outcome::failure;
  std::uint64_t tool_calls = 0;
  std::uint64_t replans = 0;
  std::uint64_t cost_units = 0;
  std::uint64_t hallucinated_call_count = 0;
  std::uint64_t in_toolkit_retries = 0;

  bool operator==(const RunRecord&) const = default;
};

inline RunRecord record_of(const Trace& t, std::string trace_ref = {}) {
  return {t.task_id,          t.method,           std::move(trace_ref),      t.outcome,
          t.counters.tool_calls, t.counters.replans, t.counters.cost_units, t.counters.hallucinated_calls,
          t.counters.in_toolkit_retries};
}

using Judge = std::function<Judgement(const RunRecord&, const RunRecord&)>;

/// The oracle judge over run records: same rule as for traces.
inline Judgement oracle_judge_records(const RunRecord& a, const RunRecord& b) {
  if (a.task_id != b.task_id) {
    throw Error(ErrorCode::task_mismatch, "cannot compare " + a.task_id + " with " + b.task_id);
  }
  const bool sa = a.outcome == Outcome::success;
  const bool sb = b.outcome == Outcome::success;
  if (sa != sb) return sa ? Judgement::a_wins : Judgement::b_wins;
  if (!sa || a.cost_units == b.cost_units) return Judgement::tie;
  return a.cost_units < b.cost_units ? Judgement::a_wins : Judgement::b_wins;
}

inline double pass_rate(const std::vector<RunRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::empty_input, "pass_rate of no records");
  std::size_t ok = 0;
  for (const auto& r : records) ok += r.outcome == Outcome::success;
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

struct WinStats {
  std::size_t wins = 0;
  std::size_t ties = 0;
  std::size_t losses = 0;

  std::size_t pairs() const { return wins + ties + losses; }
  double rate() const { return pairs() == 0 ? 0.0 : static_cast<double>(wins) / static_cast<double>(pairs()); }
};

/// Pairs records by task id; both sides must cover the same tasks exactly
/// once.
inline WinStats win_stats(const std::vector<RunRecord>& candidate, const std::vector<RunRecord>& reference,
                          const Judge& judge = oracle_judge_records) {
  if (candidate.empty()) throw Error(ErrorCode::empty_input, "win_rate of no records");
  std::map<std::string, const RunRecord*> ref;
  for (const auto& r : reference) {
    if (!ref.emplace(r.task_id, &r).second) throw Error(ErrorCode::unpaired_task, "duplicate reference task " + r.task_id);
  }
  std::set<std::string> seen;
  WinStats s;
  for (const auto& c : candidate) {
    if (!seen.insert(c.task_id).second) throw Error(ErrorCode::unpaired_task, "duplicate candidate task " + c.task_id);
    auto it = ref.find(c.task_id);
    if (it == ref.end()) throw Error(ErrorCode::unpaired_task, "no reference record for " + c.task_id);
    switch (judge(c, *it->second)) {
      case Judgement::a_wins: ++s.wins; break;
      case Judgement::tie: ++s.ties; break;
      case Judgement::b_wins: ++s.losses; break;
    }
  }
  for (const auto& [id, _] : ref) {
    if (!seen.count(id)) throw Error(ErrorCode::unpaired_task, "no candidate record for " + id);
  }
  return s;
}

/// Strict wins over pairs; ties count against the candidate.
inline double win_rate(const std::vector<RunRecord>& candidate, const std::vector<RunRecord>& reference,
                       const Judge& judge = oracle_judge_records) {
  return win_stats(candidate, reference, judge).rate();
}

/// Fraction of tasks with at least one call to a tool that does not exist.
inline double hallucination_rate(const std::vector<RunRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::empty_input, "hallucination_rate of no records");
  std::size_t n = 0;
  for (const auto& r : records) n += r.hallucinated_call_count > 0;
  return static_cast<double>(n) / static_cast<double>(records.size());
}

/// Hallucinated calls over all tool calls.
inline double call_hallucination_rate(const std::vector<RunRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::empty_input, "hallucination_rate of no records");
  std::uint64_t calls = 0, bad = 0;
  for (const auto& r : records) {
    calls += r.tool_calls;
    bad += r.hallucinated_call_count;
  }
  return calls == 0 ? 0.0 : static_cast<double>(bad) / static_cast<double>(calls);
}

struct MethodMetrics {
  std::string method;
  std::size_t episodes = 0;
  double pass_rate = 0.0;
  double win_rate = 0.0;
  std::size_t wins = 0;
  std::size_t ties = 0;
  double hallucination_rate = 0.0;
  double call_hallucination_rate = 0.0;
  double mean_replans = 0.0;
  double mean_cost = 0.0;
  double mean_tool_calls = 0.0;
  std::optional<double> mean_wall_ms;

  bool operator==(const MethodMetrics&) const = default;
};

struct MetricsReport {
  std::string label;
  std::string reference_method;
  std::size_t episodes = 0;
  std::string config_digest;
  std::vector<MethodMetrics> methods;

  const MethodMetrics& at(std::string_view method) const {
    for (const auto& m : methods) {
      if (m.method == method) return m;
    }
    throw Error(ErrorCode::config_error, "report has no method " + std::string(method));
  }

  bool operator==(const MetricsReport&) const = default;
};

inline MethodMetrics method_metrics(const std::string& method, const std::vector<RunRecord>& records,
                                    const std::vector<RunRecord>& reference, const Judge& judge = oracle_judge_records) {
  MethodMetrics m;
  m.method = method;
  m.episodes = records.size();
  m.pass_rate = pass_rate(records);
  auto ws = win_stats(records, reference, judge);
  m.win_rate = ws.rate();
  m.wins = ws.wins;
  m.ties = ws.ties;
  m.hallucination_rate = hallucination_rate(records);
  m.call_hallucination_rate = call_hallucination_rate(records);
  double replans = 0, cost = 0, calls = 0;
  for (const auto& r : records) {
    replans += static_cast<double>(r.replans);
    cost += static_cast<double>(r.cost_units);
    calls += static_cast<double>(r.tool_calls);
  }
  const auto n = static_cast<double>(records.size());
  m.mean_replans = replans / n;
  m.mean_cost = cost / n;
  m.mean_tool_calls = calls / n;
  return m;
}

/// One row per method, in the order given; win rates against `reference`.
inline MetricsReport build_report(const std::vector<std::pair<std::string, std::vector<RunRecord>>>& by_method,
                                  const std::string& reference, std::string config_digest, std::string label = {},
                                  const Judge& judge = oracle_judge_records) {
  const std::vector<RunRecord>* ref = nullptr;
  for (const auto& [m, recs] : by_method) {
    if (m == reference) ref = &recs;
  }
  if (!ref) throw Error(ErrorCode::config_error, "reference method " + reference + " was not run");
  MetricsReport report;
  report.label = std::move(label);
  report.reference_method = reference;
  report.config_digest = std::move(config_digest);
  report.episodes = ref->size();
  for (const auto& [m, recs] : by_method) report.methods.push_back(method_metrics(m, recs, *ref, judge));
  return report;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

enum class ReportFormat { json, csv, markdown };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw Error(ErrorCode::config_error, "unknown report format '" + std::string(s) + "'");
}

inline nlohmann::ordered_json to_json(const MethodMetrics& m) {
  nlohmann::ordered_json j;
  j["method"] = m.method;
  j["episodes"] = m.episodes;
  j["pass_rate"] = m.pass_rate;
  j["win_rate"] = m.win_rate;
  j["wins"] = m.wins;
  j["ties"] = m.ties;
  j["hallucination_rate"] = m.hallucination_rate;
  j["call_hallucination_rate"] = m.call_hallucination_rate;
  j["mean_replans"] = m.mean_replans;
  j["mean_cost"] = m.mean_cost;
  j["mean_tool_calls"] = m.mean_tool_calls;
  if (m.mean_wall_ms) j["mean_wall_ms"] = *m.mean_wall_ms;
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  if (!r.label.empty()) j["label"] = r.label;
  j["reference_method"] = r.reference_method;
  j["episodes"] = r.episodes;
  j["config_digest"] = r.config_digest;
  auto methods = nlohmann::ordered_json::array();
  for (const auto& m : r.methods) methods.push_back(to_json(m));
  j["methods"] = std::move(methods);
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.label = j.value("label", std::string{});
    r.reference_method = j.at("reference_method").get<std::string>();
    r.episodes = j.at("episodes").get<std::size_t>();
    r.config_digest = j.at("config_digest").get<std::string>();
    for (const auto& mj : j.at("methods")) {
      MethodMetrics m;
      m.method = mj.at("method").get<std::string>();
      m.episodes = mj.at("episodes").get<std::size_t>();
      m.pass_rate = mj.at("pass_rate").get<double>();
      m.win_rate = mj.at("win_rate").get<double>();
      m.wins = mj.value("wins", std::size_t{0});
      m.ties = mj.value("ties", std::size_t{0});
      m.hallucination_rate = mj.at("hallucination_rate").get<double>();
      m.call_hallucination_rate = mj.value("call_hallucination_rate", 0.0);
      m.mean_replans = mj.at("mean_replans").get<double>();
      m.mean_cost = mj.at("mean_cost").get<double>();
      m.mean_tool_calls = mj.value("mean_tool_calls", 0.0);
      if (mj.contains("mean_wall_ms")) m.mean_wall_ms = mj["mean_wall_ms"].get<double>();
      r.methods.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("report: ") + e.what());
  }
  return r;
}

inline constexpr std::string_view csv_header = "method,pass_rate,win_rate,hallucination_rate,mean_replans,mean_cost";

inline std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string render_report(const MetricsReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::json: return to_json(r).dump(2) + "\n";
    case ReportFormat::csv: {
      std::string out(csv_header);
      out += "\n";
      for (const auto& m : r.methods) {
        out += m.method + "," + format_double(m.pass_rate) + "," + format_double(m.win_rate) + "," +
               format_double(m.hallucination_rate) + "," + format_double(m.mean_replans) + "," +
               format_double(m.mean_cost) + "\n";
      }
      return out;
    }
    case ReportFormat::markdown: {
      std::string out;
      if (!r.label.empty()) out += "### " + r.label + "\n\n";
      out += "| Method | Pass Rate | Win Rate (vs " + r.reference_method +
             ") | Hallucination Rate | Mean Replans | Mean Cost |\n";
      out += "|---|---|---|---|---|---|\n";
      for (const auto& m : r.methods) {
        out += "| " + m.method + " | " + fixed4(m.pass_rate) + " | " + fixed4(m.win_rate) + " | " +
               fixed4(m.hallucination_rate) + " | " + fixed4(m.mean_replans) + " | " + fixed4(m.mean_cost) + " |\n";
      }
      out += "\nEpisodes: " + std::to_string(r.episodes) + ", config digest: " + r.config_digest + "\n";
      return out;
    }
  }
  return {};
}

inline void emit_report(const MetricsReport& r, ReportFormat format, const std::filesystem::path& path) {
  write_file(path, render_report(r, format));
}

}  // namespace toolplanner
