#pragma once

#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "toolplanner/provider.hpp"
#include "toolplanner/util.hpp"

// A stand-in language model for simulation runs. It reads the same prompts a
// live model would get and answers them with simple, seeded rules:
//
//   * explanations name the capability found in the docs;
//   * toolkit descriptions name the capabilities held by at least half of
//     the members;
//   * plans map each requested capability to a toolkit whose description
//     names it;
//   * baseline agents pick a matching API at random and sometimes invent one.

namespace toolplanner {

struct SimModelConfig {
  // Chance that a baseline agent names an API that does not exist.
  double hallucination_rate = 0.0;
};

namespace sim {

inline std::optional<std::string> line_after(std::string_view text, std::string_view prefix) {
  std::optional<std::string> found;
  for (const auto& line : split_lines(text)) {
    if (starts_with(line, prefix)) {
      found = line.substr(prefix.size());
      break;
    }
  }
  return found;
}

inline std::optional<std::string> last_line_after(std::string_view text, std::string_view prefix) {
  std::optional<std::string> found;
  for (const auto& line : split_lines(text)) {
    if (starts_with(line, prefix)) found = line.substr(prefix.size());
  }
  return found;
}

/// Lines between a header line and the next line that does not start with
/// "- ", with the leading "- " removed.
inline std::vector<std::string> bullet_section(std::string_view text, std::string_view header) {
  std::vector<std::string> out;
  bool in = false;
  for (const auto& line : split_lines(text)) {
    if (!in) {
      in = line == header;
      continue;
    }
    if (!starts_with(line, "- ")) break;
    out.push_back(line.substr(2));
  }
  return out;
}

/// Capabilities requested by a question of the form "...to: a -> b -> c".
inline std::vector<std::string> requested_capabilities(std::string_view question) {
  auto pos = question.find("to: ");
  if (pos == std::string_view::npos) return {};
  std::vector<std::string> out;
  std::string rest(question.substr(pos + 4));
  std::size_t start = 0;
  while (true) {
    auto arrow = rest.find("->", start);
    auto item = trim(std::string_view(rest).substr(start, arrow == std::string::npos ? std::string::npos : arrow - start));
    if (!item.empty()) out.push_back(item);
    if (arrow == std::string::npos) break;
    start = arrow + 2;
  }
  return out;
}

/// The user's question; the marker may sit in the middle of a line.
inline std::string question_of(std::string_view text) {
  for (std::string_view marker : {"Here is the user's question: ", "Question: "}) {
    auto pos = text.find(marker);
    if (pos == std::string_view::npos) continue;
    auto rest = text.substr(pos + marker.size());
    return std::string(rest.substr(0, rest.find('\n')));
  }
  return {};
}

/// "Capability: x." in documentation.
inline std::optional<std::string> capability_in_docs(std::string_view docs) {
  static const std::regex re(R"(Capability: ([A-Za-z0-9_]+))");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(docs.begin(), docs.end(), m, re)) return m[1].str();
  return std::nullopt;
}

/// Capabilities named by "Provides a, b functionality."
inline std::vector<std::string> provided_capabilities(std::string_view text) {
  static const std::regex re(R"(Provides ([A-Za-z0-9_, ]+) functionality)");
  std::match_results<std::string_view::const_iterator> m;
  std::vector<std::string> out;
  if (std::regex_search(text.begin(), text.end(), m, re)) {
    for (const auto& part : split(m[1].str(), ',')) {
      auto t = trim(part);
      if (!t.empty()) out.push_back(t);
    }
  }
  return out;
}

/// "id: docs" bullets -> id -> capability.
inline std::vector<std::pair<std::string, std::string>> api_capabilities(const std::vector<std::string>& bullets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& b : bullets) {
    auto colon = b.find(": ");
    if (colon == std::string::npos) continue;
    auto cap = capability_in_docs(std::string_view(b).substr(colon + 2));
    out.emplace_back(b.substr(0, colon), cap.value_or(""));
  }
  return out;
}

inline std::string invented_name(const std::string& capability) { return capability + "_pro_api"; }

inline std::string call_params(const std::string& intent, const std::string& query) {
  nlohmann::ordered_json j;
  if (!intent.empty()) j["intent"] = intent;
  j["query"] = query;
  return j.dump();
}

inline constexpr std::string_view no_plan = "No alternative plan is available.";

/// Answer to a plan-making or replanning prompt.
inline std::string plan_response(const ChatRequest& req, bool replanning) {
  const auto text = req.text();
  const auto caps = requested_capabilities(question_of(text));

  std::vector<std::pair<std::string, std::vector<std::string>>> toolkits;
  for (const auto& b : bullet_section(text, "Toolkits:")) {
    auto colon = b.find(": ");
    if (colon == std::string::npos) continue;
    toolkits.emplace_back(b.substr(0, colon), provided_capabilities(std::string_view(b).substr(colon + 2)));
  }
  if (toolkits.empty()) return std::string(no_plan);

  std::set<std::pair<int, std::string>> excluded;
  static const std::regex excl_re(R"(step (\d+): (\S+))");
  for (const auto& b : bullet_section(text, "Excluded toolkits:")) {
    std::smatch m;
    if (std::regex_match(b, m, excl_re)) excluded.emplace(std::stoi(m[1].str()), m[2].str());
  }

  // Toolkit per step of the most recent previous plan.
  std::map<int, std::pair<std::string, std::string>> last;
  if (replanning) {
    static const std::regex step_re(R"(Step (\d+): (\S+) ?(.*))");
    bool in_last = false;
    for (const auto& line : split_lines(text)) {
      if (starts_with(line, "Previous plan ")) {
        last.clear();
        in_last = true;
        continue;
      }
      std::smatch m;
      if (in_last && std::regex_match(line, m, step_re)) {
        last[std::stoi(m[1].str())] = {m[2].str(), m[3].str()};
      } else {
        in_last = false;
      }
    }
  }

  Rng rng(req.seed.value_or(0));
  auto covering = [&](const std::string& cap, int step) {
    std::vector<std::string> out;
    for (const auto& [label, provided] : toolkits) {
      if (std::find(provided.begin(), provided.end(), cap) != provided.end() && !excluded.count({step, label})) {
        out.push_back(label);
      }
    }
    return out;
  };

  std::vector<std::string> planned;
  for (const auto& cap : caps) {
    bool any = false;
    for (const auto& [label, provided] : toolkits) {
      any = any || std::find(provided.begin(), provided.end(), cap) != provided.end();
    }
    if (any) planned.push_back(cap);
  }

  std::string out = "Plan based on the toolkit functionalities.\n";
  if (planned.empty()) {
    // Nothing matches: hand the whole request to one toolkit.
    for (const auto& [label, _] : toolkits) {
      if (!excluded.count({1, label})) return out + "Step 1: " + label + " " + join(caps, " -> ") + "\n";
    }
    return std::string(no_plan);
  }
  for (std::size_t i = 0; i < planned.size(); ++i) {
    const int step = static_cast<int>(i + 1);
    auto candidates = covering(planned[i], step);
    if (candidates.empty()) return std::string(no_plan);
    std::string choice;
    auto it = last.find(step);
    if (it != last.end() && it->second.second == planned[i] &&
        std::find(candidates.begin(), candidates.end(), it->second.first) != candidates.end()) {
      choice = it->second.first;
    } else if (!replanning) {
      choice = candidates.front();
    } else {
      choice = candidates[rng.below(candidates.size())];
    }
    out += "Step " + std::to_string(step) + ": " + choice + " " + planned[i] + "\n";
  }
  return out;
}

inline std::string explanation_response(const ChatRequest& req) {
  const auto text = req.text();
  if (auto cap = capability_in_docs(text)) return "Provides " + *cap + " functionality.";
  auto desc = line_after(text, "Description: ").value_or("general");
  return "Provides " + trim(desc) + " functionality.";
}

inline std::string description_response(const ChatRequest& req) {
  const auto lines = bullet_section(req.text(), "API explanations:");
  std::map<std::string, int> counts;
  std::vector<std::string> order;
  for (const auto& l : lines) {
    for (const auto& cap : provided_capabilities(l)) {
      if (counts[cap]++ == 0) order.push_back(cap);
    }
  }
  std::vector<std::string> dominant;
  for (const auto& cap : order) {
    if (2 * counts[cap] >= static_cast<int>(lines.size())) dominant.push_back(cap);
  }
  if (dominant.empty()) return "Mixed-purpose toolkit with no dominant functionality.";
  return "Provides " + join(dominant, ", ") + " functionality.";
}

inline std::string params_response(const ChatRequest& req) {
  const auto text = req.text();
  std::string intent;
  if (auto goal = last_line_after(text, "Step ")) {
    auto pos = goal->find("goal: ");
    if (pos != std::string::npos) {
      auto g = goal->substr(pos + 6);
      auto words = split(g.substr(0, g.find("->")), ' ');
      for (const auto& w : words) {
        if (!trim(w).empty()) {
          intent = trim(w);
          break;
        }
      }
    }
  }
  return call_params(intent, question_of(text));
}

inline std::string state_response(const ChatRequest& req) {
  return "state:" + last_line_after(req.text(), "Result: ").value_or("");
}

inline std::string final_response(const ChatRequest& req) {
  auto states = bullet_section(req.text(), "Intermediate states:");
  if (states.empty()) return "Final answer: nothing was found.";
  return "Final answer: " + join(states, "; ");
}

inline std::string react_response(const ChatRequest& req, const SimModelConfig& cfg) {
  const auto text = req.text();
  const auto caps = requested_capabilities(question_of(text));
  const auto apis = api_capabilities(bullet_section(text, "APIs:"));
  std::vector<std::string> outputs;
  std::size_t done = 0;
  for (const auto& obs : bullet_section(text, "Observations so far:")) {
    auto arrow = obs.find(" -> ");
    if (arrow == std::string::npos) continue;
    auto output = obs.substr(arrow + 4);
    outputs.push_back(output);
    if (done < caps.size() && starts_with(output, caps[done] + "=")) ++done;
  }
  if (done == caps.size()) return "Finish: " + join(outputs, "; ");
  const auto& cap = caps[done];
  std::vector<std::string> candidates;
  for (const auto& [id, c] : apis) {
    if (c == cap) candidates.push_back(id);
  }
  if (candidates.empty()) return "Finish: no suitable API was found.";
  Rng rng(req.seed.value_or(0));
  std::string choice = rng.uniform() < cfg.hallucination_rate ? invented_name(cap) : candidates[rng.below(candidates.size())];
  return "Action: " + choice + "\nAction Input: " + call_params(cap, question_of(text));
}

inline std::string dfsdt_response(const ChatRequest& req, const SimModelConfig& cfg) {
  const auto text = req.text();
  const auto caps = requested_capabilities(question_of(text));
  const auto apis = api_capabilities(bullet_section(text, "APIs:"));
  std::set<std::string> failed;
  for (const auto& f : bullet_section(text, "Failed calls:")) failed.insert(f.substr(0, f.find(':')));

  Rng rng(req.seed.value_or(0));
  std::string out = "Path avoiding the failed calls.\n";
  int step = 0;
  for (const auto& cap : caps) {
    std::vector<std::string> all, fresh;
    for (const auto& [id, c] : apis) {
      if (c != cap) continue;
      all.push_back(id);
      if (!failed.count(id)) fresh.push_back(id);
    }
    if (all.empty()) continue;
    if (fresh.empty()) return "No viable path remains.";
    std::string choice = rng.uniform() < cfg.hallucination_rate ? invented_name(cap) : fresh[rng.below(fresh.size())];
    out += "Step " + std::to_string(++step) + ": " + choice + " " + cap + "\n";
  }
  if (step == 0) return "No viable path remains.";
  return out;
}

}  // namespace sim

/// The simulated model as a scripted provider. Rules match on fixed phrases
/// of the prompts; the first match wins.
inline std::shared_ptr<ScriptedProvider> make_sim_model(const SimModelConfig& cfg = {}) {
  auto p = std::make_shared<ScriptedProvider>("sim");
  p->on("Write a brief explanation of its functionality", sim::explanation_response);
  p->on("Write a short functionality description of the toolkit", sim::description_response);
  p->on("Cross-Toolkit plan exploration", [](const ChatRequest& r) { return sim::plan_response(r, true); });
  p->on("outline your solution plan", [](const ChatRequest& r) { return sim::plan_response(r, false); });
  p->on("Answer the user's question by calling one API at a time",
        [cfg](const ChatRequest& r) { return sim::react_response(r, cfg); });
  p->on("Plan a sequence of API calls", [cfg](const ChatRequest& r) { return sim::dfsdt_response(r, cfg); });
  p->on("Summarize the state reached", sim::state_response);
  p->on("Respond with the call parameters as a JSON object", sim::params_response);
  p->on("provide the final answer", sim::final_response);
  return p;
}

}  // namespace toolplanner
