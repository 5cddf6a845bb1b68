#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "toolplanner/catalog.hpp"
#include "toolplanner/clustering.hpp"
#include "toolplanner/embedding.hpp"
#include "toolplanner/evaluation.hpp"
#include "toolplanner/experiments.hpp"
#include "toolplanner/remote.hpp"
#include "toolplanner/simenv.hpp"
#include "toolplanner/simmodel.hpp"
#include "toolplanner/trace.hpp"

namespace toolplanner {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_usage = 2 };

namespace cli {

struct ProviderOptions {
  std::string provider = "sim";
  std::string base_url = ProviderConfig{}.base_url;
  std::string planning_model = "gpt-4";
  std::string behavior_model;  // empty: same as the planning model
  double temperature = ProviderConfig{}.temperature;

  void add_to(CLI::App& app) {
    app.add_option("--provider", provider, "Model provider")->check(CLI::IsMember({"sim", "remote"}));
    app.add_option("--base-url", base_url, "Chat completion endpoint for --provider remote");
    app.add_option("--planning-model", planning_model, "Planning model name for --provider remote");
    app.add_option("--behavior-model", behavior_model, "Behavior model name (defaults to the planning model)");
    app.add_option("--temperature", temperature, "Sampling temperature")->check(CLI::Range(0.0, 2.0));
  }

  ProviderRoles roles(double hallucination_rate, std::ostream& log) const {
    if (provider == "sim") return ProviderRoles::same(make_sim_model({hallucination_rate}));
    auto make = [&](const std::string& model) {
      ProviderConfig pc;
      pc.base_url = base_url;
      pc.model = model;
      pc.temperature = temperature;
      auto p = std::make_shared<RemoteChatProvider>(pc);
      log << "using remote provider " << p->describe() << "\n";
      return p;
    };
    auto planning = make(planning_model);
    if (behavior_model.empty() || behavior_model == planning_model) return ProviderRoles::same(planning);
    return ProviderRoles{planning, make(behavior_model)};
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["provider"] = provider;
    if (provider == "remote") {
      j["base_url"] = base_url;
      j["planning_model"] = planning_model;
      j["behavior_model"] = behavior_model.empty() ? planning_model : behavior_model;
      j["temperature"] = temperature;
    }
    return j;
  }
};

struct ScenarioOptions {
  std::string scenario_path;
  std::string profile = "default";
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App& app) {
    app.add_option("--scenario", scenario_path, "Scenario file")->check(CLI::ExistingFile);
    app.add_option("--profile", profile, "Generated scenario profile when no file is given")
        ->check(CLI::IsMember({"default", "zero", "ksweep"}));
    app.add_option("--seed", seed, "Scenario seed");
  }

  Scenario load() const {
    if (!scenario_path.empty()) {
      auto sc = load_scenario(scenario_path);
      if (seed && *seed != sc.config.seed) {
        throw Error(ErrorCode::config_error, "--seed disagrees with the seed recorded in the scenario file");
      }
      return sc;
    }
    return generate_scenario(config());
  }

  ScenarioConfig config() const {
    const auto s = seed.value_or(0);
    if (profile == "zero") return zero_failure_profile(s);
    if (profile == "ksweep") return k_sweep_profile(s);
    return default_bench_profile(s);
  }
};

inline Budget budget_from(std::uint64_t calls, std::uint64_t replans, std::int64_t wall) { return {calls, replans, wall}; }

inline int fail(std::ostream& err, const std::exception& e) {
  err << "error: " << e.what() << "\n";
  return exit_failure;
}

}  // namespace cli

/// Entry point for the command-line tool. Output goes to `out`, diagnostics
/// to `err`. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Toolkit-level planning and exploration over clustered tools"};
  app.require_subcommand(1);

  // cluster ------------------------------------------------------------------
  auto* cluster_cmd = app.add_subcommand("cluster", "Cluster a tool catalog into toolkits");
  std::string catalog_path, catalog_format = "flat", embeddings_path, partition_out, cluster_method = "kmeans";
  std::optional<std::size_t> k;
  std::string k_profile_name;
  ClusteringConfig cc;
  int explain_jobs = 1;
  cli::ProviderOptions cluster_provider;
  cluster_cmd->add_option("--catalog", catalog_path, "Tool catalog (JSON)")->required()->check(CLI::ExistingFile);
  cluster_cmd->add_option("--catalog-format", catalog_format, "flat or toolbench")
      ->check(CLI::IsMember({"flat", "json", "toolbench"}));
  cluster_cmd->add_option("--embeddings", embeddings_path, "Embedding file")->required()->check(CLI::ExistingFile);
  cluster_cmd->add_option("--k", k, "Number of toolkits")->check(CLI::PositiveNumber);
  cluster_cmd->add_option("--k-profile", k_profile_name, "Named k: toolbench or apibench")
      ->check(CLI::IsMember({"toolbench", "apibench"}));
  cluster_cmd->add_option("--method", cluster_method, "kmeans or dbscan")->check(CLI::IsMember({"kmeans", "dbscan"}));
  cluster_cmd->add_option("--eps", cc.eps, "DBSCAN radius in cosine distance")->check(CLI::PositiveNumber);
  cluster_cmd->add_option("--min-pts", cc.min_pts, "DBSCAN core-point threshold")->check(CLI::PositiveNumber);
  cluster_cmd->add_option("--seed", cc.seed, "k-means++ seed");
  cluster_cmd->add_option("--restarts", cc.restarts, "k-means restarts")->check(CLI::PositiveNumber);
  cluster_cmd->add_option("--max-iter", cc.max_iter, "Lloyd iteration cap")->check(CLI::PositiveNumber);
  cluster_cmd->add_flag("--normalize", cc.normalize, "Scale vectors to unit length before k-means");
  cluster_cmd->add_option("--jobs", explain_jobs, "Concurrent explanation requests")->check(CLI::PositiveNumber);
  cluster_cmd->add_option("--out", partition_out, "Partition file to write")->required();
  cluster_provider.add_to(*cluster_cmd);

  // plan ---------------------------------------------------------------------
  auto* plan_cmd = app.add_subcommand("plan", "Print the initial toolkit plan for a task");
  cli::ScenarioOptions plan_scenario;
  cli::ProviderOptions plan_provider;
  std::string task_id, query;
  std::optional<std::size_t> plan_k;
  plan_scenario.add_to(*plan_cmd);
  plan_provider.add_to(*plan_cmd);
  plan_cmd->add_option("--task", task_id, "Task id from the scenario");
  plan_cmd->add_option("--query", query, "Free-form task text instead of --task");
  plan_cmd->add_option("--k", plan_k, "Number of toolkits")->check(CLI::PositiveNumber);

  // run ----------------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "Run episodes and write traces and reports");
  cli::ScenarioOptions run_scenario;
  cli::ProviderOptions run_provider;
  std::string methods = "tool_planner,react,dfsdt", out_dir, reference = "react";
  std::optional<std::size_t> run_k;
  std::size_t episodes = 0;
  int jobs = 1;
  std::uint64_t max_calls = Budget{}.max_tool_calls, max_replans = Budget{}.max_replans;
  std::int64_t max_wall = Budget{}.max_wall_ms;
  bool timing = false;
  run_scenario.add_to(*run_cmd);
  run_provider.add_to(*run_cmd);
  run_cmd->add_option("--method,--methods", methods, "Comma-separated methods");
  run_cmd->add_option("--k", run_k, "Number of toolkits")->check(CLI::PositiveNumber);
  auto* episodes_opt = run_cmd->add_option("--episodes", episodes, "Episodes to run (default: all tasks)");
  episodes_opt->check(CLI::PositiveNumber);
  run_cmd->add_option("--jobs", jobs, "Parallel episodes")->check(CLI::PositiveNumber);
  run_cmd->add_option("--reference", reference, "Reference method for win rates");
  run_cmd->add_option("--max-tool-calls", max_calls, "Budget: tool calls per episode")->check(CLI::PositiveNumber);
  run_cmd->add_option("--max-replans", max_replans, "Budget: replans per episode");
  run_cmd->add_option("--max-wall-ms", max_wall, "Budget: wall-clock per episode")->check(CLI::PositiveNumber);
  run_cmd->add_flag("--timing", timing, "Add wall-clock columns to the report");
  run_cmd->add_option("--out", out_dir, "Output directory")->required();

  // bench --------------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "Compare all methods and check the expected orderings");
  std::string bench_profile = "default", bench_seeds = "1,2,3", bench_out;
  std::size_t bench_episodes = 200;
  int bench_jobs = 1;
  bench_cmd->add_option("--profile", bench_profile, "default or zero")->check(CLI::IsMember({"default", "zero"}));
  bench_cmd->add_option("--seeds", bench_seeds, "Comma-separated master seeds");
  bench_cmd->add_option("--episodes", bench_episodes, "Episodes per seed")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--jobs", bench_jobs, "Parallel episodes")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--out", bench_out, "Directory for bench reports");

  // report -------------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "Render a JSON report as json, csv or markdown");
  std::string report_in, report_format = "markdown", report_out;
  report_cmd->add_option("--input", report_in, "report.json")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--format", report_format, "json, csv or markdown")
      ->check(CLI::IsMember({"json", "csv", "markdown", "md"}));
  report_cmd->add_option("--out", report_out, "Output file (default: stdout)");

  // inspect ------------------------------------------------------------------
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a trace and check its invariants");
  std::string inspect_trace, inspect_scenario, inspect_partition;
  inspect_cmd->add_option("--trace", inspect_trace, "Trace file")->check(CLI::ExistingFile);
  inspect_cmd->add_option("--scenario", inspect_scenario, "Scenario file")->check(CLI::ExistingFile);
  inspect_cmd->add_option("--partition", inspect_partition, "Partition file (enables the exhaustion check)")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return exit_usage;
  }

  try {
    if (cluster_cmd->parsed()) {
      cc.method = parse_cluster_method(cluster_method);
      if (cc.method == ClusterMethod::kmeans) {
        if (k) {
          cc.k = *k;
        } else if (!k_profile_name.empty()) {
          cc.k = *toolplanner::k_profile(k_profile_name);
        } else {
          err << "usage error: k-means needs --k or --k-profile\n";
          return exit_usage;
        }
      }
      auto registry = ingest_catalog(catalog_path, parse_catalog_format(catalog_format));
      auto embeddings = load_embeddings(embeddings_path);
      auto roles = cluster_provider.roles(0.0, err);
      auto result = build_toolkits(registry, embeddings, cc, *roles.planning_model, explain_jobs);
      write_file(partition_out, serialize_partition(cc, result));
      out << "wrote " << result.toolkits.size() << " toolkits to " << partition_out << "\n";
      return exit_ok;
    }

    if (plan_cmd->parsed()) {
      auto scenario = plan_scenario.load();
      ExperimentConfig c;
      c.scenario = scenario.config;
      c.k = plan_k;
      Task task;
      if (!query.empty()) {
        task = {"query", query};
      } else {
        auto it = std::find_if(scenario.tasks.begin(), scenario.tasks.end(),
                               [&](const SimTask& t) { return task_id.empty() || t.task_id == task_id; });
        if (it == scenario.tasks.end()) throw Error(ErrorCode::config_error, "no task " + task_id);
        task = it->task();
      }
      auto world = build_world(std::move(scenario), c);
      if (plan_provider.provider == "remote") world.roles = plan_provider.roles(0.0, err);
      auto plan = make_plan(task, offers_from(world.clusters.toolkits), world.roles, c.scenario.seed);
      out << "Task " << task.task_id << ": " << task.query << "\n";
      for (const auto& tk : world.clusters.toolkits) out << "  " << tk.label << ": " << tk.functionality << "\n";
      out << plan.to_text();
      return exit_ok;
    }

    if (run_cmd->parsed()) {
      auto scenario = run_scenario.load();
      ExperimentConfig c;
      c.scenario = scenario.config;
      c.k = run_k.value_or(c.matched_k());
      c.clustering.k = *c.k;
      c.budget = cli::budget_from(max_calls, max_replans, max_wall);
      c.methods = parse_methods(methods);
      c.episodes = episodes;
      c.jobs = jobs;
      c.reference = reference;
      if (c.episodes > scenario.tasks.size()) {
        throw Error(ErrorCode::config_error, "--episodes exceeds the " + std::to_string(scenario.tasks.size()) + " tasks");
      }

      auto world = build_world(scenario, c);
      if (run_provider.provider == "remote") {
        world.roles = run_provider.roles(scenario.config.probability(FailureKind::api_hallucinated), err);
      }
      const std::size_t count = c.episodes == 0 ? world.scenario.tasks.size() : c.episodes;
      const std::filesystem::path dir(out_dir);
      std::vector<std::pair<std::string, std::vector<RunRecord>>> records;
      std::vector<std::pair<std::string, double>> wall;
      for (auto m : c.methods) {
        const auto name = std::string(to_string(m));
        const auto t0 = std::chrono::steady_clock::now();
        auto traces = run_episodes(world, m, count, c.budget, c.jobs);
        const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        wall.emplace_back(name, ms / static_cast<double>(count));
        std::vector<RunRecord> recs;
        for (const auto& t : traces) {
          const auto rel = std::filesystem::path("traces") / name / (t.task_id + ".jsonl");
          write_file(dir / rel, serialize_trace(t));
          recs.push_back(record_of(t, rel.generic_string()));
        }
        records.emplace_back(name, std::move(recs));
      }
      auto report = build_report(records, reference_for(c), config_digest(c));
      if (timing) {
        for (auto& m : report.methods) {
          for (const auto& [name, ms] : wall) {
            if (name == m.method) m.mean_wall_ms = ms;
          }
        }
      }
      emit_report(report, ReportFormat::json, dir / "report.json");
      emit_report(report, ReportFormat::csv, dir / "report.csv");
      emit_report(report, ReportFormat::markdown, dir / "report.md");

      nlohmann::ordered_json echo;
      echo["subcommand"] = "run";
      echo["scenario_file"] = run_scenario.scenario_path;
      echo["profile"] = run_scenario.scenario_path.empty() ? run_scenario.profile : "";
      echo["scenario_digest"] = digest(serialize_scenario(scenario));
      echo["experiment"] = to_json(c);
      echo["config_digest"] = config_digest(c);
      echo["provider"] = run_provider.to_json();
      echo["timing"] = timing;
      write_file(dir / "config.json", echo.dump(2) + "\n");

      out << render_report(report, ReportFormat::markdown);
      return exit_ok;
    }

    if (bench_cmd->parsed()) {
      bool all_ok = true;
      nlohmann::ordered_json summary = nlohmann::ordered_json::array();
      for (const auto& s : split(bench_seeds, ',')) {
        if (trim(s).empty()) continue;
        const std::uint64_t seed = std::stoull(trim(s));
        BenchOutcome b;
        if (bench_profile == "zero") {
          ExperimentConfig c;
          c.scenario = zero_failure_profile(seed);
          c.episodes = bench_episodes;
          c.jobs = bench_jobs;
          b.seed = seed;
          b.report = run_experiment(c, "seed=" + std::to_string(seed)).report;
          for (const auto& m : b.report.methods) {
            b.checks.push_back({"pass(" + m.method + ") == 1", m.pass_rate == 1.0, fixed4(m.pass_rate)});
          }
        } else {
          auto profile = default_bench_profile(seed);
          b = run_bench(profile, bench_episodes, Budget{}, bench_jobs);
        }
        out << render_report(b.report, ReportFormat::markdown) << "\n";
        nlohmann::ordered_json entry;
        entry["seed"] = seed;
        entry["report"] = to_json(b.report);
        entry["checks"] = nlohmann::ordered_json::array();
        for (const auto& ch : b.checks) {
          out << (ch.passed ? "PASS " : "FAIL ") << ch.name << " (" << ch.detail << ")\n";
          entry["checks"].push_back({{"name", ch.name}, {"passed", ch.passed}, {"detail", ch.detail}});
        }
        out << "\n";
        all_ok = all_ok && b.passed();
        summary.push_back(std::move(entry));
      }
      if (!bench_out.empty()) write_file(std::filesystem::path(bench_out) / "bench.json", summary.dump(2) + "\n");
      return all_ok ? exit_ok : exit_failure;
    }

    if (report_cmd->parsed()) {
      auto report = report_from_json(nlohmann::json::parse(read_file(report_in)));
      auto text = render_report(report, parse_report_format(report_format));
      if (report_out.empty()) {
        out << text;
      } else {
        write_file(report_out, text);
      }
      return exit_ok;
    }

    if (inspect_cmd->parsed()) {
      if (inspect_trace.empty() && inspect_scenario.empty()) {
        err << "usage error: inspect needs --trace or --scenario\n";
        return exit_usage;
      }
      bool clean = true;
      if (!inspect_scenario.empty()) {
        auto sc = load_scenario(inspect_scenario);
        out << "scenario seed " << sc.config.seed << ": " << sc.tools.size() << " tools, " << sc.capabilities.size()
            << " capabilities, " << sc.tasks.size() << " tasks\n";
      }
      if (!inspect_trace.empty()) {
        auto t = parse_trace(read_file(inspect_trace));
        out << t.method << " " << t.task_id << " seed " << t.seed << ": " << to_string(t.outcome) << "\n";
        out << "  tool_calls=" << t.counters.tool_calls << " replans=" << t.counters.replans
            << " in_toolkit_retries=" << t.counters.in_toolkit_retries << " cost_units=" << t.counters.cost_units
            << " ledger=" << t.ledger.size() << "\n";
        std::vector<std::pair<std::string, std::string>> checks = {
            {"counters", check_counters(t)},
            {"prefix_preservation", check_prefix_preservation(t)},
            {"ledger_monotone", check_ledger_monotone(t)},
        };
        if (t.method == "tool_planner") checks.emplace_back("plan_stability", check_plan_stability(t));
        if (!inspect_partition.empty() && t.method == "tool_planner") {
          auto p = parse_partition(read_file(inspect_partition));
          std::map<std::string, std::vector<std::string>> members;
          for (const auto& tk : p.result.toolkits) members[tk.label] = tk.members;
          checks.emplace_back("exhaustion_before_replan", check_exhaustion_before_replan(t, members));
        }
        for (const auto& [name, problem] : checks) {
          out << "  " << (problem.empty() ? "ok   " : "FAIL ") << name << (problem.empty() ? "" : ": " + problem)
              << "\n";
          clean = clean && problem.empty();
        }
      }
      return clean ? exit_ok : exit_failure;
    }
  } catch (const std::exception& e) {
    return cli::fail(err, e);
  }
  return exit_usage;
}

}  // namespace toolplanner
