#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dualmpc/harness.hpp"

using namespace dualmpc;

namespace {

constexpr int kExitHardFailure = 2;

struct Overrides {
  std::vector<std::string> items;  // name=value

  void add_to(CLI::App* app) {
    app->add_option("--set", items, "Override a scenario parameter, e.g. --set horizon=10")
        ->type_name("NAME=VALUE");
  }
  void apply(ScenarioConfig& cfg) const {
    for (const auto& s : items) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected NAME=VALUE: " + s);
      set_parameter(cfg, s.substr(0, eq), std::stod(s.substr(eq + 1)));
    }
  }
};

PlannerConfig planner_for(const ScenarioConfig& cfg, const std::string& name, double ed_lambda) {
  PlannerConfig pc = cfg.planner;
  pc.kind = planner_kind_from_string(name);
  if (pc.kind == PlannerKind::ED) {
    if (pc.smpc.info_weight <= 0.0) pc.smpc.info_weight = ed_lambda;
  } else {
    pc.smpc.info_weight = 0.0;
  }
  return pc;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::uint64_t> read_seeds(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open seeds file '" + path + "'");
  std::vector<std::uint64_t> seeds;
  std::string line;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream in(line);
    std::uint64_t s;
    while (in >> s) seeds.push_back(s);
  }
  if (seeds.empty()) throw std::runtime_error("seeds file '" + path + "' has no seeds");
  return seeds;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
}

void print_summary(const BenchmarkMetrics& m) {
  std::printf("%-24s %-4s trials=%d collisions=%d (%.1f%%) failed=%d J=%.3f±%.3f "
              "entropy_reduced=%.0f%% solve[mean=%.3fs p95=%.3fs]\n",
              m.scenario.c_str(), m.planner.c_str(), m.trials, m.collisions,
              100.0 * m.collision_rate, m.failed, m.mean_cost, m.std_cost,
              100.0 * m.entropy_reduced, m.solve_time.mean, m.solve_time.p95);
  std::fflush(stdout);
}

int cmd_simulate(const std::string& scenario, const Overrides& ov, const std::string& planner,
                 double ed_lambda, std::uint64_t seed, std::uint64_t trial, const std::string& out,
                 bool quiet) {
  ScenarioConfig cfg = load_scenario(scenario);
  ov.apply(cfg);
  const auto r = run_trial(cfg, planner_for(cfg, planner, ed_lambda), seed, trial);
  if (!out.empty()) export_trace(r.trace, out);
  const auto& m = r.metrics;
  if (!quiet) {
    std::printf("scenario=%s planner=%s seed=%llu trial=%llu steps=%zu\n", cfg.name.c_str(),
                r.trace.planner.c_str(), static_cast<unsigned long long>(seed),
                static_cast<unsigned long long>(trial), r.trace.records.size() - 1);
    std::printf("closed_loop_cost=%.6f collision=%d", m.closed_loop_cost, m.collision ? 1 : 0);
    if (m.collision) std::printf(" collision_step=%d", m.collision_step);
    std::printf(" soft_failures=%d entropy=%.4f->%.4f\n", m.soft_failures,
                m.mode_entropy.front(), m.mode_entropy.back());
  }
  if (m.failed) {
    std::fprintf(stderr, "hard failure: %s\n", m.failure.c_str());
    return kExitHardFailure;
  }
  return 0;
}

int cmd_benchmark(const std::string& scenario, const Overrides& ov,
                  const std::vector<std::string>& planners, double ed_lambda, int trials,
                  std::uint64_t seed, const std::string& seeds_file, const std::string& sweep,
                  int jobs, const std::string& out) {
  ScenarioConfig base = load_scenario(scenario);
  ov.apply(base);
  const auto seeds = seeds_file.empty() ? std::vector<std::uint64_t>{} : read_seeds(seeds_file);

  std::string sweep_param;
  std::vector<double> sweep_values;
  if (!sweep.empty()) {
    const auto colon = sweep.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--sweep", "expected PARAM:V1,V2,...");
    sweep_param = sweep.substr(0, colon);
    for (const auto& v : split(sweep.substr(colon + 1), ',')) sweep_values.push_back(std::stod(v));
    if (sweep_values.empty()) throw CLI::ValidationError("--sweep", "no values given");
  }

  nlohmann::json results = nlohmann::json::array();
  bool any_failed = false;
  const size_t points = sweep_values.empty() ? 1 : sweep_values.size();
  for (size_t k = 0; k < points; ++k) {
    ScenarioConfig cfg = base;
    if (!sweep_values.empty()) set_parameter(cfg, sweep_param, sweep_values[k]);
    for (const auto& name : planners) {
      const auto m = run_benchmark(cfg, planner_for(cfg, name, ed_lambda), trials, seed, seeds, jobs);
      print_summary(m);
      auto j = nlohmann::json::parse(metrics_to_json(m));
      if (!sweep_values.empty()) j["sweep"] = {{"param", sweep_param}, {"value", sweep_values[k]}};
      results.push_back(j);
      any_failed = any_failed || m.failed > 0;
    }
  }
  if (!out.empty()) write_text(out, results.dump(2) + "\n");
  return any_failed ? kExitHardFailure : 0;
}

int cmd_export_plot(const std::vector<std::string>& traces, const std::string& format,
                    const std::string& out) {
  if (format != "svg") throw CLI::ValidationError("--format", "only svg is supported");
  std::vector<TrialTrace> loaded;
  for (const auto& t : traces) loaded.push_back(import_trace(t));
  for (const auto& p : export_plot(loaded, out)) std::printf("%s\n", p.c_str());
  return 0;
}

int cmd_inspect_tree(const std::string& scenario, const Overrides& ov, bool problem,
                     const std::string& out) {
  ScenarioConfig cfg = load_scenario(scenario);
  ov.apply(cfg);
  const DynamicsModel model = cfg.model();
  std::vector<HumanPrediction> preds;
  const int stages = std::max(cfg.planner.smpc.horizon, 1);
  for (const auto& h : cfg.humans) preds.push_back(HumanPredictor(model, h.behavior).predict(cfg.x0, stages));
  SmpcOptions o = cfg.planner.smpc;
  o.info_weight = 0.0;
  PlanningProblem p = assemble(model, cfg.cost, cfg.failure, preds, cfg.priors(), cfg.x0, o);
  std::string text;
  if (problem) {
    const auto ws = warm_start(p, cfg.planner.ce_warm_start);
    text = dump_problem(p, ws.w);
  } else {
    text = export_tree(p.tree);
  }
  write_text(out, text + "\n");
  if (!out.empty() && out != "-")
    std::printf("%d nodes, %zu leaves -> %s\n", p.tree.size(), p.tree.leaves.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-control stochastic MPC for interactive driving"};
  app.require_subcommand(1);

  std::string scenario = "example1";
  std::string planner = "ID";
  double ed_lambda = 0.5;
  std::uint64_t seed = 1;
  std::uint64_t trial = 0;
  std::string out;
  bool quiet = false;
  Overrides sim_ov, bench_ov, tree_ov, dump_ov;

  auto* sim = app.add_subcommand("simulate", "Run one closed-loop trial");
  sim->add_option("--scenario", scenario, "Preset name or scenario file")->capture_default_str();
  sim->add_option("--planner", planner, "ID, ED, ND, CE or ISA")->capture_default_str();
  sim->add_option("--lambda", ed_lambda, "ED information weight when the config has none")
      ->capture_default_str();
  sim->add_option("--seed", seed, "Master seed")->capture_default_str();
  sim->add_option("--trial", trial, "Trial index under the master seed")->capture_default_str();
  sim->add_option("--out", out, "Trace file (CSV)");
  sim->add_flag("--quiet", quiet, "No summary on stdout");
  sim_ov.add_to(sim);

  std::vector<std::string> planners{"ID"};
  int trials = 20;
  std::string seeds_file, sweep;
  int jobs = 1;
  auto* bench = app.add_subcommand("benchmark", "Monte-Carlo trials and aggregate metrics");
  bench->add_option("--scenario", scenario, "Preset name or scenario file")->capture_default_str();
  bench->add_option("--planner", planners, "One or more planners (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--lambda", ed_lambda, "ED information weight when the config has none")
      ->capture_default_str();
  bench->add_option("--trials", trials, "Trials 0..N-1 of the master seed")->capture_default_str();
  bench->add_option("--seed", seed, "Master seed")->capture_default_str();
  bench->add_option("--seeds-file", seeds_file, "One master seed per trial, whitespace separated");
  bench->add_option("--sweep", sweep, "Parameter sweep PARAM:V1,V2,...");
  bench->add_option("--jobs", jobs, "Parallel trials")->capture_default_str();
  bench->add_option("--out", out, "Metrics file (JSON)");
  bench_ov.add_to(bench);

  std::vector<std::string> trace_files;
  std::string format = "svg";
  std::string stem = "plot";
  auto* plot = app.add_subcommand("export-plot", "Render traces as vector graphics");
  plot->add_option("--trace", trace_files, "Trace file(s)")->required();
  plot->add_option("--format", format, "Output format")->capture_default_str();
  plot->add_option("--out", stem, "Output path stem")->capture_default_str();

  bool problem = false;
  auto* tree = app.add_subcommand("inspect-tree", "Dump the scenario tree built at the initial state");
  tree->add_option("--scenario", scenario, "Preset name or scenario file")->capture_default_str();
  tree->add_flag("--problem", problem, "Dump the assembled problem at its warm start instead");
  tree->add_option("--out", out, "Output file (JSON), stdout when omitted");
  tree_ov.add_to(tree);

  auto* dump = app.add_subcommand("dump-config", "Write a scenario as a JSON file");
  dump->add_option("--scenario", scenario, "Preset name or scenario file")->capture_default_str();
  dump->add_option("--out", out, "Output file, stdout when omitted");
  dump_ov.add_to(dump);

  auto* list = app.add_subcommand("list", "List presets and tunable parameters");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(scenario, sim_ov, planner, ed_lambda, seed, trial, out, quiet);
    if (*bench)
      return cmd_benchmark(scenario, bench_ov, planners, ed_lambda, trials, seed, seeds_file, sweep,
                           jobs, out);
    if (*plot) return cmd_export_plot(trace_files, format, stem);
    if (*tree) return cmd_inspect_tree(scenario, tree_ov, problem, out);
    if (*dump) {
      ScenarioConfig cfg = load_scenario(scenario);
      dump_ov.apply(cfg);
      write_text(out, scenario_to_json(cfg));
      return 0;
    }
    if (*list) {
      std::printf("scenarios:");
      for (const auto& s : scenario_names()) std::printf(" %s", s.c_str());
      std::printf("\nparameters:");
      for (const auto& s : parameter_names()) std::printf(" %s", s.c_str());
      std::printf("\n");
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitHardFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
