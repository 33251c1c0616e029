#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dualmpc/harness.hpp"

using namespace dualmpc;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

// Example 1 with every random source switched off.
ScenarioConfig deterministic_highway(int t_sim) {
  ScenarioConfig cfg = example1_highway();
  cfg.t_sim = t_sim;
  cfg.human_noise = false;
  cfg.disturbance = false;
  cfg.x0_spread.setZero();
  auto& h = cfg.humans[0];
  h.mode_weights = Vec{{1.0, 0.0}};
  h.theta_lo = h.theta_hi = Vec{{0.3, 0.7}};
  h.switch_prob = 0.0;
  return cfg;
}

ScenarioConfig short_highway(int t_sim) {
  ScenarioConfig cfg = example1_highway();
  cfg.t_sim = t_sim;
  return cfg;
}

// Tag balance and a single root element; enough to catch truncated or
// interleaved output.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  size_t i = 0, roots = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const size_t j = s.find('>', i);
    if (j == std::string::npos) return false;
    const std::string tag = s.substr(i + 1, j - i - 1);
    i = j + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    if (stack.empty()) ++roots;
    if (tag.back() == '/') continue;
    stack.push_back(tag.substr(0, tag.find_first_of(" \n\t")));
  }
  return stack.empty() && roots == 1;
}

}  // namespace

TEST_CASE("shipped scenarios") {
  const auto e1 = example1_highway();
  const auto e2 = example2_intersection();
  const auto e3 = example3_multiagent();
  CHECK(e1.humans.size() == 1);
  CHECK(e1.humans[0].behavior.num_modes() == 2);
  CHECK(e1.humans[0].behavior.modes == std::vector<std::string>{"l", "r"});
  CHECK(e2.humans[0].behavior.num_modes() == 4);
  CHECK(e2.humans[0].behavior.modes == std::vector<std::string>{"N", "p", "w", "o"});
  CHECK(e3.humans.size() == 3);
  CHECK(e3.model().num_humans() == 3);
  CHECK(e1.t_sim == 50);
  CHECK(e1.robot.dt == doctest::Approx(0.2));
  for (const auto& cfg : {e1, e2, e3}) {
    CHECK_NOTHROW(cfg.validate());
    for (const auto& b : cfg.priors()) CHECK(std::abs(b.p.sum() - 1.0) < 1e-12);
  }
  CHECK(scenario_by_name("example2").name == e2.name);
  CHECK_THROWS_AS(scenario_by_name("example9"), ContractViolation);
}

TEST_CASE("shipped config files match the presets") {
  for (const auto& name : scenario_names()) {
    const std::string path = std::string(DUALMPC_SOURCE_DIR) + "/configs/" + name + ".json";
    const ScenarioConfig from_file = load_scenario(path);
    CHECK(scenario_to_json(from_file) == scenario_to_json(scenario_by_name(name)));
  }
}

TEST_CASE("scenario files") {
  const ScenarioConfig cfg = example2_intersection();
  const std::string text = scenario_to_json(cfg);
  CHECK(scenario_to_json(scenario_from_json(text)) == text);

  SUBCASE("missing keys keep their defaults") {
    auto j = nlohmann::json::parse(text);
    j.erase("t_sim");
    j.erase("human_noise");
    j["planner"]["smpc"].erase("soft_linear");
    const auto c = scenario_from_json(j.dump());
    CHECK(c.t_sim == ScenarioConfig{}.t_sim);
    CHECK(c.human_noise);
    CHECK(c.planner.smpc.soft_linear == SmpcOptions{}.soft_linear);
    CHECK(c.humans.size() == 1);
  }
  SUBCASE("unknown keys and other versions are rejected") {
    auto j = nlohmann::json::parse(text);
    j["horizon"] = 3;
    CHECK_THROWS_AS(scenario_from_json(j.dump()), ContractViolation);
    j = nlohmann::json::parse(text);
    j["planner"]["smpc"]["horizonn"] = 3;
    CHECK_THROWS_AS(scenario_from_json(j.dump()), ContractViolation);
    j = nlohmann::json::parse(text);
    j["version"] = 2;
    CHECK_THROWS_AS(scenario_from_json(j.dump()), ContractViolation);
  }
  SUBCASE("invalid values are rejected") {
    auto j = nlohmann::json::parse(text);
    j["t_sim"] = 0;
    CHECK_THROWS_AS(scenario_from_json(j.dump()), ContractViolation);
  }
}

TEST_CASE("named parameters") {
  ScenarioConfig cfg = example1_highway();
  set_parameter(cfg, "horizon", 9);
  set_parameter(cfg, "t_sim", 12);
  set_parameter(cfg, "collision_weight", 55.0);
  set_parameter(cfg, "info_weight", 0.25);
  CHECK(cfg.planner.smpc.horizon == 9);
  CHECK(cfg.t_sim == 12);
  CHECK(cfg.planner.smpc.info_weight == 0.25);
  CHECK(cfg.cost.stage.proximity[0].weight == 55.0);
  CHECK_THROWS_AS(set_parameter(cfg, "no_such_thing", 1.0), ContractViolation);
  for (const auto& n : parameter_names()) {
    ScenarioConfig c = example3_multiagent();
    const bool integral = n == "t_sim" || n == "horizon" || n == "dual_horizon" || n == "branching";
    CHECK_NOTHROW(set_parameter(c, n, integral ? 2.0 : 0.1));
  }
}

TEST_CASE("closed-loop cost") {
  RobotCostModel cost;
  cost.stage.tracking = {{3, 1.0, 24.0}};
  cost.stage.control = {{0, 2.0, 0.0}};
  TrialTrace t;
  for (auto [v, a] : {std::pair{22.0, 1.0}, {23.0, -0.5}, {30.0, 0.0}}) {
    TraceRecord r;
    r.x = Vec{{0.0, 0.0, 0.0, v}};
    r.ur = Vec{{a, 0.0}};
    t.records.push_back(r);
  }
  // (22 − 24)² + 2·1² + (23 − 24)² + 2·0.5²; the final record is not a pair.
  CHECK(closed_loop_cost(t, cost) == doctest::Approx(7.5).epsilon(1e-15));

  SUBCASE("at the reference with no motion") {
    for (auto& r : t.records) {
      r.x[3] = 24.0;
      r.ur.setZero();
    }
    CHECK(closed_loop_cost(t, cost) == 0.0);
  }
  SUBCASE("belief columns do not enter") {
    TrialTrace u = t;
    for (auto& r : u.records) r.beliefs.push_back({Vec{{0.9, 0.1}}, {Vec::Ones(2)}, {Mat::Identity(2, 2)}});
    CHECK(closed_loop_cost(u, cost) == closed_loop_cost(t, cost));
  }
}

TEST_CASE("closed-loop trial") {
  const ScenarioConfig cfg = short_highway(12);
  const auto r = run_trial(cfg, cfg.planner, 7, 0);
  const auto& tr = r.trace;
  REQUIRE_FALSE(r.metrics.failed);
  CHECK(tr.records.size() == static_cast<size_t>(cfg.t_sim + 1));
  for (size_t k = 0; k < tr.records.size(); ++k) {
    CHECK(tr.records[k].step == static_cast<int>(k));
    if (k > 0) CHECK(tr.records[k].time > tr.records[k - 1].time);
    CHECK(tr.records[k].collision == cfg.failure.violated(tr.records[k].x));
  }
  CHECK(tr.records.back().ur.norm() == 0.0);
  CHECK(r.metrics.closed_loop_cost == doctest::Approx(closed_loop_cost(tr, cfg.cost)).epsilon(1e-12));
  CHECK(r.metrics.closed_loop_cost >= 0.0);
  CHECK(r.metrics.mode_entropy.size() == tr.records.size());
  CHECK(r.metrics.solve_times.size() == static_cast<size_t>(cfg.t_sim));
  CHECK(tr.true_theta.size() == 1);
  CHECK(tr.agent_offsets == std::vector<int>{0, 4});

  SUBCASE("the initial state can already be a collision") {
    ScenarioConfig c = deterministic_highway(2);
    c.x0[4] = 2.0;
    c.x0[5] = 0.3;
    const auto m = run_trial(c, c.planner, 1, 0).metrics;
    CHECK(m.collision);
    CHECK(m.collision_step == 0);
  }
  SUBCASE("leaving the road is a collision") {
    ScenarioConfig c = deterministic_highway(2);
    c.x0[1] = 5.5;
    const auto m = run_trial(c, c.planner, 1, 0).metrics;
    CHECK(m.collision);
    CHECK(m.collision_step == 0);
  }
}

TEST_CASE("reproducibility") {
  SUBCASE("deterministic scenario reruns bitwise") {
    const ScenarioConfig cfg = deterministic_highway(8);
    const auto a = run_trial(cfg, cfg.planner, 3, 0);
    const auto b = run_trial(cfg, cfg.planner, 99, 5);
    // Nothing random is left except the planner's own samples.
    CHECK(a.trace.records.back().x.allFinite());
    CHECK(trace_to_csv(run_trial(cfg, cfg.planner, 3, 0).trace) == trace_to_csv(a.trace));
    CHECK(b.trace.records[0].x == a.trace.records[0].x);
  }
  SUBCASE("same master seed and trial, same trace") {
    const ScenarioConfig cfg = short_highway(10);
    const auto a = run_trial(cfg, cfg.planner, 11, 2);
    const auto b = run_trial(cfg, cfg.planner, 11, 2);
    CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
    CHECK(a.metrics.closed_loop_cost == b.metrics.closed_loop_cost);
    const auto c = run_trial(cfg, cfg.planner, 11, 3);
    CHECK(c.trace.records[0].x != a.trace.records[0].x);
  }
  SUBCASE("seed isolation") {
    const ScenarioConfig cfg = short_highway(6);
    PlannerConfig pc = cfg.planner;
    pc.kind = PlannerKind::CE;
    const auto alone = run_trial(cfg, pc, 5, 4);
    const auto batch = run_benchmark(cfg, pc, 5, 5);
    CHECK(batch.per_trial[4].closed_loop_cost == alone.metrics.closed_loop_cost);
    CHECK(batch.per_trial[4].mode_entropy == alone.metrics.mode_entropy);
  }
}

TEST_CASE("benchmark aggregation") {
  SUBCASE("one trial aggregates to itself") {
    const ScenarioConfig cfg = short_highway(6);
    const auto t = run_trial(cfg, cfg.planner, 2, 0).metrics;
    const auto b = run_benchmark(cfg, cfg.planner, 1, 2);
    CHECK(b.trials == 1);
    CHECK(b.mean_cost == t.closed_loop_cost);
    CHECK(b.std_cost == 0.0);
    CHECK(b.collisions == (t.collision ? 1 : 0));
    CHECK(b.entropy_reduced == (t.mode_entropy.back() < t.mode_entropy.front() ? 1.0 : 0.0));
  }
  SUBCASE("collision rate and failed trials") {
    std::vector<TrialMetrics> ts(20);
    for (int i = 0; i < 20; ++i) {
      ts[i].closed_loop_cost = i < 19 ? 2.0 : 1000.0;
      ts[i].mode_entropy = {1.0, i < 16 ? 0.5 : 1.0};
    }
    ts[1].collision = ts[7].collision = ts[13].collision = true;
    ts[19].failed = true;
    const auto b = aggregate(ts);
    CHECK(b.collisions == 3);
    CHECK(b.collision_rate == doctest::Approx(0.15));
    CHECK(b.failed == 1);
    CHECK(b.mean_cost == 2.0);
    CHECK(b.entropy_reduced == doctest::Approx(0.8));
  }
  SUBCASE("thread count does not change the result") {
    const ScenarioConfig cfg = short_highway(5);
    PlannerConfig pc = cfg.planner;
    pc.kind = PlannerKind::CE;
    const auto a = run_benchmark(cfg, pc, 3, 8, {}, 1);
    const auto b = run_benchmark(cfg, pc, 3, 8, {}, 3);
    for (int i = 0; i < 3; ++i)
      CHECK(a.per_trial[i].closed_loop_cost == b.per_trial[i].closed_loop_cost);
  }
  SUBCASE("explicit seed list") {
    const ScenarioConfig cfg = short_highway(4);
    PlannerConfig pc = cfg.planner;
    pc.kind = PlannerKind::CE;
    const auto b = run_benchmark(cfg, pc, 0, 0, {21, 22});
    CHECK(b.trials == 2);
    CHECK(b.per_trial[1].closed_loop_cost == run_trial(cfg, pc, 22, 0).metrics.closed_loop_cost);
    CHECK_THROWS_AS(run_benchmark(cfg, pc, 0, 0), ContractViolation);
  }
  SUBCASE("solve time percentiles") {
    const auto s = solve_time_stats({4.0, 1.0, 3.0, 2.0});
    CHECK(s.mean == 2.5);
    CHECK(s.p50 == 2.0);
    CHECK(s.p95 == 4.0);
    CHECK(s.max == 4.0);
  }
}

TEST_CASE("trace files") {
  const ScenarioConfig cfg = short_highway(8);
  const auto r = run_trial(cfg, cfg.planner, 4, 1);
  const std::string csv = trace_to_csv(r.trace);

  SUBCASE("round trip is exact") {
    const TrialTrace back = trace_from_csv(csv);
    CHECK(trace_to_csv(back) == csv);
    REQUIRE(back.records.size() == r.trace.records.size());
    for (size_t k = 0; k < back.records.size(); ++k) {
      CHECK(back.records[k].x == r.trace.records[k].x);
      CHECK(back.records[k].ur == r.trace.records[k].ur);
      CHECK(back.records[k].beliefs[0].cov[1] == r.trace.records[k].beliefs[0].cov[1]);
      CHECK(back.records[k].solver_merit == r.trace.records[k].solver_merit);
    }
    CHECK(back.true_theta[0] == r.trace.true_theta[0]);
    CHECK(back.master_seed == 4);
    CHECK(back.trial == 1);
  }
  SUBCASE("header schema is stable") {
    const std::string golden = std::string(DUALMPC_SOURCE_DIR) + "/tests/golden/";
    CHECK(first_line(csv.substr(csv.find('\n') + 1)) ==
          first_line(read_file(golden + "trace_header_example1.csv")));
    const auto h2 = trace_header(layout_of(example2_intersection()));
    std::string line;
    for (size_t i = 0; i < h2.size(); ++i) line += (i ? "," : "") + h2[i];
    CHECK(line == first_line(read_file(golden + "trace_header_example2.csv")));
  }
  SUBCASE("malformed files are rejected") {
    CHECK_THROWS_AS(trace_from_csv("step,time\n"), ContractViolation);
    std::string bad = csv;
    bad.replace(bad.find("step,time"), 9, "stop,time");
    CHECK_THROWS_AS(trace_from_csv(bad), ContractViolation);
    std::string short_row = csv.substr(0, csv.rfind(','));
    CHECK_THROWS_AS(trace_from_csv(short_row), ContractViolation);
  }
  SUBCASE("belief columns replay within tolerance") {
    CHECK(replay_belief_error(cfg, r.trace) < 1e-9);
    CHECK(replay_belief_error(cfg, trace_from_csv(csv)) < 1e-9);
  }
  SUBCASE("io errors surface the path") {
    try {
      import_trace("/nonexistent/dir/trace.csv");
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("/nonexistent/dir/trace.csv") != std::string::npos);
    }
  }
}

TEST_CASE("plots") {
  const ScenarioConfig cfg = short_highway(6);
  const auto a = run_trial(cfg, cfg.planner, 1, 0).trace;
  const auto b = run_trial(cfg, cfg.planner, 1, 1).trace;
  for (const auto& svg : {trajectory_svg({a, b}), belief_svg(a), entropy_svg({a, b})}) {
    CHECK(svg.size() > 500);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("nan") == std::string::npos);
    CHECK(well_formed_xml(svg));
  }
  CHECK_FALSE(well_formed_xml("<svg><g></svg>"));
  CHECK_THROWS_AS(export_plot({}, "unused"), ContractViolation);
}
