#include <doctest.h>

#include "dualmpc/planners.hpp"
#include "support/highway_problem.hpp"

using namespace dualmpc;

namespace {

PlanningScene highway_scene(const DynamicsModel& dyn) {
  PlanningScene s;
  s.model = &dyn;
  s.cost = fixtures::highway_robot_cost();
  s.failure = fixtures::highway_failure();
  s.behaviors = {fixtures::highway_human()};
  return s;
}

PlannerConfig config(PlannerKind k, int horizon = 6) {
  PlannerConfig c;
  c.kind = k;
  c.smpc.horizon = horizon;
  c.smpc.dual_horizon = 2;
  if (k == PlannerKind::ED) c.smpc.info_weight = 0.5;
  return c;
}

}  // namespace

TEST_CASE("planner kinds and configuration") {
  CHECK(planner_kind_from_string("id") == PlannerKind::ID);
  CHECK(planner_kind_from_string("ND-SMPC") == PlannerKind::ND);
  CHECK(planner_kind_from_string("ce-mpc") == PlannerKind::CE);
  CHECK(planner_kind_from_string("ISA-iLQ") == PlannerKind::ISA);
  CHECK(std::string(to_string(PlannerKind::ED)) == "ED");
  CHECK_THROWS_AS(planner_kind_from_string("mpc"), ContractViolation);

  PlannerConfig c = config(PlannerKind::ED);
  CHECK_NOTHROW(c.validate());
  c.smpc.info_weight = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c.kind = PlannerKind::ID;
  CHECK_NOTHROW(c.validate());
  c.smpc.info_weight = 0.1;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
}

TEST_CASE("MAP mode ties go to the lowest index") {
  const auto b = BeliefState::uniform_theta(Vec::Zero(1), Mat::Identity(1, 1),
                                            Vec{{0.2, 0.4, 0.4}});
  CHECK(map_mode(b) == 1);
  CHECK(map_mode(fixtures::highway_belief(0.5)) == 0);
  CHECK(map_mode(fixtures::highway_belief(0.3)) == 1);
}

TEST_CASE("Dirac belief: ID-SMPC plays the certainty-equivalent input") {
  const auto s = fixtures::highway_setup(6, 0.0);
  const auto scene = highway_scene(s.dyn);
  const auto dirac = BeliefState::make({Vec{{0.2, 0.8}}, Vec{{0.5, 0.5}}},
                                       {Mat::Zero(2, 2), Mat::Zero(2, 2)}, Vec{{1.0, 0.0}});
  const auto id = id_smpc(scene, config(PlannerKind::ID), s.x, {dirac}, {s.pred});
  const auto ce = ce_mpc(scene, config(PlannerKind::CE), s.x, {dirac}, {s.pred});
  CHECK(id.ok);
  CHECK(ce.ok);
  CHECK((id.ur - ce.ur).norm() < 1e-4);
}

TEST_CASE("decisions are deterministic and inside the input box") {
  const auto s = fixtures::highway_setup(6);
  const auto scene = highway_scene(s.dyn);
  for (auto k : {PlannerKind::ID, PlannerKind::ED, PlannerKind::ND, PlannerKind::CE,
                 PlannerKind::ISA}) {
    const auto a = decide(scene, config(k), s.x, {fixtures::highway_belief()}, {s.pred});
    const auto b = decide(scene, config(k), s.x, {fixtures::highway_belief()}, {s.pred});
    CHECK(a.ur == b.ur);
    CHECK(a.w == b.w);
    CHECK(s.dyn.robot_bounds().contains(a.ur));
  }
}

TEST_CASE("ED objective approaches the ID objective as lambda shrinks") {
  const auto s = fixtures::highway_setup(6);
  SmpcOptions o;
  o.horizon = 6;
  const auto id = fixtures::highway_problem(s, o);
  Rng rng(3, 0);
  std::vector<Vec> ws;
  for (int k = 0; k < 5; ++k) {
    Vec w(id.num_vars);
    for (int i = 0; i < w.size(); ++i) w[i] = rng.uniform(0.5 * id.lower[i], 0.5 * id.upper[i]);
    ws.push_back(w);
  }
  double last = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-1, 1e-2, 1e-3}) {
    o.info_weight = lambda;
    const auto ed = fixtures::highway_problem(s, o);
    double gap = 0.0;
    for (const auto& w : ws) gap = std::max(gap, std::abs(objective(ed, w) - objective(id, w)));
    CHECK(gap > 0.0);
    CHECK(gap < last);
    last = gap;
  }
  o.info_weight = 0.0;
  CHECK(objective(fixtures::highway_problem(s, o), ws[0]) == objective(id, ws[0]));
}

TEST_CASE("ND-SMPC predicts constant beliefs") {
  const auto s = fixtures::highway_setup(6);
  const auto d = nd_smpc(highway_scene(s.dyn), config(PlannerKind::ND), s.x,
                         {fixtures::highway_belief()}, {s.pred});
  CHECK(d.ok);
  for (const auto& per_node : d.predicted_beliefs) {
    CHECK(per_node[0].p == fixtures::highway_belief().p);
    CHECK(per_node[0].mean[1] == fixtures::highway_belief().mean[1]);
  }
}

TEST_CASE("dual effect separates the baselines") {
  const auto s = fixtures::highway_setup(6);
  const auto scene = highway_scene(s.dyn);
  SmpcOptions o;
  o.horizon = 6;
  const auto idp = fixtures::highway_problem(s, o);
  const Vec w = initial_guess(idp, {Vec{{0.3, 0.02}}});
  const Vec dir{{0.0, 1.0}};
  CHECK(std::abs(belief_gradient_check(idp, w, dir).trace) > 1e-6);
  o.info_weight = 0.5;
  CHECK(std::abs(belief_gradient_check(fixtures::highway_problem(s, o), w, dir).trace) > 1e-6);
  o.info_weight = 0.0;
  o.beliefs = BeliefDynamics::NonDual;
  const auto nd = fixtures::highway_problem(s, o);
  CHECK(belief_gradient_check(nd, w, dir).trace == 0.0);
  const auto ce = certainty_equivalent(idp);
  const Vec wc = initial_guess(ce, {Vec{{0.3, 0.02}}});
  const auto sc = belief_gradient_check(ce, wc, dir);
  CHECK(sc.trace == 0.0);
  CHECK(sc.entropy == 0.0);
}

TEST_CASE("CE-MPC objective is the deterministic cost of its own plan") {
  const auto s = fixtures::highway_setup(6, 0.05);
  SmpcOptions o;
  o.horizon = 6;
  const auto b = fixtures::highway_belief(0.4);  // MAP mode r, θ = (0.5, 0.5)
  const auto ce = certainty_equivalent(fixtures::highway_problem(s, o, b));
  REQUIRE(ce.tree.size() == 7);
  const auto r = solve(ce, initial_guess(ce, {}));
  Vec x = s.x;
  double cost = 0.0;
  const auto rc = fixtures::highway_robot_cost();
  for (int t = 0; t < 6; ++t) {
    const Vec ur = r.w.segment(2 * t, 2);
    cost += rc.stage.cost(x, ur);
    const Vec uh = s.pred.basis_matrix(t, 1, x, ur) * b.mean[1];
    x = s.dyn.step(x, ur, s.dyn.human_bounds().project(uh));
  }
  cost += rc.terminal.state_cost(x);
  CHECK(objective(ce, r.w) == doctest::Approx(cost).epsilon(1e-8));
}

TEST_CASE("blended human cost in joint coordinates") {
  const auto dyn = fixtures::two_cars();
  const auto behavior = fixtures::highway_human();
  Rng rng(5, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec x = fixtures::highway_state() + rng.normal_vec(8);
    const Vec u = rng.normal_vec(4);
    const Vec theta{{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)}};
    const int m = trial % 2;
    const auto pc = blended_human_cost(dyn, behavior, m, theta);
    // Oblivious basis on the human's own coordinates, focused basis on the pair.
    const auto& d = behavior.games[m][0].human_cost.stage;
    const auto& f = behavior.games[m][1].human_cost.stage;
    const double expected = theta[0] * d.cost(Vec(x.tail(4)), Vec(u.tail(2))) + theta[1] * f.cost(x, u);
    CHECK(pc.stage.cost(x, u) == doctest::Approx(expected).epsilon(1e-12));
  }
  const auto clamped = blended_human_cost(dyn, behavior, 0, Vec{{-1.0, 1.0}});
  CHECK(clamped.stage.tracking.size() == behavior.games[0][1].human_cost.stage.tracking.size());
}

TEST_CASE("ISA-iLQ") {
  const auto s = fixtures::highway_setup(6);
  auto scene = highway_scene(s.dyn);
  const auto b = fixtures::highway_belief(0.7);
  const auto d = isa_ilq(scene, config(PlannerKind::ISA), s.x, {b});

  SUBCASE("plays the robot's equilibrium input of the MAP game") {
    std::vector<PlayerCost> costs{{scene.cost.stage, scene.cost.terminal},
                                  blended_human_cost(s.dyn, scene.behaviors[0], 0, b.mean[0])};
    GameOptions go;
    go.horizon = 6;
    const auto g = solve_ilq_game(s.dyn, costs, s.x, {}, go);
    const Vec u = g.strategy.policy(0, s.x).head(2);
    CHECK((d.ur - s.dyn.robot_bounds().project(u)).norm() < 1e-12);
  }
  SUBCASE("uses the mean only") {
    auto wide = b;
    for (auto& c : wide.cov) c *= 7.0;
    CHECK(isa_ilq(scene, config(PlannerKind::ISA), s.x, {wide}).ur == d.ur);
  }
  SUBCASE("projects onto the input box") {
    scene.cost.stage.tracking[2].target = 45.0;
    scene.cost.stage.tracking[2].weight = 50.0;
    const auto fast = isa_ilq(scene, config(PlannerKind::ISA), s.x, {b});
    CHECK(fast.ur[0] == s.dyn.robot_bounds().hi[0]);
  }
}
