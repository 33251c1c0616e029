#include <doctest.h>

#include <set>

#include "dualmpc/smpc.hpp"
#include "support/highway_problem.hpp"
#include "support/qp_oracle.hpp"
#include "support/scalar_model.hpp"

using namespace dualmpc;

namespace {

DynamicsModel scalar_dyn(double robot_bound, double human_bound = 100.0) {
  auto r = scalar_model::line_agent("robot", 0.0);
  r.bounds = {Vec::Constant(1, -robot_bound), Vec::Constant(1, robot_bound)};
  auto h = scalar_model::line_agent("human", 0.0);
  h.bounds = {Vec::Constant(1, -human_bound), Vec::Constant(1, human_bound)};
  return DynamicsModel(r, {h});
}

SmpcOptions small_tree(int horizon, int dual, BeliefDynamics beliefs) {
  SmpcOptions o;
  o.horizon = horizon;
  o.dual_horizon = dual;
  o.beliefs = beliefs;
  o.disturbance = false;
  return o;
}

// A fixed node's state as an affine function A w + c of the decision vector.
struct Affine {
  Mat a;
  Vec c;
};

}  // namespace

TEST_CASE("decision layout on the 15-node tree") {
  const auto dyn = fixtures::two_cars();
  const auto pred = fixtures::highway_setup(3).pred;
  for (auto mode : {HumanActionMode::Projection, HumanActionMode::Penalty}) {
    SmpcOptions o = small_tree(3, 3, BeliefDynamics::Dual);
    o.human_action = mode;
    const auto p = assemble(dyn, fixtures::highway_robot_cost(), fixtures::highway_failure(),
                            {pred}, {fixtures::highway_belief()}, fixtures::highway_state(), o);
    REQUIRE(p.tree.size() == 15);
    int slots = 0;
    std::set<int> used;
    for (const auto& n : p.tree.nodes) {
      if (!n.leaf()) {
        slots += dyn.nr();
        for (int i = 0; i < dyn.nr(); ++i) CHECK(used.insert(p.ur_offset[n.id] + i).second);
      } else {
        CHECK(p.ur_offset[n.id] == -1);
      }
      if (mode == HumanActionMode::Penalty && n.parent >= 0) {
        slots += dyn.nh();
        for (int i = 0; i < dyn.nh(); ++i) CHECK(used.insert(p.uh_offset[n.id] + i).second);
      }
    }
    // 7 non-leaf nodes with 2 robot inputs, 14 non-root nodes with 2 human inputs.
    const int expected = mode == HumanActionMode::Penalty ? 7 * 2 + 14 * 2 : 7 * 2;
    CHECK(slots == expected);
    CHECK(p.num_vars == expected);
    CHECK(static_cast<int>(used.size()) == expected);
    CHECK(*used.rbegin() == expected - 1);
    CHECK(p.soft_rows() == 14 * 3);
  }
}

TEST_CASE("assembly rejects inconsistent beliefs") {
  const auto s = fixtures::highway_setup(3);
  const auto three = BeliefState::uniform_theta(Vec{{0.5, 0.5}}, Mat::Identity(2, 2),
                                                Vec{{0.3, 0.3, 0.4}});
  CHECK_THROWS_AS(fixtures::highway_problem(s, small_tree(3, 1, BeliefDynamics::Dual), three),
                  ContractViolation);
}

TEST_CASE("chain tree objective equals the deterministic rollout cost") {
  const auto s = fixtures::highway_setup(6, 0.0);
  const auto dirac = BeliefState::make({Vec{{0.3, 0.7}}, Vec{{0.5, 0.5}}},
                                       {Mat::Zero(2, 2), Mat::Zero(2, 2)}, Vec{{1.0, 0.0}});
  SmpcOptions o = small_tree(6, 2, BeliefDynamics::Dual);
  const auto p = assemble(s.dyn, fixtures::highway_robot_cost(), fixtures::highway_failure(),
                          {s.pred}, {dirac}, s.x, o, {{0}});
  REQUIRE(p.tree.size() == 7);
  Rng rng(4, 0);
  Vec w(p.num_vars);
  for (int i = 0; i < w.size(); ++i) w[i] = rng.uniform(p.lower[i], p.upper[i]);
  // Independent rollout: the human follows the θ-weighted Laplace means.
  Vec x = s.x;
  double cost = 0.0;
  const auto rc = fixtures::highway_robot_cost();
  const auto hb = s.dyn.human_bounds();
  for (int t = 0; t < 6; ++t) {
    const Vec ur = w.segment(2 * t, 2);
    cost += rc.stage.cost(x, ur);
    Vec uh = Vec::Zero(2);
    for (int i = 0; i < 2; ++i) uh += dirac.mean[0][i] * s.pred.map(t, 0, i).mean(x, ur);
    x = s.dyn.step(x, ur, hb.project(uh));
  }
  cost += rc.terminal.state_cost(x);
  CHECK(objective(p, w) == doctest::Approx(cost).epsilon(1e-12));
}

TEST_CASE("convex instances match a dense QP oracle") {
  Rng rng(7, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto dyn = scalar_dyn(0.6);
    std::vector<std::vector<double>> k(2, std::vector<double>(2)), kr = k, cv = k;
    for (int m = 0; m < 2; ++m)
      for (int i = 0; i < 2; ++i) {
        k[m][i] = rng.uniform(-1.0, 1.0);
        kr[m][i] = rng.uniform(-1.0, 1.0);
        cv[m][i] = rng.uniform(0.05, 0.2);
      }
    const auto pred = scalar_model::prediction(k, kr, cv);
    Mat g = Mat(2, 2);
    g << rng.normal(), rng.normal(), rng.normal(), rng.normal();
    const Mat cov = 0.3 * g * g.transpose() + 0.05 * Mat::Identity(2, 2);
    const double pl = rng.uniform(0.1, 0.9);
    const auto belief = BeliefState::make({rng.normal_vec(2), rng.normal_vec(2)}, {cov, 2.0 * cov},
                                          Vec{{pl, 1.0 - pl}});
    RobotCostModel cost;
    cost.stage.tracking = {{0, rng.uniform(0.5, 2.0), rng.uniform(-2.0, 2.0)},
                           {1, rng.uniform(0.1, 1.0), rng.uniform(-2.0, 2.0)}};
    cost.stage.control = {{0, rng.uniform(0.1, 1.0), 0.0}};
    cost.terminal.tracking = {{0, rng.uniform(1.0, 3.0), rng.uniform(-2.0, 2.0)}};
    const Vec x0 = rng.normal_vec(2);
    SmpcOptions o = small_tree(3, 1 + trial % 2, BeliefDynamics::NonDual);
    o.seed = trial;
    const auto p = assemble(dyn, cost, {}, {pred}, {belief}, x0, o);
    const int nv = p.num_vars;

    // Oracle: states are affine in w because beliefs stay at the prior.
    std::vector<Affine> xs(p.tree.size());
    std::vector<double> prob(p.tree.size());
    xs[0] = {Mat::Zero(2, nv), x0};
    prob[0] = 1.0;
    for (int n = 1; n < p.tree.size(); ++n) {
      const Node& nd = p.tree.nodes[n];
      const int m = nd.mode;
      Vec theta = belief.mean[m];
      if (nd.kind == StageKind::Dual) theta += belief.cov[m].llt().matrixL() * nd.theta_o;
      prob[n] = prob[nd.parent] * (nd.kind == StageKind::Dual ? belief.p[m] : 1.0);
      const int off = p.ur_offset[nd.parent];
      Affine a = xs[nd.parent];
      a.a(0, off) += 1.0;
      for (int i = 0; i < 2; ++i) {
        a.a(1, off) += theta[i] * kr[m][i];
        a.c[1] += theta[i] * k[m][i];
      }
      xs[n] = a;
    }
    Mat q = Mat::Zero(nv, nv);
    Vec qv = Vec::Zero(nv);
    double c0 = 0.0;
    auto add = [&](const Vec& row, double c, double weight) {
      q += 2.0 * weight * row * row.transpose();
      qv += 2.0 * weight * c * row;
      c0 += weight * c * c;
    };
    for (const auto& nd : p.tree.nodes) {
      const auto& a = xs[nd.id];
      const auto& terms = nd.leaf() ? cost.terminal.tracking : cost.stage.tracking;
      for (const auto& t : terms)
        add(a.a.row(t.index).transpose(), a.c[t.index] - t.target, prob[nd.id] * t.weight);
      if (!nd.leaf())
        for (const auto& t : cost.stage.control) {
          Vec row = Vec::Zero(nv);
          row[p.ur_offset[nd.id]] = 1.0;
          add(row, -t.target, prob[nd.id] * t.weight);
        }
    }
    Mat c(2 * nv, nv);
    Vec d(2 * nv);
    c << Mat::Identity(nv, nv), -Mat::Identity(nv, nv);
    d << p.upper, -p.lower;
    const auto ref = qp_oracle::solve(q, qv, c, d);
    REQUIRE(ref.has_value());

    const auto sol = solve(p, Vec::Zero(nv));
    CHECK(sol.report.converged);
    CHECK((sol.w - *ref).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(objective(p, *ref) ==
          doctest::Approx(0.5 * ref->dot(q * *ref) + qv.dot(*ref) + c0).epsilon(1e-10));
  }
}

TEST_CASE("objective gradient matches central differences") {
  Rng rng(11, 0);
  for (int trial = 0; trial < 10; ++trial) {
    Vec x = fixtures::highway_state();
    x[0] += rng.uniform(-3.0, 3.0);
    x[5] += rng.uniform(-0.5, 0.5);
    const auto s = fixtures::highway_setup(6, 0.05, x);
    SmpcOptions o = small_tree(6, 2, BeliefDynamics::Dual);
    o.disturbance = true;
    o.seed = trial;
    o.info_weight = trial % 2 == 0 ? 0.0 : 0.3;
    const double pl = rng.uniform(0.2, 0.8);
    auto p = fixtures::highway_problem(s, o, fixtures::highway_belief(pl));
    p.cost.belief_weight = trial % 3 == 0 ? 0.1 : 0.0;
    Vec w(p.num_vars);
    for (int i = 0; i < w.size(); ++i)
      w[i] = rng.uniform(0.7 * p.lower[i], 0.7 * p.upper[i]);
    const Vec g = objective_gradient(p, w);
    Vec fd(w.size());
    const double h = 1e-6;
    for (int i = 0; i < w.size(); ++i) {
      Vec a = w, b = w;
      a[i] += h;
      b[i] -= h;
      fd[i] = (objective(p, a) - objective(p, b)) / (2.0 * h);
    }
    const double rel = (g - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, fd.lpNorm<Eigen::Infinity>());
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("solver on the highway instance") {
  const auto s = fixtures::highway_setup(8);
  SmpcOptions o = small_tree(8, 2, BeliefDynamics::Dual);
  o.disturbance = true;
  auto p = fixtures::highway_problem(s, o);
  const auto ws = warm_start(p);
  const auto r = solve(p, ws.w);
  CHECK(r.report.converged);
  for (size_t i = 1; i < r.report.merit_history.size(); ++i)
    CHECK(r.report.merit_history[i] <= r.report.merit_history[i - 1]);
  CHECK(r.report.merit == doctest::Approx(rollout(p, r.w).merit()));
  const Vec u = root_input(p, r.w);
  CHECK(s.dyn.robot_bounds().contains(u, 1e-12));

  // Restarting from the optimum stops at once.
  const auto again = solve(p, r.w);
  CHECK(again.report.iterations <= 2);
  CHECK((again.w - r.w).lpNorm<Eigen::Infinity>() < 1e-4);

  // Same inputs, same answer.
  auto p2 = fixtures::highway_problem(s, o);
  const auto ws2 = warm_start(p2);
  CHECK(ws2.w == ws.w);
  CHECK(solve(p2, ws2.w).w == r.w);
}

TEST_CASE("slacks of the soft failure constraints") {
  const auto dyn = scalar_dyn(0.5);
  const auto pred = scalar_model::prediction({{0.0}}, {{0.0}}, {{0.1}});
  const auto belief = BeliefState::make({Vec{{0.0}}}, {Mat::Zero(1, 1)}, Vec{{1.0}});
  SmpcOptions o = small_tree(1, 1, BeliefDynamics::NonDual);
  FailureSet f;
  f.halfplanes = {{0, 1.0, 1.0, 0.0, 0.0, 0.1}};  // F = {x_robot > 1}

  SUBCASE("feasible motion leaves every slack at zero") {
    RobotCostModel c;
    c.stage.tracking = {{0, 1.0, -1.0}};
    c.terminal.tracking = c.stage.tracking;
    const auto p = assemble(dyn, c, f, {pred}, {belief}, Vec{{0.0, 0.0}}, o);
    const auto r = solve(p, Vec::Zero(p.num_vars));
    CHECK(rollout(p, r.w).slack.maxCoeff() == 0.0);
    CHECK(r.report.max_violation == 0.0);
  }
  SUBCASE("forced overlap: the slack is the penetration depth") {
    RobotCostModel c;
    c.stage.control = {{0, 1e-3, 0.0}};
    const auto p = assemble(dyn, c, f, {pred}, {belief}, Vec{{2.0, 0.0}}, o);
    const auto r = solve(p, Vec::Zero(p.num_vars));
    // Best effort is full braking: x1 = 1.5, 0.5 past the boundary.
    CHECK(r.w[0] == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(rollout(p, r.w).slack[0] == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("the slack never grows with the linear weight") {
    // Target inside F: minimize a(s − 2)² + w1 s + w2 s² with s = x1 − 1,
    // so s* = (4a − w1) / (2a + 2 w2).
    RobotCostModel c;
    const double a = 1.0;
    c.terminal.tracking = {{0, a, 3.0}};
    const auto wide = scalar_dyn(5.0);
    double last = 1e9;
    for (double w1 : {0.5, 1.0, 2.0, 3.0, 6.0}) {
      SmpcOptions ow = o;
      ow.soft_linear = w1;
      ow.soft_quadratic = 1.0;
      const auto p = assemble(wide, c, f, {pred}, {belief}, Vec{{1.0, 0.0}}, ow);
      const auto r = solve(p, Vec::Zero(p.num_vars));
      const double s = rollout(p, r.w).slack[0];
      CHECK(s == doctest::Approx(std::max(0.0, (4 * a - w1) / (2 * a + 2.0))).epsilon(1e-6));
      CHECK(s <= last + 1e-12);
      last = s;
    }
  }
}

TEST_CASE("penalty mode sets the human input to the projection") {
  const auto dyn = scalar_dyn(1.0, 0.5);
  // ũH = 0.8, above the bound 0.5 whatever the robot does.
  const auto pred = scalar_model::prediction({{0.8}}, {{0.0}}, {{0.1}});
  const auto belief = BeliefState::make({Vec{{1.0}}}, {Mat::Zero(1, 1)}, Vec{{1.0}});
  RobotCostModel c;
  c.stage.tracking = {{0, 1.0, 1.0}, {1, 0.5, 0.0}};
  c.stage.control = {{0, 0.1, 0.0}};
  c.terminal.tracking = c.stage.tracking;
  SmpcOptions o = small_tree(4, 1, BeliefDynamics::NonDual);
  o.human_action = HumanActionMode::Penalty;
  CHECK(SmpcOptions{}.penalty_c == 1e8);
  // Any C above the multiplier of the coupling is exact; a moderate value
  // keeps the subproblems well scaled.
  o.penalty_c = 1e3;
  const auto p = assemble(dyn, c, {}, {pred}, {belief}, Vec{{0.0, 0.0}}, o);
  const auto r = solve(p, Vec::Zero(p.num_vars));
  CHECK(r.report.converged);
  const auto ro = rollout(p, r.w);
  for (int n = 1; n < p.tree.size(); ++n) {
    CHECK(r.w[p.uh_offset[n]] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(std::abs(ro.uh[n][0] - std::clamp(ro.uh_tilde[n][0], -0.5, 0.5)) < 1e-6);
  }
  // The projection formulation reaches the same robot plan.
  SmpcOptions op = o;
  op.human_action = HumanActionMode::Projection;
  const auto pp = assemble(dyn, c, {}, {pred}, {belief}, Vec{{0.0, 0.0}}, op);
  const auto rp = solve(pp, Vec::Zero(pp.num_vars));
  for (int n = 0; n < pp.tree.size(); ++n)
    if (!pp.tree.nodes[n].leaf())
      CHECK(std::abs(rp.w[pp.ur_offset[n]] - r.w[p.ur_offset[n]]) < 1e-4);

  // When ũH reacts to uR, C‖ũH − uH‖ dominates and the robot spends its input
  // on pulling ũH toward the box (here ũH = 0.8 + 0.3 uR, so uR → −1).
  const auto reactive = scalar_model::prediction({{0.8}}, {{0.3}}, {{0.1}});
  const auto pr = assemble(dyn, c, {}, {reactive}, {belief}, Vec{{0.0, 0.0}}, o);
  const auto rr = solve(pr, Vec::Zero(pr.num_vars));
  CHECK(rr.w[pr.ur_offset[0]] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("belief sensitivity to the root robot input") {
  const auto s = fixtures::highway_setup(6);
  SmpcOptions o = small_tree(6, 2, BeliefDynamics::Dual);
  o.disturbance = true;
  const auto dual = fixtures::highway_problem(s, o);
  o.beliefs = BeliefDynamics::NonDual;
  const auto nd = fixtures::highway_problem(s, o);
  const Vec w = initial_guess(dual, {Vec{{0.5, 0.05}}});
  for (const Vec& dir : {Vec{{1.0, 0.0}}, Vec{{0.0, 1.0}}}) {
    const auto a = belief_gradient_check(dual, w, dir);
    CHECK(std::abs(a.trace) > 1e-6);
    CHECK(std::abs(a.entropy) > 1e-6);
    const auto b = belief_gradient_check(nd, w, dir);
    CHECK(b.trace == 0.0);
    CHECK(b.entropy == 0.0);
  }

  // Basis means that ignore uR carry no dual effect at the first dual node.
  const auto dyn = scalar_dyn(1.0);
  const auto pred = scalar_model::prediction({{0.5, 0.1}, {0.2, -0.3}}, {{0.0, 0.0}, {0.0, 0.0}},
                                             {{0.1, 0.2}, {0.3, 0.1}});
  const auto belief = BeliefState::uniform_theta(Vec{{0.5, 0.5}}, Mat::Identity(2, 2),
                                                 Vec{{0.4, 0.6}});
  RobotCostModel c;
  c.stage.tracking = {{0, 1.0, 1.0}};
  SmpcOptions os = small_tree(3, 2, BeliefDynamics::Dual);
  const auto p = assemble(dyn, c, {}, {pred}, {belief}, Vec{{0.0, 0.0}}, os);
  const auto z = belief_gradient_check(p, Vec::Constant(p.num_vars, 0.2), Vec{{1.0}},
                                       p.tree.nodes[0].children[0]);
  CHECK(z.trace == 0.0);
  CHECK(z.entropy == 0.0);
}

TEST_CASE("non-dual beliefs do not depend on the sampled observations") {
  const auto s = fixtures::highway_setup(6);
  SmpcOptions o = small_tree(6, 2, BeliefDynamics::NonDual);
  o.disturbance = true;
  o.seed = 1;
  const auto a = fixtures::highway_problem(s, o);
  o.seed = 2;
  const auto b = fixtures::highway_problem(s, o);
  const Vec w = initial_guess(a, {Vec{{0.3, 0.0}}});
  const auto ra = rollout(a, w), rb = rollout(b, w);
  CHECK(ra.x[1] != rb.x[1]);
  for (int n = 0; n < a.tree.size(); ++n) {
    CHECK(ra.beliefs[n][0].p == rb.beliefs[n][0].p);
    CHECK(ra.beliefs[n][0].cov[0] == fixtures::highway_belief().cov[0]);
  }
}

TEST_CASE("warm start") {
  const auto s = fixtures::highway_setup(6);
  SmpcOptions o = small_tree(6, 2, BeliefDynamics::Dual);
  o.disturbance = true;
  auto p = fixtures::highway_problem(s, o);
  const auto ws = warm_start(p);
  CHECK(ws.ce_inputs.size() == 6);
  CHECK(ws.nondual_report.converged);
  // Step-3 beliefs carry information that the non-dual step ignored.
  const int d = p.tree.dual_nodes.front();
  const auto& b = ws.rollout.beliefs[d][0];
  CHECK(b.p != fixtures::highway_belief().p);
  CHECK(b.cov[0].trace() < fixtures::highway_belief().cov[0].trace());
  // θ̄ of a grandchild now comes from its parent's rollout belief.
  const int g = p.tree.nodes[d].children.front();
  const int m = p.tree.nodes[g].mode;
  CHECK(p.theta_bar[g][0][m] == ws.rollout.beliefs[d][0].mean[m]);
}

TEST_CASE("non-finite derivatives name the node and constraint") {
  const auto s = fixtures::highway_setup(3);
  FailureSet f = fixtures::highway_failure();
  f.ellipses[0].semi_x = 0.0;
  const auto p = assemble(s.dyn, fixtures::highway_robot_cost(), f, {s.pred},
                          {fixtures::highway_belief()}, s.x, small_tree(3, 1, BeliefDynamics::Dual));
  try {
    solve(p, Vec::Zero(p.num_vars));
    FAIL("expected an exception");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("node 1") != std::string::npos);
    CHECK(msg.find("failure ellipse 0") != std::string::npos);
  }
}
