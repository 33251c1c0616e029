#include "dualmpc/planners.hpp"

#include <array>

namespace dualmpc {

namespace {

constexpr std::array<const char*, 5> kKindNames{"ID", "ED", "ND", "CE", "ISA"};

}  // namespace

const char* to_string(PlannerKind k) { return kKindNames[static_cast<int>(k)]; }

PlannerKind planner_kind_from_string(const std::string& s) {
  std::string u;
  for (char c : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u.size() > 5 && u.substr(u.size() - 5) == "-SMPC") u = u.substr(0, u.size() - 5);
  if (u == "CE-MPC") u = "CE";
  if (u == "ISA-ILQ") u = "ISA";
  for (size_t i = 0; i < kKindNames.size(); ++i)
    if (u == kKindNames[i]) return static_cast<PlannerKind>(i);
  throw ContractViolation("unknown planner '" + s + "' (expected ID, ED, ND, CE or ISA)");
}

void PlannerConfig::validate() const {
  if (kind == PlannerKind::ED)
    require(smpc.info_weight > 0.0, "planner ED needs an information weight lambda > 0");
  else
    require(smpc.info_weight == 0.0,
            std::string("information weight lambda is only used by ED (planner ") +
                to_string(kind) + ")");
}

int map_mode(const BeliefState& b) {
  int m = 0;
  for (int k = 1; k < b.num_modes(); ++k)
    if (b.p[k] > b.p[m]) m = k;
  return m;
}

namespace {

PolicyDecision from_solution(const PlanningProblem& p, const SolveResult& r) {
  PolicyDecision d;
  d.w = r.w;
  d.ur = p.model->robot_bounds().project(root_input(p, r.w));
  d.plan = robot_inputs_by_time(p, r.w);
  d.report = r.report;
  d.predicted_beliefs = rollout(p, r.w).beliefs;
  d.ok = r.report.converged;
  return d;
}

PlanningProblem build(const PlanningScene& scene, const SmpcOptions& o, const Vec& x,
                      const std::vector<BeliefState>& b,
                      const std::vector<HumanPrediction>& preds) {
  require(scene.model != nullptr, "planner: scene has no dynamics model");
  return assemble(*scene.model, scene.cost, scene.failure, preds, b, x, o);
}

PolicyDecision tree_planner(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                            const std::vector<BeliefState>& b,
                            const std::vector<HumanPrediction>& preds, BeliefDynamics dyn,
                            double lambda) {
  SmpcOptions o = cfg.smpc;
  o.beliefs = dyn;
  o.info_weight = lambda;
  PlanningProblem p = build(scene, o, x, b, preds);
  Vec guess;
  if (dyn == BeliefDynamics::Dual) {
    guess = warm_start(p, cfg.ce_warm_start).w;
  } else {
    std::vector<Vec> ce;
    if (cfg.ce_warm_start) {
      try {
        const PlanningProblem c = certainty_equivalent(p);
        ce = robot_inputs_by_time(c, solve(c, initial_guess(c, {})).w);
      } catch (const NumericalError&) {
        ce.clear();
      }
    }
    guess = initial_guess(p, ce);
  }
  return from_solution(p, solve(p, guess));
}

ResidualCost remap(const ResidualCost& c, const std::vector<int>& xs, const std::vector<int>& us,
                   double scale) {
  auto sx = [&](int i) { return i < 0 ? i : xs.at(i); };
  ResidualCost out;
  for (auto t : c.tracking) {
    t.index = sx(t.index);
    t.weight *= scale;
    out.tracking.push_back(t);
  }
  for (auto t : c.control) {
    t.index = us.at(t.index);
    t.weight *= scale;
    out.control.push_back(t);
  }
  for (auto t : c.proximity) {
    t.ax = sx(t.ax);
    t.ay = sx(t.ay);
    t.bx = sx(t.bx);
    t.by = sx(t.by);
    t.weight *= scale;
    out.proximity.push_back(t);
  }
  for (auto t : c.halfplanes) {
    t.index = sx(t.index);
    t.weight *= scale;
    out.halfplanes.push_back(t);
  }
  return out;
}

void append(ResidualCost& a, const ResidualCost& b) {
  a.tracking.insert(a.tracking.end(), b.tracking.begin(), b.tracking.end());
  a.control.insert(a.control.end(), b.control.begin(), b.control.end());
  a.proximity.insert(a.proximity.end(), b.proximity.begin(), b.proximity.end());
  a.halfplanes.insert(a.halfplanes.end(), b.halfplanes.begin(), b.halfplanes.end());
}

}  // namespace

PlayerCost blended_human_cost(const DynamicsModel& model, const HumanBehaviorModel& behavior,
                              int mode, const Vec& theta) {
  require(mode >= 0 && mode < behavior.num_modes(), "blended_human_cost: mode out of range");
  require(theta.size() == behavior.n_theta(), "blended_human_cost: θ has the wrong length");
  const int h = behavior.human;
  const int nrx = model.robot().nx, nr = model.nr();
  const int so = model.human_state_offset(h), io = model.human_input_offset(h);
  const int hx = model.human(h).nx, hu = model.human(h).nu;
  std::vector<int> pair_x, pair_u, solo_x, solo_u;
  for (int i = 0; i < nrx; ++i) pair_x.push_back(i);
  for (int i = 0; i < nr; ++i) pair_u.push_back(i);
  for (int i = 0; i < hx; ++i) {
    pair_x.push_back(so + i);
    solo_x.push_back(so + i);
  }
  for (int i = 0; i < hu; ++i) {
    pair_u.push_back(nr + io + i);
    solo_u.push_back(nr + io + i);
  }
  PlayerCost out;
  for (int i = 0; i < behavior.n_theta(); ++i) {
    const double wt = std::max(0.0, theta[i]);
    if (wt == 0.0) continue;
    const BasisGame& g = behavior.games[mode][i];
    const bool solo = g.response == RobotResponse::Oblivious;
    const auto& xs = solo ? solo_x : pair_x;
    const auto& us = solo ? solo_u : pair_u;
    append(out.stage, remap(g.human_cost.stage, xs, us, wt));
    append(out.terminal, remap(g.human_cost.terminal, xs, us, wt));
  }
  return out;
}

PolicyDecision id_smpc(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                       const std::vector<BeliefState>& b,
                       const std::vector<HumanPrediction>& preds) {
  return tree_planner(scene, cfg, x, b, preds, BeliefDynamics::Dual, 0.0);
}

PolicyDecision ed_smpc(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                       const std::vector<BeliefState>& b,
                       const std::vector<HumanPrediction>& preds) {
  require(cfg.smpc.info_weight > 0.0, "ED-SMPC needs an information weight lambda > 0");
  return tree_planner(scene, cfg, x, b, preds, BeliefDynamics::Dual, cfg.smpc.info_weight);
}

PolicyDecision nd_smpc(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                       const std::vector<BeliefState>& b,
                       const std::vector<HumanPrediction>& preds) {
  return tree_planner(scene, cfg, x, b, preds, BeliefDynamics::NonDual, 0.0);
}

PolicyDecision ce_mpc(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                      const std::vector<BeliefState>& b,
                      const std::vector<HumanPrediction>& preds) {
  SmpcOptions o = cfg.smpc;
  o.info_weight = 0.0;
  const PlanningProblem c = certainty_equivalent(build(scene, o, x, b, preds));
  return from_solution(c, solve(c, initial_guess(c, {})));
}

PolicyDecision isa_ilq(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                       const std::vector<BeliefState>& b) {
  require(scene.model != nullptr, "planner: scene has no dynamics model");
  const DynamicsModel& model = *scene.model;
  require(static_cast<int>(scene.behaviors.size()) == model.num_humans() &&
              static_cast<int>(b.size()) == model.num_humans(),
          "ISA-iLQ needs a behavior model and a belief per human");
  std::vector<PlayerCost> costs{{scene.cost.stage, scene.cost.terminal}};
  for (int h = 0; h < model.num_humans(); ++h) {
    const int m = map_mode(b[h]);
    costs.push_back(blended_human_cost(model, scene.behaviors[h], m, b[h].mean[m]));
  }
  GameOptions go = cfg.isa_game;
  go.horizon = cfg.smpc.horizon;
  const GameSolution sol = solve_ilq_game(model, costs, x, {}, go);
  PolicyDecision d;
  const auto [off, len] = sol.input_slices[0];
  d.ur = model.robot_bounds().project(Vec(sol.strategy.policy(0, x).segment(off, len)));
  for (const auto& u : sol.strategy.us) d.plan.push_back(u.segment(off, len));
  d.report.converged = sol.converged;
  d.report.iterations = sol.iterations;
  d.report.merit = sol.player_costs.empty() ? 0.0 : sol.player_costs[0];
  d.report.message = sol.converged ? "converged" : "game did not converge";
  d.ok = sol.converged;
  return d;
}

PolicyDecision decide(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                      const std::vector<BeliefState>& b,
                      const std::vector<HumanPrediction>& preds) {
  cfg.validate();
  switch (cfg.kind) {
    case PlannerKind::ID:
      return id_smpc(scene, cfg, x, b, preds);
    case PlannerKind::ED:
      return ed_smpc(scene, cfg, x, b, preds);
    case PlannerKind::ND:
      return nd_smpc(scene, cfg, x, b, preds);
    case PlannerKind::CE:
      return ce_mpc(scene, cfg, x, b, preds);
    case PlannerKind::ISA:
      return isa_ilq(scene, cfg, x, b);
  }
  throw ContractViolation("unknown planner kind");
}

}  // namespace dualmpc
