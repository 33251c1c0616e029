#pragma once

#include <string>
#include <vector>

#include "dualmpc/belief.hpp"
#include "dualmpc/costs.hpp"
#include "dualmpc/qp.hpp"
#include "dualmpc/tree.hpp"

namespace dualmpc {

/// Robot stage cost ℓ(x, uR) and terminal cost ℓ_F(x, b). Control terms
/// index the robot input.
struct RobotCostModel {
  ResidualCost stage;
  ResidualCost terminal;
  double belief_weight = 0.0;  // ℓ_F += w·H(b)

  double stage_cost(const Vec& x, const Vec& ur) const { return stage.cost(x, ur); }
};

/// Failure set F = {x : some h_j(x) > 0}: inter-agent ellipses and
/// half-planes. The penalty fields of the terms are ignored.
struct FailureSet {
  std::vector<ProximityTerm> ellipses;
  std::vector<HalfPlaneTerm> halfplanes;

  int size() const { return static_cast<int>(ellipses.size() + halfplanes.size()); }
  template <class T>
  void values(const VecT<T>& x, T* out) const {
    int k = 0;
    for (const auto& e : ellipses) out[k++] = ellipse_h<T>(x, e);
    for (const auto& h : halfplanes) out[k++] = halfplane_h<T>(x, h);
  }
  Vec values(const Vec& x) const;
  double max_violation(const Vec& x) const;
  bool violated(const Vec& x) const { return max_violation(x) > 0.0; }
};

enum class BeliefDynamics { Dual, NonDual };
/// Penalty: uH is a decision variable tied to ũH by C‖ũH − uH‖₁.
/// Projection: uH = clip(ũH) inside the rollout (the C → ∞ limit).
enum class HumanActionMode { Penalty, Projection };

struct SolverOptions {
  double tol = 1e-4;
  int max_iter = 100;
  double damping = 1e-6;
  double armijo = 1e-4;
  int max_backtracks = 20;
  QpOptions qp;
};

struct SmpcOptions {
  int horizon = 8;
  int dual_horizon = 2;
  int branching = 1;
  long max_leaves = 4096;
  double prune_threshold = 0.0;
  BeliefDynamics beliefs = BeliefDynamics::Dual;
  HumanActionMode human_action = HumanActionMode::Projection;
  double penalty_c = 1e8;
  double soft_linear = 200.0;
  double soft_quadratic = 2000.0;
  double info_weight = 0.0;  // λ of the explicit information-gain term
  bool disturbance = true;
  BeliefOptions belief;
  SolverOptions solver;
  std::uint64_t seed = 0;
};

/// The assembled tree problem. Decision vector: uR for each non-leaf node,
/// then (penalty mode) uH of all humans for each non-root node.
struct PlanningProblem {
  const DynamicsModel* model = nullptr;
  RobotCostModel cost;
  FailureSet failure;
  std::vector<HumanPrediction> preds;   // [human]
  std::vector<BeliefState> beliefs;     // [human] at the root
  std::vector<std::vector<int>> joint_modes;  // tree mode → mode of each human
  ScenarioTree tree;
  Vec x0;
  SmpcOptions opts;
  std::vector<std::vector<std::vector<Vec>>> theta_bar;  // [node][human][mode]
  std::vector<int> theta_offset;  // [human] offset in the stacked θ sample

  std::vector<int> ur_offset;  // [node], −1 for leaves
  std::vector<int> uh_offset;  // [node], −1 for the root or in projection mode
  int num_vars = 0;
  Vec lower, upper;

  int num_humans() const { return static_cast<int>(preds.size()); }
  int soft_rows() const { return (tree.size() - 1) * failure.size(); }
  int elastic_rows() const;
};

/// All joint modes of the humans in lexicographic order.
std::vector<std::vector<int>> all_joint_modes(const std::vector<BeliefState>& beliefs);

PlanningProblem assemble(const DynamicsModel& model, const RobotCostModel& cost,
                         const FailureSet& failure, std::vector<HumanPrediction> preds,
                         std::vector<BeliefState> beliefs, const Vec& x0, const SmpcOptions& opts,
                         std::vector<std::vector<int>> joint_modes = {});

/// Double-precision rollout of the tree for a decision vector.
struct Rollout {
  std::vector<Vec> x;                              // [node]
  std::vector<std::vector<BeliefState>> beliefs;   // [node][human]
  std::vector<double> p;                           // [node] path probability
  std::vector<Vec> uh_tilde;                       // [node] unprojected human actions
  std::vector<Vec> uh;                             // [node] executed human actions
  double objective = 0.0;
  double soft_penalty = 0.0;
  double action_penalty = 0.0;
  Vec slack;  // optimal slack max(0, h_j) per soft row, nodes 1… in order
  double merit() const { return objective + soft_penalty + action_penalty; }
};

Rollout rollout(const PlanningProblem& p, const Vec& w);
double objective(const PlanningProblem& p, const Vec& w);
Vec objective_gradient(const PlanningProblem& p, const Vec& w);

/// Decision vector from robot inputs per time step (the last entry is
/// repeated when short); human inputs are set to their projected means.
Vec initial_guess(const PlanningProblem& p, const std::vector<Vec>& ur_by_time);
/// Sets every uH to clip(ũH), walking the tree from the root.
Vec project_human_inputs(const PlanningProblem& p, const Vec& w);

/// Robot inputs of `w` along the most probable root-to-leaf path.
std::vector<Vec> robot_inputs_by_time(const PlanningProblem& p, const Vec& w);
Vec root_input(const PlanningProblem& p, const Vec& w);

struct SolverReport {
  bool converged = false;
  int iterations = 0;
  double merit = 0.0;
  double max_violation = 0.0;
  double wall_time = 0.0;  // seconds; informational only
  std::vector<double> merit_history;  // accepted iterates, starting point first
  std::string message;
};

struct SolveResult {
  Vec w;
  SolverReport report;
};

/// Gauss-Newton Sℓ1QP with backtracking on the ℓ1 merit function.
SolveResult solve(const PlanningProblem& p, const Vec& w0);

/// Chain problem at the MAP hidden state (argmax p(M), ties to the lowest
/// index, θ at its mean), without disturbances.
PlanningProblem certainty_equivalent(const PlanningProblem& p);

struct WarmStartResult {
  Vec w;                         // guess for the dual problem
  std::vector<Vec> ce_inputs;    // step 1 (empty when skipped)
  SolverReport nondual_report;   // step 2
  Rollout rollout;               // step 3 beliefs
};

/// Three-step initialization: certainty-equivalent chain at the MAP
/// hidden state, the non-dual tree problem seeded from it, then a dual
/// belief rollout along that solution which also fixes θ̄ on every node.
/// `p` must be assembled with dual belief dynamics; its θ̄ is updated.
WarmStartResult warm_start(PlanningProblem& p, bool ce_step = true);

/// Sets θ̄ on every node from the beliefs of a rollout (parent beliefs).
void set_theta_bar_from_rollout(PlanningProblem& p, const Rollout& r);

struct BeliefSensitivity {
  double trace = 0.0;    // d/dε of Σ trace(Σ^θ) at the node
  double entropy = 0.0;  // d/dε of H(p(M))
};

/// Central finite difference along `direction` in the root robot input of
/// the belief at `node` (the first dual node when −1).
BeliefSensitivity belief_gradient_check(const PlanningProblem& p, const Vec& w,
                                        const Vec& direction, int node = -1, double h = 1e-5);

/// JSON dump of the problem layout and constraint residuals at w.
std::string dump_problem(const PlanningProblem& p, const Vec& w);

}  // namespace dualmpc
