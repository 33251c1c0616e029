#pragma once

#include <vector>

#include "dualmpc/costs.hpp"
#include "dualmpc/dynamics.hpp"

namespace dualmpc {

/// Player p's stage and terminal costs. Player 0 controls the model's robot
/// input, player h+1 controls human h's input. ControlTerm indices refer to
/// the stacked input [uR; uH].
struct PlayerCost {
  ResidualCost stage;
  ResidualCost terminal;
};

struct GameOptions {
  int horizon = 15;
  double tol = 1e-6;
  int max_iter = 100;
  double backtrack = 0.5;
  int max_backtracks = 30;
  double max_deviation = 10.0;  // accepted steps move no state by more than this
  bool descent_check = false;   // forced on for single-player games
};

/// Per-stage affine strategies u_t(x) = ū_t − P_t (x − x̄_t) − α_t, stacked
/// over players.
struct FeedbackStrategy {
  std::vector<Mat> gains;  // P_t, m × n
  std::vector<Vec> feedforward;  // α_t
  std::vector<Vec> xs;  // nominal states x̄_t (length horizon + 1)
  std::vector<Vec> us;  // nominal inputs ū_t

  int horizon() const { return static_cast<int>(gains.size()); }
  Vec policy(int t, const Vec& x) const { return us[t] - gains[t] * (x - xs[t]) - feedforward[t]; }
};

struct GameSolution {
  FeedbackStrategy strategy;
  std::vector<std::pair<int, int>> input_slices;  // (offset, size) per player
  // Quadratic data of the final backward pass.
  std::vector<Mat> a, b;                       // per stage
  std::vector<std::vector<Mat>> q_mat, r_mat;  // [player][stage]
  std::vector<std::vector<Vec>> q_vec, r_vec;
  std::vector<std::vector<Mat>> z;     // [player][stage] value Hessians, stages 0..H
  std::vector<std::vector<Vec>> zeta;  // value gradients
  std::vector<double> player_costs;
  std::vector<std::vector<double>> cost_history;  // per accepted iterate
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;
  int num_players() const { return static_cast<int>(input_slices.size()); }
};

/// Iterative LQ game: linearize, quadraticize, solve the coupled Riccati
/// equations for feedback Nash gains, line-search the forward rollout.
/// `init_u` may be empty (zero controls).
GameSolution solve_ilq_game(const DynamicsModel& model, const std::vector<PlayerCost>& costs,
                            const Vec& x0, const std::vector<Vec>& init_u,
                            const GameOptions& opts = {});

/// One coupled Riccati backward pass along the given trajectory.
void game_backward_pass(const DynamicsModel& model, const std::vector<PlayerCost>& costs,
                        const std::vector<Vec>& xs, const std::vector<Vec>& us,
                        GameSolution& out);

/// Quadratic utility Q(x, uR, uH) = c + gᵀw + ½wᵀHw with
/// w = (x − x̄, uR − ūR, uH − ūH), valid around the point (x̄, ūR, ūH).
struct QModel {
  Vec x0, ur0, uh0;
  Mat hxx, hxr, hxh, hrr, hrh, hhh;
  Vec gx, gr, gh;
  double c = 0.0;

  int nx() const { return static_cast<int>(x0.size()); }
  int nr() const { return static_cast<int>(ur0.size()); }
  int nh() const { return static_cast<int>(uh0.size()); }

  double value(const Vec& x, const Vec& ur, const Vec& uh) const;
  Vec grad_uh(const Vec& x, const Vec& ur, const Vec& uh) const;
  Vec grad_ur(const Vec& x, const Vec& ur, const Vec& uh) const;
  Mat hessian() const;
  /// Throws NumericalError unless the uH block is negative definite.
  void require_concave() const;
  /// Unconstrained maximizer over uH, as an affine map
  /// uH*(x, uR) = k + Kx (x − x̄) + Kr (uR − ūR).
  void argmax_affine(Vec& k, Mat& kx, Mat& kr) const;
  Vec argmax(const Vec& x, const Vec& ur) const;

  /// Re-expresses the model on a larger state whose entry index_map[i]
  /// holds this model's state entry i. Extra states carry no weight.
  QModel embed(const std::vector<int>& index_map, const Vec& full_x0) const;
  /// Replaces uR by the affine rule uR − ūR = Kx (x − x̄) + k; the result has
  /// no uR dependence.
  QModel substitute_robot(const Mat& kx, const Vec& k) const;
  /// Adds an (unused) robot input of dimension nr to a model that has none.
  QModel with_robot_input(const Vec& ur0_new) const;
};

/// Q of player `player` at `stage`: minus the stage cost plus the quadratic
/// cost-to-go, with uR = player `robot_player`'s input kept free and every
/// other player on its feedback strategy. robot_player = -1 keeps no robot
/// input (single-player games).
QModel q_model_from_game(const GameSolution& sol, int stage, int player, int robot_player);

/// Mode N: robot input replaced by its Nash feedback.
QModel nash_q(const QModel& q, const GameSolution& sol, int stage, int robot_player);
/// Mode p: robot input replaced by the minimizer over U^R of max_uH Q.
QModel worst_case_q(const QModel& q, const ControlBounds& robot_bounds, const Vec& x);
/// Mode w: robot input replaced by the maximizer over U^R of max_uH Q.
QModel best_case_q(const QModel& q, const ControlBounds& robot_bounds, const Vec& x);
/// Mode o: a single-player model with robot terms removed, lifted onto the
/// joint state with a zero-weight robot input.
QModel oblivious_q(const QModel& single_player, const std::vector<int>& index_map,
                   const Vec& full_x0, const Vec& ur0);

/// max over uH of Q as a quadratic in (x, uR): value and blocks.
struct RobotValue {
  Mat vxx, vxr, vrr;
  Vec vx, vr;
  double c = 0.0;
  double value(const Vec& dx, const Vec& dr) const;
};
RobotValue robot_value(const QModel& q);

}  // namespace dualmpc
