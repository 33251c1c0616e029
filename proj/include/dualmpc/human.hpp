#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dualmpc/lqgame.hpp"
#include "dualmpc/rng.hpp"

namespace dualmpc {

/// How a basis policy's Q-function treats the robot input.
enum class RobotResponse {
  Responsive,  // Q depends on the robot's actual input
  Nash,        // robot assumed on its Nash feedback (mode N)
  Protected,   // robot assumed to minimize the human's value (mode p)
  Wishful,     // robot assumed to maximize the human's value (mode w)
  Oblivious,   // robot ignored entirely (mode o)
};

const char* to_string(RobotResponse r);
RobotResponse robot_response_from_string(const std::string& s);

/// Game defining Q_i^M for one (basis i, mode M). For Oblivious the human's
/// cost is written in the human's own state/input coordinates and the game
/// has one player; otherwise the game is played on the (robot, human) pair
/// with the pair's stacked state and input [uR; uH].
struct BasisGame {
  RobotResponse response = RobotResponse::Responsive;
  PlayerCost human_cost;
  PlayerCost robot_cost;
};

struct HumanBehaviorModel {
  int human = 0;  // index among the dynamics model's humans
  std::vector<std::string> modes;
  std::vector<std::string> bases;
  std::vector<std::vector<BasisGame>> games;  // [mode][basis]
  double beta = 1.0;
  GameOptions game;

  int num_modes() const { return static_cast<int>(modes.size()); }
  int n_theta() const { return static_cast<int>(bases.size()); }
  void validate() const;
};

/// Gaussian policy N(mean, cov) from the Laplace approximation.
struct LaplacePolicy {
  Vec mean;
  Mat cov;
  bool clipped = false;  // stationary point was outside U^H and got projected
};

/// Laplace mean as an affine function of (x, uR) plus its covariance, valid
/// around the game's nominal point at one stage.
struct LaplaceMap {
  Vec k;
  Mat kx;
  Mat kr;
  Vec x0;
  Vec ur0;
  Mat cov;

  template <class T>
  VecT<T> mean(const VecT<T>& x, const VecT<T>& ur) const {
    VecT<T> out = k.template cast<T>();
    const VecT<T> dx = x - x0.template cast<T>();
    const VecT<T> dr = ur - ur0.template cast<T>();
    for (Eigen::Index i = 0; i < k.size(); ++i) {
      for (Eigen::Index j = 0; j < dx.size(); ++j)
        if (kx(i, j) != 0.0) out[i] += dx[j] * kx(i, j);
      for (Eigen::Index j = 0; j < dr.size(); ++j)
        if (kr(i, j) != 0.0) out[i] += dr[j] * kr(i, j);
    }
    return out;
  }
  Vec mean(const Vec& x, const Vec& ur) const { return mean<double>(x, ur); }
};

LaplaceMap laplace_map(const QModel& q, double beta);

/// Per-stage Q-models and Laplace maps of one human for every (mode, basis),
/// computed from games solved at the current joint state.
struct HumanPrediction {
  int human = 0;
  std::vector<std::vector<std::vector<QModel>>> q;        // [stage][mode][basis]
  std::vector<std::vector<std::vector<LaplaceMap>>> maps;  // [stage][mode][basis]
  std::vector<std::vector<bool>> game_converged;           // [mode][basis]

  int stages() const { return static_cast<int>(maps.size()); }
  int num_modes() const { return maps.empty() ? 0 : static_cast<int>(maps[0].size()); }
  int n_theta() const { return num_modes() == 0 ? 0 : static_cast<int>(maps[0][0].size()); }
  int nh() const { return static_cast<int>(maps[0][0][0].k.size()); }
  const LaplaceMap& map(int stage, int mode, int basis) const {
    return maps[std::min(stage, stages() - 1)][mode][basis];
  }

  /// U^M(x, uR): columns are the Laplace means of the bases.
  template <class T>
  MatT<T> basis_matrix(int stage, int mode, const VecT<T>& x, const VecT<T>& ur) const {
    MatT<T> u(nh(), n_theta());
    for (int i = 0; i < n_theta(); ++i) u.col(i) = map(stage, mode, i).mean<T>(x, ur);
    return u;
  }
  Mat basis_matrix(int stage, int mode, const Vec& x, const Vec& ur) const {
    return basis_matrix<double>(stage, mode, x, ur);
  }
  const Mat& basis_cov(int stage, int mode, int basis) const {
    return map(stage, mode, basis).cov;
  }
};

/// Solves the basis games of one human at joint state x and keeps the
/// previous solutions as warm starts for the next call.
class HumanPredictor {
 public:
  HumanPredictor() = default;
  HumanPredictor(const DynamicsModel& joint, HumanBehaviorModel model);

  HumanPrediction predict(const Vec& x, int stages);
  const HumanBehaviorModel& model() const { return model_; }
  void reset();

 private:
  DynamicsModel joint_;
  HumanBehaviorModel model_;
  DynamicsModel pair_;
  DynamicsModel solo_;
  std::vector<int> pair_map_;  // pair state index -> joint state index
  std::vector<int> solo_map_;
  std::vector<std::vector<std::vector<Vec>>> warm_;  // [mode][basis] controls
};

// --- Boltzmann model -------------------------------------------------------

/// exp(β Q(x, uR, uH)); with `normalized` the density integrates to one over
/// R^{m_H} (closed-form Gaussian integral of the quadratic Q).
double boltzmann_density(const QModel& q, double beta, const Vec& x, const Vec& ur, const Vec& uh,
                         bool normalized = false);

/// Mean = argmax of the quadratic Q, clipped to U^H if it lies outside;
/// covariance = (−∇²_uH Q)⁻¹ / β.
LaplacePolicy laplace_approx(const QModel& q, double beta, const Vec& x, const Vec& ur,
                             const ControlBounds& bounds);

/// Laplace approximation of a general smooth utility given its gradient and
/// Hessian in uH; the stationary point is found by damped Newton iterations.
LaplacePolicy laplace_approx_numeric(const std::function<Vec(const Vec&)>& grad,
                                     const std::function<Mat(const Vec&)>& hess,
                                     const std::function<double(const Vec&)>& value,
                                     const Vec& u0, double beta, const ControlBounds& bounds,
                                     double tol = 1e-12, int max_iter = 100);

/// Draw from N(Σ θ_i μ_i, Σ θ_i² Σ_i), projected onto the bounds (pass no
/// bounds to skip the projection).
Vec sample_human_action(const std::vector<Vec>& means, const std::vector<Mat>& covs,
                        const Vec& theta, Rng& rng, const std::optional<ControlBounds>& bounds);

/// Executed action of a simulated human with hidden state (θ*, M*) at x,
/// reacting to the robot input uR. Uses the stage-0 models of a prediction
/// made at x.
Vec simulate_human(const HumanPrediction& pred, const Vec& theta, int mode, const Vec& x,
                   const Vec& ur, const ControlBounds& bounds, Rng& rng, bool noise = true);

}  // namespace dualmpc
