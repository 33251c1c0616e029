#pragma once

// Stage costs written as sums of squared residuals, ℓ = Σ r_k². The game
// solver quadraticizes them by Gauss-Newton and the tree optimizer reuses
// the residual form for its Hessian model.

#include <vector>

#include "dualmpc/linalg.hpp"

namespace dualmpc {

/// r = √w (x_i − target)
struct TrackingTerm {
  int index = 0;
  double weight = 0.0;
  double target = 0.0;
};

/// r = √w (u_i − target), u the stacked input of all players.
struct ControlTerm {
  int index = 0;
  double weight = 0.0;
  double target = 0.0;
};

/// Elliptic separation between two agents' positions,
/// h = 1 − (Δx/a)² − (Δy/b)², with h > 0 inside the ellipse.
/// Penalty residual r = √w κ softplus((h + margin)/κ).
struct ProximityTerm {
  int ax = 0, ay = 1;  // first agent position indices (ay = -1 for 1-D)
  int bx = 0, by = 1;
  double semi_x = 1.0;
  double semi_y = 1.0;
  double weight = 0.0;
  double margin = 0.0;
  double kappa = 0.1;
};

/// Half-plane h = sign·(x_i − bound), penalty κ softplus((h + margin)/κ).
struct HalfPlaneTerm {
  int index = 0;
  double bound = 0.0;
  double sign = 1.0;
  double weight = 0.0;
  double margin = 0.0;
  double kappa = 0.1;
};

template <class T>
T ellipse_h(const VecT<T>& x, const ProximityTerm& p) {
  const T dx = (x[p.ax] - x[p.bx]) / p.semi_x;
  T h = T(1.0) - dx * dx;
  if (p.ay >= 0 && p.by >= 0) {
    const T dy = (x[p.ay] - x[p.by]) / p.semi_y;
    h -= dy * dy;
  }
  return h;
}

template <class T>
T halfplane_h(const VecT<T>& x, const HalfPlaneTerm& p) {
  return (x[p.index] - p.bound) * p.sign;
}

/// Residual cost of one player (or of the robot in the tree problem).
struct ResidualCost {
  std::vector<TrackingTerm> tracking;
  std::vector<ControlTerm> control;
  std::vector<ProximityTerm> proximity;
  std::vector<HalfPlaneTerm> halfplanes;

  int state_residuals() const {
    return static_cast<int>(tracking.size() + proximity.size() + halfplanes.size());
  }
  int control_residuals() const { return static_cast<int>(control.size()); }

  /// Residuals depending on x only.
  template <class T>
  void state_residuals(const VecT<T>& x, T* out) const {
    int k = 0;
    for (const auto& t : tracking) out[k++] = (x[t.index] - t.target) * std::sqrt(t.weight);
    for (const auto& p : proximity)
      out[k++] = softplus<T>(ellipse_h<T>(x, p) + p.margin, p.kappa) * std::sqrt(p.weight);
    for (const auto& h : halfplanes)
      out[k++] = softplus<T>(halfplane_h<T>(x, h) + h.margin, h.kappa) * std::sqrt(h.weight);
  }

  /// Residuals depending on the stacked input only.
  template <class T>
  void control_residuals(const VecT<T>& u, T* out) const {
    int k = 0;
    for (const auto& c : control) out[k++] = (u[c.index] - c.target) * std::sqrt(c.weight);
  }

  double state_cost(const Vec& x) const;
  double control_cost(const Vec& u) const;
  double cost(const Vec& x, const Vec& u) const { return state_cost(x) + control_cost(u); }

  /// Gauss-Newton quadratic model around x: ℓ ≈ c + qᵀδx + ½δxᵀQδx.
  void quadraticize_state(const Vec& x, Mat& q_mat, Vec& q_vec) const;
  void quadraticize_control(const Vec& u, Mat& r_mat, Vec& r_vec) const;
};

}  // namespace dualmpc
