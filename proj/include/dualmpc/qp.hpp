#pragma once

#include "dualmpc/common.hpp"

namespace dualmpc {

/// Convex QP with elastic rows:
///   min ½ xᵀHx + gᵀx + Σ_j (w1_j s_j + ½ w2_j s_j²)
///   s.t. a_jᵀx + c_j ≤ s_j, s_j ≥ 0   (elastic rows)
///        G x ≤ r                        (hard rows)
///        lb ≤ x ≤ ub                    (entries may be ±inf)
/// Eliminating s, each elastic row costs w1·max(0, z) + ½w2·max(0, z)².
struct QpProblem {
  Mat h;
  Vec g;
  Vec lb;
  Vec ub;
  Mat a;
  Vec c;
  Vec w1;
  Vec w2;
  Mat hard;
  Vec hard_rhs;

  int n() const { return static_cast<int>(g.size()); }
  int elastic_rows() const { return static_cast<int>(c.size()); }
  int hard_rows() const { return static_cast<int>(hard_rhs.size()); }
  /// Empty containers for a problem with n variables and no rows.
  static QpProblem unconstrained(const Mat& h, const Vec& g);
  void validate() const;
};

struct QpOptions {
  double tol = 1e-9;        // relative KKT residual for early exit
  double stall_tol = 1e-7;  // residual still reported as converged after a stall
  int max_iter = 100;
};

struct QpSolution {
  Vec x;
  Vec s;
  double objective = 0.0;
  int iterations = 0;
  double kkt_residual = 0.0;
  bool converged = false;
};

/// Objective with the elastic slacks at their optimal values for fixed x.
double qp_objective(const QpProblem& p, const Vec& x);

/// Mehrotra predictor-corrector interior-point method. The slack block is
/// eliminated analytically, so each iteration factors one n×n matrix.
QpSolution solve_qp(const QpProblem& p, const QpOptions& opts = {});

}  // namespace dualmpc
