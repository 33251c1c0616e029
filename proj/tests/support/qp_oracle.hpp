#pragma once

// Exact solution of small strictly convex QPs min ½yᵀQy + qᵀy s.t. Cy ≤ d by
// enumerating active sets and checking the KKT conditions.

#include <Eigen/Dense>
#include <optional>

namespace qp_oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline std::optional<Vec> solve(const Mat& q, const Vec& qv, const Mat& c, const Vec& d,
                                double tol = 1e-9) {
  const int n = static_cast<int>(qv.size());
  const int m = static_cast<int>(d.size());
  std::optional<Vec> best;
  double best_f = 0.0;
  for (long mask = 0; mask < (1L << m); ++mask) {
    std::vector<int> act;
    for (int j = 0; j < m; ++j)
      if (mask & (1L << j)) act.push_back(j);
    const int k = static_cast<int>(act.size());
    if (k > n) continue;
    Mat kkt = Mat::Zero(n + k, n + k);
    Vec rhs(n + k);
    kkt.topLeftCorner(n, n) = q;
    rhs.head(n) = -qv;
    for (int i = 0; i < k; ++i) {
      kkt.block(0, n + i, n, 1) = c.row(act[i]).transpose();
      kkt.block(n + i, 0, 1, n) = c.row(act[i]);
      rhs[n + i] = d[act[i]];
    }
    Eigen::FullPivLU<Mat> lu(kkt);
    if (lu.rank() < n + k) continue;
    const Vec sol = lu.solve(rhs);
    const Vec y = sol.head(n);
    const Vec lam = sol.tail(k);
    if (k > 0 && lam.minCoeff() < -tol) continue;
    if (m > 0 && ((c * y - d).array() > tol).any()) continue;
    const double f = 0.5 * y.dot(q * y) + qv.dot(y);
    if (!best || f < best_f) {
      best = y;
      best_f = f;
    }
  }
  return best;
}

}  // namespace qp_oracle
