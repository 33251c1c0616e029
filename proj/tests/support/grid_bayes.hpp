#pragma once

// Brute-force Bayes filter over a 1-D θ grid and a finite mode set, for
// y = h_M θ + N(0, r_M). Shared by unit and acceptance tests.

#include <cmath>
#include <vector>

namespace grid_bayes {

struct Grid {
  double lo, hi;
  int n;
  double at(int j) const { return lo + (hi - lo) * j / (n - 1); }
};

struct Filter {
  Grid grid;
  std::vector<std::vector<double>> w;  // [mode][grid point], sums to one overall

  Filter(Grid g, const std::vector<double>& p, const std::vector<double>& mean,
         const std::vector<double>& var)
      : grid(g) {
    for (size_t m = 0; m < p.size(); ++m) {
      std::vector<double> row(g.n);
      double s = 0.0;
      for (int j = 0; j < g.n; ++j) {
        const double d = g.at(j) - mean[m];
        row[j] = std::exp(-0.5 * d * d / var[m]);
        s += row[j];
      }
      for (double& v : row) v *= p[m] / s;
      w.push_back(row);
    }
  }

  void update(double y, const std::vector<double>& h, const std::vector<double>& r) {
    double total = 0.0;
    for (size_t m = 0; m < w.size(); ++m) {
      for (int j = 0; j < grid.n; ++j) {
        const double d = y - h[m] * grid.at(j);
        w[m][j] *= std::exp(-0.5 * d * d / r[m]) / std::sqrt(r[m]);
        total += w[m][j];
      }
    }
    for (auto& row : w)
      for (double& v : row) v /= total;
  }

  /// Total variation distance to a Gaussian-per-mode belief discretized on
  /// the same grid.
  double tv(const std::vector<double>& p, const std::vector<double>& mean,
            const std::vector<double>& var) const {
    const Filter other(grid, p, mean, var);
    double d = 0.0;
    for (size_t m = 0; m < w.size(); ++m)
      for (int j = 0; j < grid.n; ++j) d += std::abs(w[m][j] - other.w[m][j]);
    return 0.5 * d;
  }
};

}  // namespace grid_bayes
