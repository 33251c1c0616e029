#include "dualmpc/costs.hpp"

namespace dualmpc {

namespace {

using Dyn = Eigen::AutoDiffScalar<Vec>;

VecT<Dyn> seed_ad(const Vec& v) {
  VecT<Dyn> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = Dyn(v[i], v.size(), i);
  return out;
}

void gauss_newton(const std::vector<Dyn>& r, Eigen::Index n, Mat& h, Vec& g) {
  h = Mat::Zero(n, n);
  g = Vec::Zero(n);
  for (const auto& ri : r) {
    Vec j = ri.derivatives().size() == n ? Vec(ri.derivatives()) : Vec(Vec::Zero(n));
    h.noalias() += 2.0 * j * j.transpose();
    g.noalias() += 2.0 * ri.value() * j;
  }
}

}  // namespace

double ResidualCost::state_cost(const Vec& x) const {
  std::vector<double> r(state_residuals());
  state_residuals<double>(x, r.data());
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

double ResidualCost::control_cost(const Vec& u) const {
  std::vector<double> r(control_residuals());
  control_residuals<double>(u, r.data());
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

void ResidualCost::quadraticize_state(const Vec& x, Mat& q_mat, Vec& q_vec) const {
  std::vector<Dyn> r(state_residuals());
  state_residuals<Dyn>(seed_ad(x), r.data());
  gauss_newton(r, x.size(), q_mat, q_vec);
}

void ResidualCost::quadraticize_control(const Vec& u, Mat& r_mat, Vec& r_vec) const {
  std::vector<Dyn> r(control_residuals());
  control_residuals<Dyn>(seed_ad(u), r.data());
  gauss_newton(r, u.size(), r_mat, r_vec);
}

}  // namespace dualmpc
