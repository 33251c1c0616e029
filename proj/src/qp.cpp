#include "dualmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dualmpc {

QpProblem QpProblem::unconstrained(const Mat& h, const Vec& g) {
  QpProblem p;
  const Eigen::Index n = g.size();
  p.h = h;
  p.g = g;
  p.lb = Vec::Constant(n, -std::numeric_limits<double>::infinity());
  p.ub = Vec::Constant(n, std::numeric_limits<double>::infinity());
  p.a = Mat(0, n);
  p.c = Vec(0);
  p.w1 = Vec(0);
  p.w2 = Vec(0);
  p.hard = Mat(0, n);
  p.hard_rhs = Vec(0);
  return p;
}

void QpProblem::validate() const {
  const int nn = n();
  require(h.rows() == nn && h.cols() == nn, "qp: Hessian has wrong shape");
  require(lb.size() == nn && ub.size() == nn, "qp: bounds have wrong length");
  require((lb.array() <= ub.array()).all(), "qp: lower bound above upper bound");
  require(a.rows() == c.size() && a.cols() == nn, "qp: elastic rows have wrong shape");
  require(w1.size() == c.size() && w2.size() == c.size(), "qp: elastic weights have wrong length");
  require((w1.array() >= 0.0).all() && (w2.array() >= 0.0).all(), "qp: negative elastic weight");
  require(hard.rows() == hard_rhs.size() && hard.cols() == nn, "qp: hard rows have wrong shape");
  require(h.allFinite() && g.allFinite() && a.allFinite() && c.allFinite(), "qp: non-finite data");
}

double qp_objective(const QpProblem& p, const Vec& x) {
  double f = 0.5 * x.dot(p.h * x) + p.g.dot(x);
  if (p.elastic_rows() > 0) {
    const Vec z = p.a * x + p.c;
    for (int j = 0; j < p.elastic_rows(); ++j) {
      const double s = std::max(0.0, z[j]);
      f += p.w1[j] * s + 0.5 * p.w2[j] * s * s;
    }
  }
  return f;
}

namespace {

// Largest α ∈ (0, 1] keeping v + α dv ≥ 0, scaled by the fraction-to-boundary rule.
double max_step(const Vec& v, const Vec& dv, double frac) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -frac * v[i] / dv[i]);
  return a;
}

struct Group {
  Vec z, l;    // slack and multiplier
  Vec dz, dl;  // step
  Vec rp, v;   // primal residual and elimination term
};

}  // namespace

QpSolution solve_qp(const QpProblem& p, const QpOptions& opts) {
  p.validate();
  const int n = p.n(), m = p.elastic_rows(), k = p.hard_rows();
  std::vector<int> up_idx, lo_idx;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(p.ub[i])) up_idx.push_back(i);
    if (std::isfinite(p.lb[i])) lo_idx.push_back(i);
  }
  const int nu = static_cast<int>(up_idx.size()), nl = static_cast<int>(lo_idx.size());

  Vec x = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double lo = p.lb[i], hi = p.ub[i];
    if (std::isfinite(lo) && std::isfinite(hi)) x[i] = std::clamp(0.0, lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
    else if (std::isfinite(lo)) x[i] = std::max(0.0, lo + 1.0);
    else if (std::isfinite(hi)) x[i] = std::min(0.0, hi - 1.0);
  }
  Vec s = m > 0 ? Vec((p.a * x + p.c).cwiseMax(0.0).array() + 1.0) : Vec(0);

  Group e, sp, hd, ub, lb;
  auto primal = [&]() {
    e.rp = m > 0 ? Vec(p.a * x + p.c - s) : Vec(0);  // + z
    sp.rp = -s;
    hd.rp = k > 0 ? Vec(p.hard * x - p.hard_rhs) : Vec(0);
    ub.rp.resize(nu);
    for (int i = 0; i < nu; ++i) ub.rp[i] = x[up_idx[i]] - p.ub[up_idx[i]];
    lb.rp.resize(nl);
    for (int i = 0; i < nl; ++i) lb.rp[i] = p.lb[lo_idx[i]] - x[lo_idx[i]];
  };
  primal();
  Group* groups[] = {&e, &sp, &hd, &ub, &lb};
  for (Group* gr : groups) gr->z = (-gr->rp).cwiseMax(1.0);
  e.l = m > 0 ? Vec(p.w1.cwiseMax(1.0) * 0.5) : Vec(0);
  sp.l = e.l;
  hd.l = Vec::Ones(k);
  ub.l = Vec::Ones(nu);
  lb.l = Vec::Ones(nl);
  const int total = 2 * m + k + nu + nl;

  const double scale_d =
      1.0 + std::max(p.g.lpNorm<Eigen::Infinity>(), m > 0 ? p.w1.lpNorm<Eigen::Infinity>() : 0.0);
  QpSolution sol;
  double best_kkt = std::numeric_limits<double>::infinity();
  Vec best_x = x, best_s = s;
  for (int it = 0; it < opts.max_iter; ++it) {
    sol.iterations = it;
    primal();
    for (Group* gr : groups) gr->rp += gr->z;
    Vec rx = p.h * x + p.g;
    if (m > 0) rx += p.a.transpose() * e.l;
    if (k > 0) rx += p.hard.transpose() * hd.l;
    for (int i = 0; i < nu; ++i) rx[up_idx[i]] += ub.l[i];
    for (int i = 0; i < nl; ++i) rx[lo_idx[i]] -= lb.l[i];
    Vec rs = m > 0 ? Vec(p.w1 + p.w2.cwiseProduct(s) - e.l - sp.l) : Vec(0);

    double gap = 0.0, rp_max = 0.0;
    for (Group* gr : groups) {
      gap += gr->z.dot(gr->l);
      if (gr->rp.size() > 0) rp_max = std::max(rp_max, gr->rp.lpNorm<Eigen::Infinity>());
    }
    const double mu = total > 0 ? gap / total : 0.0;
    const double rd_max = std::max(rx.size() ? rx.lpNorm<Eigen::Infinity>() : 0.0,
                                   rs.size() ? rs.lpNorm<Eigen::Infinity>() : 0.0);
    const double obj = 0.5 * x.dot(p.h * x) + p.g.dot(x) +
                       (m > 0 ? p.w1.dot(s) + 0.5 * s.dot(p.w2.cwiseProduct(s)) : 0.0);
    const double kkt = std::max({rd_max / scale_d, rp_max / (1.0 + x.lpNorm<Eigen::Infinity>()),
                                 gap / (1.0 + std::abs(obj))});
    if (kkt < best_kkt) {
      best_kkt = kkt;
      best_x = x;
      best_s = s;
    }
    if (kkt <= opts.tol) break;
    // Once the gap has collapsed further iterations only amplify round-off.
    if (total > 0 && gap <= 1e-15 * (1.0 + std::abs(obj))) break;

    // Reduced Newton matrix.
    Vec d1(m), d2(m), ediag(m);
    for (int j = 0; j < m; ++j) {
      d1[j] = e.l[j] / e.z[j];
      d2[j] = sp.l[j] / sp.z[j];
      ediag[j] = p.w2[j] + d1[j] + d2[j];
    }
    Mat kk = p.h;
    if (m > 0) {
      const Vec w = d1 - d1.cwiseProduct(d1).cwiseQuotient(ediag);
      kk.noalias() += p.a.transpose() * w.asDiagonal() * p.a;
    }
    if (k > 0) {
      const Vec d3 = hd.l.cwiseQuotient(hd.z);
      kk.noalias() += p.hard.transpose() * d3.asDiagonal() * p.hard;
    }
    for (int i = 0; i < nu; ++i) kk(up_idx[i], up_idx[i]) += ub.l[i] / ub.z[i];
    for (int i = 0; i < nl; ++i) kk(lo_idx[i], lo_idx[i]) += lb.l[i] / lb.z[i];
    const double reg = 1e-14 * (1.0 + kk.diagonal().cwiseAbs().maxCoeff());
    kk.diagonal().array() += reg;
    const Eigen::LDLT<Mat> fac(kk);
    if (fac.info() != Eigen::Success) break;

    auto solve_dir = [&](const std::vector<Vec>& rc) {
      // rc: complementarity residuals per group (order of `groups`).
      for (int gi = 0; gi < 5; ++gi) {
        Group* gr = groups[gi];
        gr->v = (-rc[gi] + gr->l.cwiseProduct(gr->rp)).cwiseQuotient(gr->z);
      }
      Vec rhs_x = -rx;
      if (m > 0) rhs_x -= p.a.transpose() * e.v;
      if (k > 0) rhs_x -= p.hard.transpose() * hd.v;
      for (int i = 0; i < nu; ++i) rhs_x[up_idx[i]] -= ub.v[i];
      for (int i = 0; i < nl; ++i) rhs_x[lo_idx[i]] += lb.v[i];
      Vec rhs_s = m > 0 ? Vec(-rs + e.v + sp.v) : Vec(0);
      if (m > 0) rhs_x += p.a.transpose() * d1.cwiseProduct(rhs_s.cwiseQuotient(ediag));
      const Vec dx = fac.solve(rhs_x);
      Vec ds(m);
      if (m > 0) ds = (rhs_s + d1.cwiseProduct(p.a * dx)).cwiseQuotient(ediag);
      // Row-space directions C_i d for each group.
      const Vec ce = m > 0 ? Vec(p.a * dx - ds) : Vec(0);
      const Vec cs = -ds;
      const Vec ch = k > 0 ? Vec(p.hard * dx) : Vec(0);
      Vec cu(nu), cl(nl);
      for (int i = 0; i < nu; ++i) cu[i] = dx[up_idx[i]];
      for (int i = 0; i < nl; ++i) cl[i] = -dx[lo_idx[i]];
      const Vec* cd[] = {&ce, &cs, &ch, &cu, &cl};
      for (int gi = 0; gi < 5; ++gi) {
        Group* gr = groups[gi];
        gr->dz = -gr->rp - *cd[gi];
        gr->dl = gr->v + gr->l.cwiseProduct(*cd[gi]).cwiseQuotient(gr->z);
      }
      return std::pair<Vec, Vec>(dx, ds);
    };

    std::vector<Vec> rc(5);
    for (int gi = 0; gi < 5; ++gi) rc[gi] = groups[gi]->l.cwiseProduct(groups[gi]->z);
    solve_dir(rc);
    double ap = 1.0, ad = 1.0;
    for (Group* gr : groups) {
      ap = std::min(ap, max_step(gr->z, gr->dz, 1.0));
      ad = std::min(ad, max_step(gr->l, gr->dl, 1.0));
    }
    const double a_aff = std::min(ap, ad);
    double mu_aff = 0.0;
    for (Group* gr : groups) mu_aff += (gr->z + a_aff * gr->dz).dot(gr->l + a_aff * gr->dl);
    mu_aff /= std::max(total, 1);
    const double sigma = mu > 0.0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;
    for (int gi = 0; gi < 5; ++gi) {
      Group* gr = groups[gi];
      rc[gi] = gr->l.cwiseProduct(gr->z) + gr->dl.cwiseProduct(gr->dz) -
               Vec::Constant(gr->z.size(), sigma * mu);
    }
    const auto [dx, ds] = solve_dir(rc);
    ap = 1.0;
    ad = 1.0;
    for (Group* gr : groups) {
      ap = std::min(ap, max_step(gr->z, gr->dz, 0.995));
      ad = std::min(ad, max_step(gr->l, gr->dl, 0.995));
    }
    // One step length for primal and dual: the Hessian couples x with the
    // multipliers, so split steps would spoil the dual residual.
    const double alpha = std::min(ap, ad);
    x += alpha * dx;
    if (m > 0) s += alpha * ds;
    for (Group* gr : groups) {
      gr->z += alpha * gr->dz;
      gr->l += alpha * gr->dl;
    }
    sol.iterations = it + 1;
  }
  sol.x = best_x;
  sol.s = best_s;
  sol.kkt_residual = best_kkt;
  sol.converged = best_kkt <= opts.stall_tol;
  sol.objective = qp_objective(p, x);
  return sol;
}

}  // namespace dualmpc
