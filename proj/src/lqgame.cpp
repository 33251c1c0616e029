#include "dualmpc/lqgame.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace dualmpc {

namespace {

std::vector<std::pair<int, int>> player_slices(const DynamicsModel& model) {
  std::vector<std::pair<int, int>> s;
  s.emplace_back(0, model.nr());
  for (int h = 0; h < model.num_humans(); ++h)
    s.emplace_back(model.nr() + model.human_input_offset(h), model.human(h).nu);
  return s;
}

Vec step_stacked(const DynamicsModel& model, const Vec& x, const Vec& u) {
  return model.step(x, u.head(model.nr()), u.tail(model.nh()));
}

std::vector<double> player_costs(const std::vector<PlayerCost>& costs, const std::vector<Vec>& xs,
                                 const std::vector<Vec>& us) {
  std::vector<double> out(costs.size(), 0.0);
  const int h = static_cast<int>(us.size());
  for (size_t p = 0; p < costs.size(); ++p) {
    double s = 0.0;
    for (int t = 0; t < h; ++t) s += costs[p].stage.cost(xs[t], us[t]);
    s += costs[p].terminal.state_cost(xs[h]);
    out[p] = s;
  }
  return out;
}

double max_abs_change(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).lpNorm<Eigen::Infinity>());
  return m;
}

bool finite_traj(const std::vector<Vec>& xs) {
  for (const auto& x : xs)
    if (!x.allFinite()) return false;
  return true;
}

}  // namespace

void game_backward_pass(const DynamicsModel& model, const std::vector<PlayerCost>& costs,
                        const std::vector<Vec>& xs, const std::vector<Vec>& us,
                        GameSolution& out) {
  const int n = model.nx();
  const int m = model.nr() + model.nh();
  const int hz = static_cast<int>(us.size());
  const int np = static_cast<int>(costs.size());
  out.input_slices = player_slices(model);
  require(static_cast<int>(out.input_slices.size()) == np,
          "solve_ilq_game: one cost per player is required");

  out.a.assign(hz, Mat());
  out.b.assign(hz, Mat());
  out.q_mat.assign(np, std::vector<Mat>(hz));
  out.q_vec.assign(np, std::vector<Vec>(hz));
  out.r_mat.assign(np, std::vector<Mat>(hz));
  out.r_vec.assign(np, std::vector<Vec>(hz));
  out.z.assign(np, std::vector<Mat>(hz + 1));
  out.zeta.assign(np, std::vector<Vec>(hz + 1));
  out.strategy.gains.assign(hz, Mat());
  out.strategy.feedforward.assign(hz, Vec());
  out.strategy.xs = xs;
  out.strategy.us = us;

  for (int p = 0; p < np; ++p) costs[p].terminal.quadraticize_state(xs[hz], out.z[p][hz], out.zeta[p][hz]);

  for (int t = hz - 1; t >= 0; --t) {
    const Linearization lin = linearize(model, xs[t], us[t].head(model.nr()), us[t].tail(model.nh()));
    Mat b(n, m);
    b << lin.br, lin.bh;
    out.a[t] = lin.a;
    out.b[t] = b;
    for (int p = 0; p < np; ++p) {
      costs[p].stage.quadraticize_state(xs[t], out.q_mat[p][t], out.q_vec[p][t]);
      costs[p].stage.quadraticize_control(us[t], out.r_mat[p][t], out.r_vec[p][t]);
    }
    Mat s = Mat::Zero(m, m);
    Mat yp(m, n);
    Vec ya(m);
    for (int p = 0; p < np; ++p) {
      const auto [off, sz] = out.input_slices[p];
      const Mat bp = b.middleCols(off, sz);
      const Mat& zn = out.z[p][t + 1];
      s.middleRows(off, sz) = bp.transpose() * zn * b;
      s.block(off, off, sz, sz) += out.r_mat[p][t].block(off, off, sz, sz);
      yp.middleRows(off, sz) = bp.transpose() * zn * lin.a;
      ya.segment(off, sz) = bp.transpose() * out.zeta[p][t + 1] + out.r_vec[p][t].segment(off, sz);
    }
    Eigen::FullPivLU<Mat> lu(s);
    if (!lu.isInvertible()) {
      std::ostringstream msg;
      msg << "solve_ilq_game: singular coupled Riccati system at stage " << t;
      throw NumericalError(msg.str());
    }
    const Mat gain = lu.solve(yp);
    const Vec ff = lu.solve(ya);
    out.strategy.gains[t] = gain;
    out.strategy.feedforward[t] = ff;
    const Mat f = lin.a - b * gain;
    const Vec beta = -b * ff;
    for (int p = 0; p < np; ++p) {
      const Mat& zn = out.z[p][t + 1];
      const Mat& rp = out.r_mat[p][t];
      Mat zp = out.q_mat[p][t] + gain.transpose() * rp * gain + f.transpose() * zn * f;
      out.z[p][t] = 0.5 * (zp + zp.transpose());
      out.zeta[p][t] = out.q_vec[p][t] + gain.transpose() * (rp * ff - out.r_vec[p][t]) +
                       f.transpose() * (out.zeta[p][t + 1] + zn * beta);
    }
  }
}

GameSolution solve_ilq_game(const DynamicsModel& model, const std::vector<PlayerCost>& costs,
                            const Vec& x0, const std::vector<Vec>& init_u,
                            const GameOptions& opts) {
  require(opts.horizon >= 1, "solve_ilq_game: horizon must be at least 1");
  require(x0.size() == model.nx(), "solve_ilq_game: initial state dimension mismatch");
  require(static_cast<int>(costs.size()) == model.num_humans() + 1,
          "solve_ilq_game: one cost per player is required");
  const int hz = opts.horizon;
  const int m = model.nr() + model.nh();
  const bool descent = opts.descent_check || costs.size() == 1;

  std::vector<Vec> us(hz, Vec::Zero(m));
  for (int t = 0; t < hz && t < static_cast<int>(init_u.size()); ++t) {
    require(init_u[t].size() == m, "solve_ilq_game: initial control dimension mismatch");
    us[t] = init_u[t];
  }
  std::vector<Vec> xs(hz + 1);
  xs[0] = x0;
  for (int t = 0; t < hz; ++t) xs[t + 1] = step_stacked(model, xs[t], us[t]);
  if (!finite_traj(xs)) throw NumericalError("solve_ilq_game: initial rollout is not finite");

  GameSolution sol;
  std::vector<double> cur_costs = player_costs(costs, xs, us);
  sol.cost_history.push_back(cur_costs);

  for (int it = 0; it < opts.max_iter; ++it) {
    game_backward_pass(model, costs, xs, us, sol);
    sol.iterations = it + 1;
    double eta = 1.0;
    bool accepted = false;
    std::vector<Vec> nxs(hz + 1), nus(hz);
    std::vector<double> new_costs;
    for (int ls = 0; ls <= opts.max_backtracks; ++ls, eta *= opts.backtrack) {
      nxs[0] = x0;
      for (int t = 0; t < hz; ++t) {
        nus[t] = us[t] - sol.strategy.gains[t] * (nxs[t] - xs[t]) - eta * sol.strategy.feedforward[t];
        nxs[t + 1] = step_stacked(model, nxs[t], nus[t]);
      }
      if (!finite_traj(nxs)) continue;
      if (max_abs_change(nxs, xs) > opts.max_deviation) continue;
      new_costs = player_costs(costs, nxs, nus);
      if (descent) {
        bool ok = true;
        for (size_t p = 0; p < costs.size(); ++p)
          if (new_costs[p] > cur_costs[p] + 1e-10 * (1.0 + std::abs(cur_costs[p]))) ok = false;
        if (!ok) continue;
      }
      accepted = true;
      break;
    }
    if (!accepted) {
      // No admissible step: the current iterate is a fixed point to
      // line-search precision.
      sol.last_change = 0.0;
      sol.converged = descent;
      break;
    }
    const double change = std::max(max_abs_change(nxs, xs), max_abs_change(nus, us));
    xs = nxs;
    us = nus;
    cur_costs = new_costs;
    sol.cost_history.push_back(cur_costs);
    sol.last_change = change;
    if (change < opts.tol) {
      sol.converged = true;
      break;
    }
  }
  game_backward_pass(model, costs, xs, us, sol);
  sol.player_costs = cur_costs;
  return sol;
}

// ---------------------------------------------------------------------------

double QModel::value(const Vec& x, const Vec& ur, const Vec& uh) const {
  const Vec dx = x - x0, dr = ur - ur0, dh = uh - uh0;
  double v = c + gx.dot(dx) + gr.dot(dr) + gh.dot(dh);
  v += 0.5 * dx.dot(hxx * dx) + 0.5 * dr.dot(hrr * dr) + 0.5 * dh.dot(hhh * dh);
  v += dx.dot(hxr * dr) + dx.dot(hxh * dh) + dr.dot(hrh * dh);
  return v;
}

Vec QModel::grad_uh(const Vec& x, const Vec& ur, const Vec& uh) const {
  return gh + hxh.transpose() * (x - x0) + hrh.transpose() * (ur - ur0) + hhh * (uh - uh0);
}

Vec QModel::grad_ur(const Vec& x, const Vec& ur, const Vec& uh) const {
  return gr + hxr.transpose() * (x - x0) + hrr * (ur - ur0) + hrh * (uh - uh0);
}

Mat QModel::hessian() const {
  const int n = nx(), r = nr(), h = nh();
  Mat hm(n + r + h, n + r + h);
  hm << hxx, hxr, hxh, hxr.transpose(), hrr, hrh, hxh.transpose(), hrh.transpose(), hhh;
  return hm;
}

void QModel::require_concave() const {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (hhh + hhh.transpose()), Eigen::EigenvaluesOnly);
  if (hhh.size() == 0 || es.eigenvalues().maxCoeff() >= 0.0) {
    std::ostringstream msg;
    msg << "QModel: human-input Hessian is not negative definite (max eigenvalue "
        << (hhh.size() ? es.eigenvalues().maxCoeff() : 0.0) << ")";
    throw NumericalError(msg.str());
  }
}

void QModel::argmax_affine(Vec& k, Mat& kx, Mat& kr) const {
  require_concave();
  Eigen::LLT<Mat> llt(-0.5 * (hhh + hhh.transpose()));
  // 0 = gh + hxhᵀ dx + hrhᵀ dr + hhh dh  ⇒  dh = (−hhh)⁻¹ (gh + hxhᵀ dx + hrhᵀ dr)
  k = uh0 + llt.solve(gh);
  kx = llt.solve(Mat(hxh.transpose()));
  kr = llt.solve(Mat(hrh.transpose()));
}

Vec QModel::argmax(const Vec& x, const Vec& ur) const {
  Vec k;
  Mat kx, kr;
  argmax_affine(k, kx, kr);
  return k + kx * (x - x0) + kr * (ur - ur0);
}

QModel QModel::embed(const std::vector<int>& index_map, const Vec& full_x0) const {
  require(static_cast<int>(index_map.size()) == nx(), "QModel::embed: index map size mismatch");
  const int n = static_cast<int>(full_x0.size());
  QModel q = *this;
  q.x0 = full_x0;
  q.hxx = Mat::Zero(n, n);
  q.hxr = Mat::Zero(n, nr());
  q.hxh = Mat::Zero(n, nh());
  q.gx = Vec::Zero(n);
  for (int i = 0; i < nx(); ++i) {
    const int fi = index_map[i];
    require(fi >= 0 && fi < n, "QModel::embed: index out of range");
    q.gx[fi] = gx[i];
    q.hxr.row(fi) = hxr.row(i);
    q.hxh.row(fi) = hxh.row(i);
    for (int j = 0; j < nx(); ++j) q.hxx(fi, index_map[j]) = hxx(i, j);
  }
  // Mapped entries keep this model's base point so the embedding is exact.
  for (int i = 0; i < nx(); ++i) q.x0[index_map[i]] = x0[i];
  return q;
}

QModel QModel::substitute_robot(const Mat& kx, const Vec& k) const {
  require(kx.rows() == nr() && kx.cols() == nx() && k.size() == nr(),
          "QModel::substitute_robot: dimension mismatch");
  QModel q = *this;
  const Mat hrx = hxr.transpose();
  q.hxx = hxx + hxr * kx + kx.transpose() * hrx + kx.transpose() * hrr * kx;
  q.hxx = (0.5 * (q.hxx + q.hxx.transpose())).eval();
  q.hxh = hxh + kx.transpose() * hrh;
  q.gx = gx + kx.transpose() * gr + (hxr + kx.transpose() * hrr) * k;
  q.gh = gh + hrh.transpose() * k;
  q.c = c + gr.dot(k) + 0.5 * k.dot(hrr * k);
  q.hxr.setZero();
  q.hrr.setZero();
  q.hrh.setZero();
  q.gr.setZero();
  return q;
}

QModel QModel::with_robot_input(const Vec& ur0_new) const {
  require(nr() == 0, "QModel::with_robot_input: model already has a robot input");
  QModel q = *this;
  const int r = static_cast<int>(ur0_new.size());
  q.ur0 = ur0_new;
  q.hxr = Mat::Zero(nx(), r);
  q.hrr = Mat::Zero(r, r);
  q.hrh = Mat::Zero(r, nh());
  q.gr = Vec::Zero(r);
  return q;
}

QModel q_model_from_game(const GameSolution& sol, int stage, int player, int robot_player) {
  const int np = sol.num_players();
  require(player >= 0 && player < np, "q_model_from_game: bad player index");
  require(robot_player >= -1 && robot_player < np && robot_player != player,
          "q_model_from_game: bad robot player index");
  require(stage >= 0 && stage < sol.strategy.horizon(), "q_model_from_game: stage out of range");
  const Mat& a = sol.a[stage];
  const Mat& b = sol.b[stage];
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(b.cols());
  const auto [po, ps] = sol.input_slices[player];
  const int ro = robot_player >= 0 ? sol.input_slices[robot_player].first : 0;
  const int rs = robot_player >= 0 ? sol.input_slices[robot_player].second : 0;

  // Quadratic cost in v = (δx, δu).
  Mat ab(n, n + m);
  ab << a, b;
  Mat hf = Mat::Zero(n + m, n + m);
  hf.topLeftCorner(n, n) = sol.q_mat[player][stage];
  hf.bottomRightCorner(m, m) = sol.r_mat[player][stage];
  hf += ab.transpose() * sol.z[player][stage + 1] * ab;
  Vec gf(n + m);
  gf << sol.q_vec[player][stage], sol.r_vec[player][stage];
  gf += ab.transpose() * sol.zeta[player][stage + 1];

  // v = T w + off with w = (δx, δuR, δuH).
  const int nw = n + rs + ps;
  Mat tmap = Mat::Zero(n + m, nw);
  Vec off = Vec::Zero(n + m);
  tmap.topLeftCorner(n, n).setIdentity();
  const Mat& gains = sol.strategy.gains[stage];
  const Vec& ff = sol.strategy.feedforward[stage];
  for (int j = 0; j < np; ++j) {
    const auto [jo, js] = sol.input_slices[j];
    if (j == player) {
      tmap.block(n + jo, n + rs, js, js).setIdentity();
    } else if (j == robot_player) {
      tmap.block(n + jo, n, js, js).setIdentity();
    } else {
      tmap.block(n + jo, 0, js, n) = -gains.middleRows(jo, js);
      off.segment(n + jo, js) = -ff.segment(jo, js);
    }
  }
  const Mat hw = tmap.transpose() * hf * tmap;
  const Vec gw = tmap.transpose() * (hf * off + gf);
  const double cw = 0.5 * off.dot(hf * off) + gf.dot(off);

  QModel q;
  q.x0 = sol.strategy.xs[stage];
  q.ur0 = robot_player >= 0 ? Vec(sol.strategy.us[stage].segment(ro, rs)) : Vec();
  q.uh0 = sol.strategy.us[stage].segment(po, ps);
  const Mat u = -0.5 * (hw + hw.transpose());
  q.hxx = u.block(0, 0, n, n);
  q.hxr = u.block(0, n, n, rs);
  q.hxh = u.block(0, n + rs, n, ps);
  q.hrr = u.block(n, n, rs, rs);
  q.hrh = u.block(n, n + rs, rs, ps);
  q.hhh = u.block(n + rs, n + rs, ps, ps);
  q.gx = -gw.segment(0, n);
  q.gr = -gw.segment(n, rs);
  q.gh = -gw.segment(n + rs, ps);
  q.c = -cw;
  q.require_concave();
  return q;
}

QModel nash_q(const QModel& q, const GameSolution& sol, int stage, int robot_player) {
  const auto [ro, rs] = sol.input_slices[robot_player];
  require(rs == q.nr(), "nash_q: robot input dimension mismatch");
  const Mat kx = -sol.strategy.gains[stage].middleRows(ro, rs);
  const Vec k = -sol.strategy.feedforward[stage].segment(ro, rs);
  return q.substitute_robot(kx, k);
}

RobotValue robot_value(const QModel& q) {
  q.require_concave();
  const Mat nh = -q.hhh;
  Eigen::LLT<Mat> llt(0.5 * (nh + nh.transpose()));
  // w = (δx, δuR); max over δuH of c + gᵀw + gh dh + ½wᵀHw + wᵀHzh dh + ½dhᵀhhh dh
  Mat hzh(q.nx() + q.nr(), q.nh());
  hzh.topRows(q.nx()) = q.hxh;
  hzh.bottomRows(q.nr()) = q.hrh;
  const Mat corr = hzh * llt.solve(Mat(hzh.transpose()));
  const Vec gcorr = hzh * llt.solve(q.gh);
  RobotValue v;
  v.vxx = q.hxx + corr.topLeftCorner(q.nx(), q.nx());
  v.vxr = q.hxr + corr.topRightCorner(q.nx(), q.nr());
  v.vrr = q.hrr + corr.bottomRightCorner(q.nr(), q.nr());
  v.vx = q.gx + gcorr.head(q.nx());
  v.vr = q.gr + gcorr.tail(q.nr());
  v.c = q.c + 0.5 * q.gh.dot(llt.solve(q.gh));
  return v;
}

double RobotValue::value(const Vec& dx, const Vec& dr) const {
  return c + vx.dot(dx) + vr.dot(dr) + 0.5 * dx.dot(vxx * dx) + dx.dot(vxr * dr) +
         0.5 * dr.dot(vrr * dr);
}

namespace {

// Exact optimum of the quadratic V(δx, ·) over the robot box by enumerating
// every lower/upper/free pattern (3^nr candidates), returned as an affine
// rule in δx with the optimal pattern frozen.
QModel extremal_robot_q(const QModel& q, const ControlBounds& bounds, const Vec& x, bool maximize) {
  const int r = q.nr();
  require(r > 0, "robot-case model requires a robot input");
  require(bounds.size() == r, "robot bounds dimension mismatch");
  const RobotValue v = robot_value(q);
  const Vec dx = x - q.x0;
  const Vec lo = bounds.lo - q.ur0, hi = bounds.hi - q.ur0;
  int patterns = 1;
  for (int i = 0; i < r; ++i) patterns *= 3;
  double best = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
  Mat best_kx = Mat::Zero(r, q.nx());
  Vec best_k = Vec::Zero(r);
  bool found = false;
  for (int code = 0; code < patterns; ++code) {
    std::vector<int> state(r), free_idx, fixed_idx;
    int c = code;
    for (int i = 0; i < r; ++i) {
      state[i] = c % 3;
      c /= 3;
      if (state[i] == 2)
        free_idx.push_back(i);
      else
        fixed_idx.push_back(i);
    }
    Vec k = Vec::Zero(r);
    Mat kx = Mat::Zero(r, q.nx());
    for (int i : fixed_idx) k[i] = state[i] == 0 ? lo[i] : hi[i];
    if (!free_idx.empty()) {
      const int nf = static_cast<int>(free_idx.size());
      Mat vff(nf, nf), vfx(nf, q.nx());
      Vec rhs(nf);
      for (int a = 0; a < nf; ++a) {
        const int ia = free_idx[a];
        vfx.row(a) = v.vxr.col(ia).transpose();
        double s = v.vr[ia];
        for (int j : fixed_idx) s += v.vrr(ia, j) * k[j];
        rhs[a] = s;
        for (int b = 0; b < nf; ++b) vff(a, b) = v.vrr(ia, free_idx[b]);
      }
      Eigen::FullPivLU<Mat> lu(vff);
      if (!lu.isInvertible()) continue;
      const Vec kf = -lu.solve(rhs);
      const Mat kxf = -lu.solve(vfx);
      for (int a = 0; a < nf; ++a) {
        k[free_idx[a]] = kf[a];
        kx.row(free_idx[a]) = kxf.row(a);
      }
    }
    const Vec dr = k + kx * dx;
    bool feasible = true;
    for (int i = 0; i < r; ++i)
      if (dr[i] < lo[i] - 1e-12 || dr[i] > hi[i] + 1e-12) feasible = false;
    if (!feasible) continue;
    const double val = v.value(dx, dr);
    if ((maximize && val > best) || (!maximize && val < best)) {
      best = val;
      best_k = k;
      best_kx = kx;
      found = true;
    }
  }
  if (!found) throw NumericalError("robot-case model: no feasible candidate found");
  return q.substitute_robot(best_kx, best_k);
}

}  // namespace

QModel worst_case_q(const QModel& q, const ControlBounds& robot_bounds, const Vec& x) {
  return extremal_robot_q(q, robot_bounds, x, false);
}

QModel best_case_q(const QModel& q, const ControlBounds& robot_bounds, const Vec& x) {
  return extremal_robot_q(q, robot_bounds, x, true);
}

QModel oblivious_q(const QModel& single_player, const std::vector<int>& index_map,
                   const Vec& full_x0, const Vec& ur0) {
  QModel q = single_player.nr() == 0 ? single_player : single_player.substitute_robot(
                                                          Mat::Zero(single_player.nr(), single_player.nx()),
                                                          Vec::Zero(single_player.nr()));
  if (q.nr() != 0) {
    QModel stripped = q;
    stripped.ur0 = Vec();
    stripped.hxr = Mat::Zero(q.nx(), 0);
    stripped.hrr = Mat::Zero(0, 0);
    stripped.hrh = Mat::Zero(0, q.nh());
    stripped.gr = Vec();
    q = stripped;
  }
  return q.embed(index_map, full_x0).with_robot_input(ur0);
}

}  // namespace dualmpc
