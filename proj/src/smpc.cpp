#include "dualmpc/smpc.hpp"

#include <chrono>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace dualmpc {

Vec FailureSet::values(const Vec& x) const {
  Vec out(size());
  values<double>(x, out.data());
  return out;
}

double FailureSet::max_violation(const Vec& x) const {
  if (size() == 0) return -std::numeric_limits<double>::infinity();
  return values(x).maxCoeff();
}

int PlanningProblem::elastic_rows() const {
  const int act = opts.human_action == HumanActionMode::Penalty ? 2 * (tree.size() - 1) * model->nh()
                                                                 : 0;
  return soft_rows() + act;
}

std::vector<std::vector<int>> all_joint_modes(const std::vector<BeliefState>& beliefs) {
  std::vector<std::vector<int>> out{{}};
  for (const auto& b : beliefs) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : out)
      for (int m = 0; m < b.num_modes(); ++m) {
        auto v = prefix;
        v.push_back(m);
        next.push_back(v);
      }
    out = std::move(next);
  }
  return out;
}

PlanningProblem assemble(const DynamicsModel& model, const RobotCostModel& cost,
                         const FailureSet& failure, std::vector<HumanPrediction> preds,
                         std::vector<BeliefState> beliefs, const Vec& x0, const SmpcOptions& opts,
                         std::vector<std::vector<int>> joint_modes) {
  const int nh = model.num_humans();
  require(static_cast<int>(preds.size()) == nh && static_cast<int>(beliefs.size()) == nh,
          "assemble: need one prediction and one belief per human");
  require(x0.size() == model.nx(), "assemble: initial state has the wrong dimension");
  require(opts.penalty_c > 0.0, "assemble: penalty weight C must be positive");
  require(opts.soft_linear >= 0.0 && opts.soft_quadratic >= 0.0,
          "assemble: soft-constraint weights must be nonnegative");
  PlanningProblem p;
  p.model = &model;
  p.cost = cost;
  p.failure = failure;
  p.x0 = x0;
  p.opts = opts;
  int n_theta = 0;
  for (int h = 0; h < nh; ++h) {
    beliefs[h].validate();
    require(preds[h].human == h, "assemble: predictions must be ordered by human index");
    require(preds[h].num_modes() == beliefs[h].num_modes(),
            "assemble: belief and prediction of human " + std::to_string(h) +
                " disagree on the number of modes");
    require(preds[h].n_theta() == beliefs[h].n_theta(),
            "assemble: belief and prediction of human " + std::to_string(h) +
                " disagree on the number of bases");
    p.theta_offset.push_back(n_theta);
    n_theta += beliefs[h].n_theta();
  }
  if (joint_modes.empty()) joint_modes = all_joint_modes(beliefs);
  for (const auto& jm : joint_modes) {
    require(static_cast<int>(jm.size()) == nh, "assemble: joint mode has the wrong length");
    for (int h = 0; h < nh; ++h)
      require(jm[h] >= 0 && jm[h] < beliefs[h].num_modes(), "assemble: joint mode out of range");
  }
  p.preds = std::move(preds);
  p.beliefs = std::move(beliefs);
  p.joint_modes = std::move(joint_modes);

  TreeConfig cfg;
  cfg.horizon = opts.horizon;
  cfg.dual_horizon = opts.dual_horizon;
  cfg.branching = opts.branching;
  cfg.num_modes = static_cast<int>(p.joint_modes.size());
  cfg.n_theta = std::max(n_theta, 1);
  cfg.n_state = model.nx();
  cfg.max_leaves = opts.max_leaves;
  Rng rng(opts.seed, 0x74726565);
  p.tree = build_tree(cfg, rng);
  if (opts.prune_threshold > 0.0) {
    path_probabilities(p.tree, [&](const Node& n) {
      double v = 1.0;
      for (int h = 0; h < nh; ++h) v *= p.beliefs[h].p[p.joint_modes[n.mode][h]];
      return v;
    });
    prune(p.tree, opts.prune_threshold);
  }

  p.theta_bar.assign(p.tree.size(), {});
  for (auto& per_node : p.theta_bar)
    for (int h = 0; h < nh; ++h) per_node.push_back(estimate_theta_bar(p.beliefs[h]));

  const int nr = model.nr();
  const ControlBounds hb = model.human_bounds();
  std::vector<double> lo, hi;
  p.ur_offset.assign(p.tree.size(), -1);
  p.uh_offset.assign(p.tree.size(), -1);
  int k = 0;
  for (const auto& n : p.tree.nodes) {
    if (n.leaf()) continue;
    p.ur_offset[n.id] = k;
    k += nr;
    for (int i = 0; i < nr; ++i) {
      lo.push_back(model.robot_bounds().lo[i]);
      hi.push_back(model.robot_bounds().hi[i]);
    }
  }
  if (opts.human_action == HumanActionMode::Penalty) {
    for (const auto& n : p.tree.nodes) {
      if (n.parent < 0) continue;
      p.uh_offset[n.id] = k;
      k += model.nh();
      for (int i = 0; i < model.nh(); ++i) {
        lo.push_back(hb.lo[i]);
        hi.push_back(hb.hi[i]);
      }
    }
  }
  p.num_vars = k;
  p.lower = Eigen::Map<Vec>(lo.data(), k);
  p.upper = Eigen::Map<Vec>(hi.data(), k);
  return p;
}

namespace {

template <class T>
struct Eval {
  T f = T(0.0);
  std::vector<T> res;
  std::vector<double> res_w;
  std::vector<int> res_node;
  std::vector<T> soft;
  std::vector<double> soft_w;
  std::vector<T> act;  // ũH − uH
  std::vector<VecT<T>> x;
  std::vector<std::vector<BeliefT<T>>> b;
  std::vector<T> prob;
  std::vector<VecT<T>> uht;
  std::vector<VecT<T>> uh;
};

template <class T>
T sum_entropy(const std::vector<BeliefT<T>>& bs) {
  T h(0.0);
  for (const auto& b : bs) h += hybrid_entropy_t<T>(b);
  return h;
}

template <class T>
void add_residuals(Eval<T>& e, const T* r, int n, const T& weight, int node) {
  for (int i = 0; i < n; ++i) {
    e.res.push_back(r[i]);
    e.res_w.push_back(value_of(weight));
    e.res_node.push_back(node);
    e.f += weight * r[i] * r[i];
  }
}

/// Rolls the tree out from the root. With `project` the human inputs are
/// set to clip(ũH) regardless of the decision vector.
template <class T>
Eval<T> evaluate(const PlanningProblem& p, const VecT<T>& w, bool project = false) {
  const DynamicsModel& model = *p.model;
  const ScenarioTree& tree = p.tree;
  const int nn = tree.size();
  const int nh = model.nh();
  const int nr = model.nr();
  const int nhum = p.num_humans();
  const bool penalty = p.opts.human_action == HumanActionMode::Penalty;
  const bool dual_beliefs = p.opts.beliefs == BeliefDynamics::Dual;
  const ControlBounds hb = model.human_bounds();
  const TimeUpdateModel& tm = p.opts.belief.transition;
  const double jitter = p.opts.belief.obs_jitter;

  Eval<T> e;
  e.x.resize(nn);
  e.b.resize(nn);
  e.prob.assign(nn, T(0.0));
  e.uht.resize(nn);
  e.uh.resize(nn);
  e.x[0] = p.x0.template cast<T>();
  for (const auto& b : p.beliefs) e.b[0].push_back(BeliefT<T>::from(b));
  e.prob[0] = T(1.0);

  for (int n = 1; n < nn; ++n) {
    const Node& nd = tree.nodes[n];
    const int par = nd.parent;
    const int stage = tree.nodes[par].t;
    const auto& jm = p.joint_modes[nd.mode];
    const VecT<T>& xp = e.x[par];
    const VecT<T> ur = w.segment(p.ur_offset[par], nr);
    const bool sampled = nd.kind == StageKind::Dual;

    std::vector<MatT<T>> basis(nhum);
    VecT<T> uht = VecT<T>::Zero(nh);
    for (int h = 0; h < nhum; ++h) {
      const auto& bel = e.b[par][h];
      const int m = jm[h];
      const int nth = p.beliefs[h].n_theta();
      VecT<T> theta = bel.mean[m];
      if (sampled)
        theta += psd_cholesky<T>(bel.cov[m]) *
                 VecT<T>(nd.theta_o.segment(p.theta_offset[h], nth).template cast<T>());
      basis[h] = p.preds[h].basis_matrix<T>(stage, m, xp, ur);
      uht.segment(model.human_input_offset(h), model.human(h).nu) = basis[h] * theta;
    }
    VecT<T> uh;
    if (project || !penalty)
      uh = hb.project<T>(uht);
    else
      uh = w.segment(p.uh_offset[n], nh);

    VecT<T> dbar = VecT<T>::Zero(model.nx());
    MatT<T> bh;
    if (sampled) bh = model.human_input_matrix<T>(xp);
    if (sampled && p.opts.disturbance && nd.dbar_o.squaredNorm() > 0.0) {
      MatT<T> sig = model.noise_cov().template cast<T>();
      for (int h = 0; h < nhum; ++h) {
        const MatT<T> bcols = bh.middleCols(model.human_input_offset(h), model.human(h).nu);
        const Vec& tb = p.theta_bar[n][h][jm[h]];
        for (int i = 0; i < p.beliefs[h].n_theta(); ++i) {
          const double wt = tb[i] * tb[i];
          if (wt == 0.0) continue;
          sig += bcols * (p.preds[h].basis_cov(stage, jm[h], i) * wt).template cast<T>() *
                 bcols.transpose();
        }
      }
      dbar = psd_cholesky<T>(symmetrize<T>(sig)) * VecT<T>(nd.dbar_o.template cast<T>());
    }
    e.x[n] = model.step<T>(xp, ur, uh, dbar);

    for (int h = 0; h < nhum; ++h) {
      if (!(sampled && dual_beliefs)) {
        e.b[n].push_back(time_update_t<T>(e.b[par][h], tm));
        continue;
      }
      const int so = model.human_state_offset(h), sn = model.human(h).nx;
      const int io = model.human_input_offset(h), in = model.human(h).nu;
      const MatT<T> bhh = bh.block(so, io, sn, in);
      const VecT<T> y = bhh * VecT<T>(uht.segment(io, in)) + VecT<T>(dbar.segment(so, sn));
      const Mat sd = model.noise_cov().block(so, so, sn, sn);
      std::vector<ThetaObservation<T>> obs;
      for (int m = 0; m < p.beliefs[h].num_modes(); ++m) {
        const MatT<T> u = m == jm[h] ? basis[h] : p.preds[h].basis_matrix<T>(stage, m, xp, ur);
        ThetaObservation<T> o;
        o.y = y;
        o.h = bhh * u;
        MatT<T> r = sd.template cast<T>();
        const Vec& tb = p.theta_bar[n][h][m];
        for (int i = 0; i < p.beliefs[h].n_theta(); ++i) {
          const double wt = tb[i] * tb[i];
          if (wt == 0.0) continue;
          r += bhh * (p.preds[h].basis_cov(stage, m, i) * wt).template cast<T>() * bhh.transpose();
        }
        for (int i = 0; i < sn; ++i) r(i, i) += T(jitter);
        o.r = symmetrize<T>(r);
        obs.push_back(std::move(o));
      }
      e.b[n].push_back(propagate_t<T>(e.b[par][h], obs, tm));
    }

    T pbar(1.0);
    if (sampled) {
      T num(1.0), den(0.0);
      for (int h = 0; h < nhum; ++h) num *= e.b[par][h].p[jm[h]];
      for (const auto& j : p.joint_modes) {
        T v(1.0);
        for (int h = 0; h < nhum; ++h) v *= e.b[par][h].p[j[h]];
        den += v;
      }
      pbar = num / den / T(static_cast<double>(tree.cfg.branching));
    }
    e.prob[n] = pbar * e.prob[par];
    e.uht[n] = uht;
    e.uh[n] = uh;
  }

  // Objective, residual rows and constraint rows.
  const ResidualCost& sc = p.cost.stage;
  const ResidualCost& tc = p.cost.terminal;
  std::vector<T> buf(std::max({sc.state_residuals(), sc.control_residuals(),
                               tc.state_residuals(), p.failure.size(), 1}));
  for (int n = 0; n < nn; ++n) {
    const Node& nd = tree.nodes[n];
    const T& pn = e.prob[n];
    if (!nd.leaf()) {
      sc.state_residuals<T>(e.x[n], buf.data());
      add_residuals(e, buf.data(), sc.state_residuals(), pn, n);
      const VecT<T> ur = w.segment(p.ur_offset[n], nr);
      sc.control_residuals<T>(ur, buf.data());
      add_residuals(e, buf.data(), sc.control_residuals(), pn, n);
    } else {
      tc.state_residuals<T>(e.x[n], buf.data());
      add_residuals(e, buf.data(), tc.state_residuals(), pn, n);
      if (p.cost.belief_weight != 0.0) e.f += pn * T(p.cost.belief_weight) * sum_entropy(e.b[n]);
    }
    if (n == 0) continue;
    if (p.opts.info_weight != 0.0 && nd.kind == StageKind::Dual)
      e.f += pn * T(p.opts.info_weight) * (sum_entropy(e.b[n]) - sum_entropy(e.b[nd.parent]));
    p.failure.values<T>(e.x[n], buf.data());
    for (int j = 0; j < p.failure.size(); ++j) {
      e.soft.push_back(buf[j]);
      e.soft_w.push_back(value_of(pn));
    }
    if (penalty && !project)
      for (int i = 0; i < nh; ++i) e.act.push_back(e.uht[n][i] - e.uh[n][i]);
  }
  return e;
}

double soft_penalty(const PlanningProblem& p, double h, double weight) {
  const double s = std::max(0.0, h);
  return weight * (p.opts.soft_linear * s + p.opts.soft_quadratic * s * s);
}

struct Merit {
  double objective = 0.0;
  double soft = 0.0;
  double act = 0.0;
  double total() const { return objective + soft + act; }
};

Merit merit_of(const PlanningProblem& p, const Eval<double>& e) {
  Merit m;
  m.objective = e.f;
  for (size_t j = 0; j < e.soft.size(); ++j) m.soft += soft_penalty(p, e.soft[j], e.soft_w[j]);
  for (double a : e.act) m.act += p.opts.penalty_c * std::abs(a);
  return m;
}

double merit_value(const PlanningProblem& p, const Vec& w) {
  try {
    const double v = merit_of(p, evaluate<double>(p, w)).total();
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct Linearized {
  double f = 0.0;
  Vec grad;
  Vec res;
  Vec res_w;
  std::vector<int> res_node;
  Mat j_res;
  Vec soft;
  Vec soft_w;
  Mat j_soft;
  Vec act;
  Mat j_act;
};

void fill_row(const Ad& a, Mat& m, int r, int c0) {
  const auto& d = a.derivatives();
  for (Eigen::Index i = 0; i < d.size(); ++i) m(r, c0 + i) = d[i];
}

std::string soft_row_name(const PlanningProblem& p, int row) {
  const int per = p.failure.size();
  const int node = row / per + 1;
  const int j = row % per;
  std::ostringstream s;
  s << "node " << node << ", ";
  if (j < static_cast<int>(p.failure.ellipses.size()))
    s << "failure ellipse " << j;
  else
    s << "failure half-plane " << j - static_cast<int>(p.failure.ellipses.size());
  return s.str();
}

Linearized linearize(const PlanningProblem& p, const Vec& w) {
  const int nv = p.num_vars;
  Linearized out;
  bool first = true;
  for (int c0 = 0; c0 < nv; c0 += kMaxAdDirections) {
    const int len = std::min(kMaxAdDirections, nv - c0);
    VecT<Ad> wa(nv);
    for (int i = 0; i < nv; ++i) {
      if (i >= c0 && i < c0 + len)
        wa[i] = Ad(w[i], len, i - c0);
      else
        wa[i] = Ad(w[i], AdDerivatives::Zero(len));
    }
    const Eval<Ad> e = evaluate<Ad>(p, wa);
    if (first) {
      first = false;
      out.f = e.f.value();
      out.grad = Vec::Zero(nv);
      const int nres = static_cast<int>(e.res.size());
      const int nsoft = static_cast<int>(e.soft.size());
      const int nact = static_cast<int>(e.act.size());
      out.res.resize(nres);
      out.res_w = Eigen::Map<const Vec>(e.res_w.data(), nres);
      out.res_node = e.res_node;
      out.j_res = Mat::Zero(nres, nv);
      out.soft.resize(nsoft);
      out.soft_w = Eigen::Map<const Vec>(e.soft_w.data(), nsoft);
      out.j_soft = Mat::Zero(nsoft, nv);
      out.act.resize(nact);
      out.j_act = Mat::Zero(nact, nv);
      for (int i = 0; i < nres; ++i) out.res[i] = e.res[i].value();
      for (int i = 0; i < nsoft; ++i) out.soft[i] = e.soft[i].value();
      for (int i = 0; i < nact; ++i) out.act[i] = e.act[i].value();
    }
    const auto& gd = e.f.derivatives();
    for (Eigen::Index i = 0; i < gd.size(); ++i) out.grad[c0 + i] = gd[i];
    for (size_t i = 0; i < e.res.size(); ++i) fill_row(e.res[i], out.j_res, i, c0);
    for (size_t i = 0; i < e.soft.size(); ++i) fill_row(e.soft[i], out.j_soft, i, c0);
    for (size_t i = 0; i < e.act.size(); ++i) fill_row(e.act[i], out.j_act, i, c0);
  }
  if (!std::isfinite(out.f) || !out.grad.allFinite()) {
    for (int i = 0; i < out.j_res.rows(); ++i)
      if (!std::isfinite(out.res[i]) || !out.j_res.row(i).allFinite()) {
        std::ostringstream s;
        s << "non-finite derivative at node " << out.res_node[i] << " in a cost residual";
        throw NumericalError(s.str());
      }
    throw NumericalError("non-finite objective gradient (belief recursion)");
  }
  for (int i = 0; i < out.j_soft.rows(); ++i)
    if (!std::isfinite(out.soft[i]) || !out.j_soft.row(i).allFinite())
      throw NumericalError("non-finite derivative at " + soft_row_name(p, i));
  const int nh = p.model->nh();
  for (int i = 0; i < out.j_act.rows(); ++i)
    if (!std::isfinite(out.act[i]) || !out.j_act.row(i).allFinite())
      throw NumericalError("non-finite derivative at node " + std::to_string(i / nh + 1) +
                           ", human action coupling " + std::to_string(i % nh));
  return out;
}

Vec clamp_to(const Vec& w, const Vec& lo, const Vec& hi) { return w.cwiseMax(lo).cwiseMin(hi); }

double max_violation(const Eval<double>& e) {
  double v = 0.0;
  for (size_t j = 0; j < e.soft.size(); ++j)
    if (e.soft_w[j] > 0.0) v = std::max(v, e.soft[j]);
  for (double a : e.act) v = std::max(v, std::abs(a));
  return v;
}

}  // namespace

Rollout rollout(const PlanningProblem& p, const Vec& w) {
  require(w.size() == p.num_vars, "rollout: decision vector has the wrong dimension");
  const Eval<double> e = evaluate<double>(p, w);
  Rollout r;
  r.x = e.x;
  for (const auto& bs : e.b) {
    std::vector<BeliefState> v;
    for (const auto& b : bs) v.push_back(b.values());
    r.beliefs.push_back(std::move(v));
  }
  r.p = e.prob;
  r.uh_tilde = e.uht;
  r.uh = e.uh;
  r.uh_tilde[0] = Vec::Zero(p.model->nh());
  r.uh[0] = Vec::Zero(p.model->nh());
  const Merit m = merit_of(p, e);
  r.objective = m.objective;
  r.soft_penalty = m.soft;
  r.action_penalty = m.act;
  r.slack = Vec(e.soft.size());
  for (size_t j = 0; j < e.soft.size(); ++j) r.slack[j] = std::max(0.0, e.soft[j]);
  return r;
}

double objective(const PlanningProblem& p, const Vec& w) {
  require(w.size() == p.num_vars, "objective: decision vector has the wrong dimension");
  return evaluate<double>(p, w).f;
}

Vec objective_gradient(const PlanningProblem& p, const Vec& w) {
  require(w.size() == p.num_vars, "objective_gradient: decision vector has the wrong dimension");
  return linearize(p, w).grad;
}

Vec project_human_inputs(const PlanningProblem& p, const Vec& w) {
  if (p.opts.human_action == HumanActionMode::Projection) return w;
  const Eval<double> e = evaluate<double>(p, w, true);
  Vec out = w;
  for (int n = 1; n < p.tree.size(); ++n) out.segment(p.uh_offset[n], p.model->nh()) = e.uh[n];
  return out;
}

Vec initial_guess(const PlanningProblem& p, const std::vector<Vec>& ur_by_time) {
  Vec w = Vec::Zero(p.num_vars);
  const int nr = p.model->nr();
  for (const auto& n : p.tree.nodes) {
    if (n.leaf()) continue;
    Vec u = ur_by_time.empty() ? Vec::Zero(nr)
                               : ur_by_time[std::min<size_t>(n.t, ur_by_time.size() - 1)];
    require(u.size() == nr, "initial_guess: robot input has the wrong dimension");
    w.segment(p.ur_offset[n.id], nr) = p.model->robot_bounds().project(u);
  }
  return project_human_inputs(p, w);
}

std::vector<Vec> robot_inputs_by_time(const PlanningProblem& p, const Vec& w) {
  const Eval<double> e = evaluate<double>(p, w);
  std::vector<Vec> out;
  int n = 0;
  while (!p.tree.nodes[n].leaf()) {
    out.push_back(w.segment(p.ur_offset[n], p.model->nr()));
    int best = p.tree.nodes[n].children.front();
    for (int c : p.tree.nodes[n].children)
      if (e.prob[c] > e.prob[best]) best = c;
    n = best;
  }
  return out;
}

Vec root_input(const PlanningProblem& p, const Vec& w) {
  return w.segment(p.ur_offset[0], p.model->nr());
}

SolveResult solve(const PlanningProblem& p, const Vec& w0) {
  require(w0.size() == p.num_vars, "solve: initial guess has the wrong dimension");
  const auto start = std::chrono::steady_clock::now();
  const SolverOptions& so = p.opts.solver;
  const bool penalty = p.opts.human_action == HumanActionMode::Penalty;
  SolveResult out;
  Vec w = project_human_inputs(p, clamp_to(w0, p.lower, p.upper));
  double phi = merit_value(p, w);
  if (!std::isfinite(phi)) {
    linearize(p, w);  // names the offending node when derivatives break down
    throw NumericalError("solve: merit is not finite at the initial guess");
  }
  out.report.merit_history.push_back(phi);
  double damping = so.damping;
  const int nv = p.num_vars;

  for (int it = 0; it < so.max_iter; ++it) {
    out.report.iterations = it + 1;
    const Linearized lin = linearize(p, w);
    Mat r = lin.j_res;
    for (int i = 0; i < r.rows(); ++i) r.row(i) *= std::sqrt(2.0 * lin.res_w[i]);
    QpProblem qp;
    qp.h = r.transpose() * r;
    qp.h.diagonal().array() += damping;
    qp.g = lin.grad;
    qp.lb = p.lower - w;
    qp.ub = p.upper - w;
    std::vector<int> soft_rows;
    for (int j = 0; j < lin.soft.size(); ++j)
      if (lin.soft_w[j] > 0.0) soft_rows.push_back(j);
    const int ns = static_cast<int>(soft_rows.size());
    const int na = static_cast<int>(lin.act.size());
    qp.a = Mat(ns + 2 * na, nv);
    qp.c = Vec(ns + 2 * na);
    qp.w1 = Vec(ns + 2 * na);
    qp.w2 = Vec(ns + 2 * na);
    for (int k = 0; k < ns; ++k) {
      const int j = soft_rows[k];
      qp.a.row(k) = lin.j_soft.row(j);
      qp.c[k] = lin.soft[j];
      qp.w1[k] = lin.soft_w[j] * p.opts.soft_linear;
      qp.w2[k] = 2.0 * lin.soft_w[j] * p.opts.soft_quadratic;
    }
    for (int i = 0; i < na; ++i) {
      for (int sgn = 0; sgn < 2; ++sgn) {
        const int k = ns + 2 * i + sgn;
        const double s = sgn == 0 ? 1.0 : -1.0;
        qp.a.row(k) = s * lin.j_act.row(i);
        qp.c[k] = s * lin.act[i];
        qp.w1[k] = p.opts.penalty_c;
        qp.w2[k] = 0.0;
      }
    }
    qp.hard = Mat(0, nv);
    qp.hard_rhs = Vec(0);
    const QpSolution sol = solve_qp(qp, so.qp);
    const Vec& d = sol.x;
    const double pred = phi - (lin.f + qp_objective(qp, d));
    if (d.lpNorm<Eigen::Infinity>() < so.tol || pred <= 0.0) {
      // Take the final short step when it does not increase the merit.
      Vec wt = clamp_to(w + d, p.lower, p.upper);
      if (penalty) wt = project_human_inputs(p, wt);
      const double phit = merit_value(p, wt);
      if (phit <= phi) {
        w = wt;
        phi = phit;
        out.report.merit_history.push_back(phi);
      }
      out.report.converged = true;
      out.report.message = "converged";
      break;
    }
    bool accepted = false;
    double alpha = 1.0;
    for (int k = 0; k < so.max_backtracks; ++k, alpha *= 0.5) {
      const Vec wt = clamp_to(w + alpha * d, p.lower, p.upper);
      double phit = merit_value(p, wt);
      Vec best = wt;
      if (penalty) {
        const Vec wc = project_human_inputs(p, wt);
        const double phic = merit_value(p, wc);
        if (phic < phit) {
          phit = phic;
          best = wc;
        }
      }
      if (phit <= phi - so.armijo * alpha * pred) {
        const double step = (best - w).lpNorm<Eigen::Infinity>();
        w = best;
        phi = phit;
        accepted = true;
        out.report.merit_history.push_back(phi);
        if (step < so.tol) {
          out.report.converged = true;
          out.report.message = "converged (small step)";
        }
        break;
      }
    }
    if (out.report.converged) break;
    if (accepted) {
      damping = std::max(so.damping, damping / 10.0);
    } else {
      damping *= 10.0;
      if (damping > 1e8) {
        out.report.message = "line search failed";
        break;
      }
    }
  }
  if (out.report.message.empty()) out.report.message = "iteration limit";
  const Eval<double> e = evaluate<double>(p, w);
  out.report.merit = phi;
  out.report.max_violation = max_violation(e);
  out.report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.w = w;
  return out;
}

void set_theta_bar_from_rollout(PlanningProblem& p, const Rollout& r) {
  for (int n = 1; n < p.tree.size(); ++n) {
    const int par = p.tree.nodes[n].parent;
    for (int h = 0; h < p.num_humans(); ++h)
      p.theta_bar[n][h] = estimate_theta_bar(r.beliefs[par][h]);
  }
}

PlanningProblem certainty_equivalent(const PlanningProblem& p) {
  std::vector<BeliefState> dirac;
  std::vector<int> map_mode;
  for (const auto& b : p.beliefs) {
    int m = 0;
    for (int k = 1; k < b.num_modes(); ++k)
      if (b.p[k] > b.p[m]) m = k;
    map_mode.push_back(m);
    BeliefState d = b;
    for (auto& c : d.cov) c.setZero();
    d.p.setZero();
    d.p[m] = 1.0;
    dirac.push_back(d);
  }
  SmpcOptions o = p.opts;
  o.branching = 1;
  o.disturbance = false;
  o.beliefs = BeliefDynamics::NonDual;
  o.info_weight = 0.0;
  o.prune_threshold = 0.0;
  RobotCostModel cost = p.cost;
  cost.belief_weight = 0.0;
  return assemble(*p.model, cost, p.failure, p.preds, dirac, p.x0, o, {map_mode});
}

WarmStartResult warm_start(PlanningProblem& p, bool ce_step) {
  WarmStartResult out;
  std::vector<Vec> guess;
  if (ce_step) {
    try {
      const PlanningProblem ce = certainty_equivalent(p);
      const SolveResult r = solve(ce, initial_guess(ce, {}));
      out.ce_inputs = robot_inputs_by_time(ce, r.w);
      guess = out.ce_inputs;
    } catch (const NumericalError&) {
      guess.clear();
    }
  }
  PlanningProblem nd = p;
  nd.opts.beliefs = BeliefDynamics::NonDual;
  Vec w = initial_guess(nd, guess);
  try {
    const SolveResult r = solve(nd, w);
    out.nondual_report = r.report;
    w = r.w;
  } catch (const NumericalError& err) {
    out.nondual_report.message = err.what();
  }
  out.rollout = rollout(p, w);
  set_theta_bar_from_rollout(p, out.rollout);
  out.w = project_human_inputs(p, w);
  return out;
}

BeliefSensitivity belief_gradient_check(const PlanningProblem& p, const Vec& w,
                                        const Vec& direction, int node, double h) {
  require(direction.size() == p.model->nr(), "belief_gradient_check: direction must match uR");
  if (node < 0) {
    require(!p.tree.dual_nodes.empty(), "belief_gradient_check: tree has no dual node");
    node = p.tree.dual_nodes.front();
  }
  auto measure = [&](double eps) {
    Vec wp = w;
    wp.segment(p.ur_offset[0], p.model->nr()) += eps * direction;
    const Eval<double> e = evaluate<double>(p, wp);
    double tr = 0.0, ent = 0.0;
    for (const auto& b : e.b[node]) {
      for (const auto& c : b.cov) tr += c.trace();
      ent += categorical_entropy(b.p);
    }
    return std::pair{tr, ent};
  };
  const auto [tp, ep] = measure(h);
  const auto [tm, em] = measure(-h);
  return {(tp - tm) / (2.0 * h), (ep - em) / (2.0 * h)};
}

std::string dump_problem(const PlanningProblem& p, const Vec& w) {
  const Eval<double> e = evaluate<double>(p, w);
  nlohmann::json j;
  j["num_vars"] = p.num_vars;
  j["soft_rows"] = p.soft_rows();
  j["elastic_rows"] = p.elastic_rows();
  j["w"] = std::vector<double>(w.data(), w.data() + w.size());
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : p.tree.nodes) {
    nlohmann::json o;
    o["id"] = n.id;
    o["parent"] = n.parent;
    o["t"] = n.t;
    o["kind"] = to_string(n.kind);
    o["ur_offset"] = p.ur_offset[n.id];
    o["uh_offset"] = p.uh_offset[n.id];
    o["p"] = e.prob[n.id];
    o["x"] = std::vector<double>(e.x[n.id].data(), e.x[n.id].data() + e.x[n.id].size());
    if (n.parent >= 0) {
      const Vec h = p.failure.values(e.x[n.id]);
      o["failure_h"] = std::vector<double>(h.data(), h.data() + h.size());
      const Vec gap = e.uht[n.id] - e.uh[n.id];
      o["action_gap"] = std::vector<double>(gap.data(), gap.data() + gap.size());
    }
    nodes.push_back(o);
  }
  j["nodes"] = nodes;
  return j.dump(1);
}

}  // namespace dualmpc
