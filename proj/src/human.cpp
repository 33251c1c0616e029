#include "dualmpc/human.hpp"

#include <cmath>
#include <numbers>

#include "dualmpc/linalg.hpp"

namespace dualmpc {

const char* to_string(RobotResponse r) {
  switch (r) {
    case RobotResponse::Responsive: return "responsive";
    case RobotResponse::Nash: return "nash";
    case RobotResponse::Protected: return "protected";
    case RobotResponse::Wishful: return "wishful";
    case RobotResponse::Oblivious: return "oblivious";
  }
  return "responsive";
}

RobotResponse robot_response_from_string(const std::string& s) {
  if (s == "responsive") return RobotResponse::Responsive;
  if (s == "nash") return RobotResponse::Nash;
  if (s == "protected") return RobotResponse::Protected;
  if (s == "wishful") return RobotResponse::Wishful;
  if (s == "oblivious") return RobotResponse::Oblivious;
  throw ContractViolation("unknown robot response '" + s + "'");
}

void HumanBehaviorModel::validate() const {
  require(!modes.empty(), "human model: at least one mode is required");
  require(!bases.empty(), "human model: at least one basis policy is required");
  require(beta > 0.0, "human model: rationality coefficient must be positive");
  require(static_cast<int>(games.size()) == num_modes(), "human model: one game row per mode");
  for (const auto& row : games)
    require(static_cast<int>(row.size()) == n_theta(), "human model: one game per basis");
}

LaplaceMap laplace_map(const QModel& q, double beta) {
  require(beta > 0.0, "laplace_map: beta must be positive");
  LaplaceMap m;
  q.argmax_affine(m.k, m.kx, m.kr);
  m.x0 = q.x0;
  m.ur0 = q.ur0;
  const Mat nh = -0.5 * (q.hhh + q.hhh.transpose());
  m.cov = nh.inverse() / beta;
  m.cov = (0.5 * (m.cov + m.cov.transpose())).eval();
  return m;
}

HumanPredictor::HumanPredictor(const DynamicsModel& joint, HumanBehaviorModel model)
    : joint_(joint), model_(std::move(model)) {
  model_.validate();
  require(model_.human >= 0 && model_.human < joint.num_humans(), "human model: bad human index");
  pair_ = DynamicsModel(joint.robot(), {joint.human(model_.human)});
  solo_ = DynamicsModel(joint.human(model_.human), {});
  const int nrx = joint.robot().nx;
  const int off = joint.human_state_offset(model_.human);
  const int nhx = joint.human(model_.human).nx;
  for (int i = 0; i < nrx; ++i) pair_map_.push_back(i);
  for (int i = 0; i < nhx; ++i) {
    pair_map_.push_back(off + i);
    solo_map_.push_back(off + i);
  }
  reset();
}

void HumanPredictor::reset() {
  warm_.assign(model_.num_modes(), std::vector<std::vector<Vec>>(model_.n_theta()));
}

namespace {

std::vector<Vec> shifted(const std::vector<Vec>& us) {
  if (us.empty()) return us;
  std::vector<Vec> out(us.begin() + 1, us.end());
  out.push_back(us.back());
  return out;
}

}  // namespace

HumanPrediction HumanPredictor::predict(const Vec& x, int stages) {
  require(x.size() == joint_.nx(), "HumanPredictor::predict: state dimension mismatch");
  require(stages >= 1, "HumanPredictor::predict: need at least one stage");
  const int nm = model_.num_modes(), nb = model_.n_theta();
  const int hz = model_.game.horizon;
  const int ns = std::min(stages, hz);
  HumanPrediction pred;
  pred.human = model_.human;
  pred.q.assign(ns, std::vector<std::vector<QModel>>(nm, std::vector<QModel>(nb)));
  pred.maps.assign(ns, std::vector<std::vector<LaplaceMap>>(nm, std::vector<LaplaceMap>(nb)));
  pred.game_converged.assign(nm, std::vector<bool>(nb, false));

  Vec x_pair(pair_map_.size()), x_solo(solo_map_.size());
  for (size_t i = 0; i < pair_map_.size(); ++i) x_pair[i] = x[pair_map_[i]];
  for (size_t i = 0; i < solo_map_.size(); ++i) x_solo[i] = x[solo_map_[i]];
  const Vec ur_zero = Vec::Zero(joint_.nr());

  for (int m = 0; m < nm; ++m) {
    for (int b = 0; b < nb; ++b) {
      const BasisGame& g = model_.games[m][b];
      if (g.response == RobotResponse::Oblivious) {
        const auto sol = solve_ilq_game(solo_, {g.human_cost}, x_solo, warm_[m][b], model_.game);
        pred.game_converged[m][b] = sol.converged;
        warm_[m][b] = shifted(sol.strategy.us);
        for (int t = 0; t < ns; ++t) {
          const QModel single = q_model_from_game(sol, t, 0, -1);
          pred.q[t][m][b] = oblivious_q(single, solo_map_, x, ur_zero);
        }
      } else {
        const auto sol =
            solve_ilq_game(pair_, {g.robot_cost, g.human_cost}, x_pair, warm_[m][b], model_.game);
        pred.game_converged[m][b] = sol.converged;
        warm_[m][b] = shifted(sol.strategy.us);
        for (int t = 0; t < ns; ++t) {
          QModel q = q_model_from_game(sol, t, 1, 0);
          const Vec& xn = sol.strategy.xs[t];
          switch (g.response) {
            case RobotResponse::Nash: q = nash_q(q, sol, t, 0); break;
            case RobotResponse::Protected: q = worst_case_q(q, joint_.robot_bounds(), xn); break;
            case RobotResponse::Wishful: q = best_case_q(q, joint_.robot_bounds(), xn); break;
            default: break;
          }
          pred.q[t][m][b] = q.embed(pair_map_, x);
        }
      }
      for (int t = 0; t < ns; ++t) pred.maps[t][m][b] = laplace_map(pred.q[t][m][b], model_.beta);
    }
  }
  return pred;
}

// ---------------------------------------------------------------------------

double boltzmann_density(const QModel& q, double beta, const Vec& x, const Vec& ur, const Vec& uh,
                         bool normalized) {
  require(beta > 0.0, "boltzmann_density: beta must be positive");
  if (!normalized) return std::exp(beta * q.value(x, ur, uh));
  q.require_concave();
  const Vec mu = q.argmax(x, ur);
  const Mat prec = -beta * 0.5 * (q.hhh + q.hhh.transpose());
  const Eigen::LLT<Mat> llt(prec);
  const Vec d = uh - mu;
  double logdet = 0.0;
  for (int i = 0; i < prec.rows(); ++i) logdet += 2.0 * std::log(Mat(llt.matrixL())(i, i));
  const double k = static_cast<double>(d.size());
  return std::exp(-0.5 * d.dot(prec * d) + 0.5 * logdet - 0.5 * k * std::log(2.0 * std::numbers::pi));
}

LaplacePolicy laplace_approx(const QModel& q, double beta, const Vec& x, const Vec& ur,
                             const ControlBounds& bounds) {
  require(beta > 0.0, "laplace_approx: beta must be positive");
  const LaplaceMap m = laplace_map(q, beta);
  LaplacePolicy out;
  out.mean = m.mean(x, ur);
  out.cov = m.cov;
  if (!bounds.contains(out.mean)) {
    out.mean = bounds.project(out.mean);
    out.clipped = true;
  }
  return out;
}

LaplacePolicy laplace_approx_numeric(const std::function<Vec(const Vec&)>& grad,
                                     const std::function<Mat(const Vec&)>& hess,
                                     const std::function<double(const Vec&)>& value,
                                     const Vec& u0, double beta, const ControlBounds& bounds,
                                     double tol, int max_iter) {
  require(beta > 0.0, "laplace_approx: beta must be positive");
  Vec u = u0;
  for (int it = 0; it < max_iter; ++it) {
    const Vec g = grad(u);
    if (g.lpNorm<Eigen::Infinity>() < tol) break;
    const Mat h = hess(u);
    Eigen::LLT<Mat> llt(-0.5 * (h + h.transpose()));
    Vec step;
    if (llt.info() == Eigen::Success)
      step = llt.solve(g);
    else
      step = g;  // gradient ascent where the utility is not locally concave
    double t = 1.0;
    const double v0 = value(u);
    while (t > 1e-12 && !(value(u + t * step) >= v0)) t *= 0.5;
    if (t <= 1e-12) break;
    u += t * step;
  }
  const Mat h = hess(u);
  const Mat nh = -0.5 * (h + h.transpose());
  Eigen::LLT<Mat> llt(nh);
  if (llt.info() != Eigen::Success)
    throw NumericalError("laplace_approx: utility Hessian is not negative definite at the mode");
  LaplacePolicy out;
  out.mean = u;
  out.cov = nh.inverse() / beta;
  if (!bounds.contains(u)) {
    out.mean = bounds.project(u);
    out.clipped = true;
  }
  return out;
}

Vec sample_human_action(const std::vector<Vec>& means, const std::vector<Mat>& covs,
                        const Vec& theta, Rng& rng, const std::optional<ControlBounds>& bounds) {
  require(!means.empty() && means.size() == covs.size(), "sample_human_action: basis mismatch");
  require(theta.size() == static_cast<Eigen::Index>(means.size()),
          "sample_human_action: theta has wrong length");
  const Eigen::Index m = means[0].size();
  Vec mean = Vec::Zero(m);
  Mat cov = Mat::Zero(m, m);
  for (size_t i = 0; i < means.size(); ++i) {
    mean += theta[i] * means[i];
    cov += theta[i] * theta[i] * covs[i];
  }
  const Mat l = psd_cholesky<double>(cov);
  Vec u = mean + l * rng.normal_vec(m);
  if (bounds) u = bounds->project(u);
  return u;
}

Vec simulate_human(const HumanPrediction& pred, const Vec& theta, int mode, const Vec& x,
                   const Vec& ur, const ControlBounds& bounds, Rng& rng, bool noise) {
  require(mode >= 0 && mode < pred.num_modes(), "simulate_human: bad mode");
  std::vector<Vec> means;
  std::vector<Mat> covs;
  for (int i = 0; i < pred.n_theta(); ++i) {
    means.push_back(pred.map(0, mode, i).mean(x, ur));
    covs.push_back(noise ? pred.basis_cov(0, mode, i) : Mat::Zero(pred.nh(), pred.nh()));
  }
  return sample_human_action(means, covs, theta, rng, bounds);
}

}  // namespace dualmpc
