#include "dualmpc/belief.hpp"

#include <cmath>
#include <limits>

namespace dualmpc {

BeliefState BeliefState::make(std::vector<Vec> mean, std::vector<Mat> cov, Vec p) {
  BeliefState b{std::move(mean), std::move(cov), std::move(p)};
  require(b.p.size() > 0, "belief: at least one mode is required");
  require((b.p.array() >= 0.0).all() && b.p.allFinite(), "belief: p(M) must be non-negative");
  const double s = b.p.sum();
  require(s > 0.0, "belief: p(M) must not be identically zero");
  b.p /= s;
  b.validate();
  return b;
}

BeliefState BeliefState::uniform_theta(const Vec& mean, const Mat& cov, const Vec& p) {
  return make(std::vector<Vec>(p.size(), mean), std::vector<Mat>(p.size(), cov), p);
}

void BeliefState::validate() const {
  const int nm = num_modes();
  require(nm > 0, "belief: at least one mode is required");
  require(static_cast<int>(mean.size()) == nm && static_cast<int>(cov.size()) == nm,
          "belief: one Gaussian per mode is required");
  require(std::abs(p.sum() - 1.0) < 1e-9, "belief: p(M) must sum to one");
  require((p.array() >= 0.0).all(), "belief: p(M) must be non-negative");
  const int k = n_theta();
  for (int m = 0; m < nm; ++m) {
    require(mean[m].size() == k && cov[m].rows() == k && cov[m].cols() == k,
            "belief: inconsistent theta dimensions");
    require(mean[m].allFinite() && cov[m].allFinite(), "belief: non-finite entries");
    const double scale = std::max(1.0, cov[m].cwiseAbs().maxCoeff());
    require((cov[m] - cov[m].transpose()).cwiseAbs().maxCoeff() <= 1e-9 * scale,
            "belief: covariance must be symmetric");
    require(min_eigenvalue(cov[m]) >= -1e-12 * scale, "belief: covariance must be PSD");
  }
}

Mat combined_covariance(const DynamicsModel& model, const HumanPrediction& pred, const Vec& x,
                        const Vec& theta_bar, int mode, int stage) {
  require(theta_bar.size() == pred.n_theta(), "combined_covariance: theta_bar has wrong length");
  const Mat bh_all = model.human_input_matrix<double>(x);
  const Mat bh = bh_all.middleCols(model.human_input_offset(pred.human), model.human(pred.human).nu);
  Mat s = model.noise_cov();
  for (int i = 0; i < pred.n_theta(); ++i)
    s += theta_bar[i] * theta_bar[i] * bh * pred.basis_cov(stage, mode, i) * bh.transpose();
  return 0.5 * (s + s.transpose());
}

double gaussian_logpdf(const Vec& y, const Vec& mean, const Mat& cov) {
  require(y.size() == mean.size() && cov.rows() == y.size(), "gaussian_logpdf: dimension mismatch");
  const Eigen::LLT<Mat> llt(0.5 * (cov + cov.transpose()));
  if (llt.info() != Eigen::Success) throw NumericalError("likelihood covariance is singular");
  const Mat l = llt.matrixL();
  const Vec d = y - mean;
  const Vec z = l.triangularView<Eigen::Lower>().solve(d);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) throw NumericalError("likelihood covariance is singular");
    logdet += 2.0 * std::log(l(i, i));
  }
  const double k = static_cast<double>(y.size());
  return -0.5 * (z.squaredNorm() + logdet + k * std::log(2.0 * std::numbers::pi));
}

double state_likelihood(const DynamicsModel& model, const HumanPrediction& pred, const Vec& x_next,
                        const Vec& x, const Vec& ur, const Vec& theta, int mode,
                        const Vec& theta_bar, int stage, double jitter) {
  require(theta.size() == pred.n_theta(), "state_likelihood: theta has wrong length");
  const auto o = observe_theta<double>(model, pred, stage, mode, x, ur, x_next, theta_bar, jitter);
  return std::exp(gaussian_logpdf(o.y, o.h * theta, o.r));
}

ThetaPosterior measurement_update_theta(const Vec& mean, const Mat& cov,
                                        const ThetaObservation<double>& obs) {
  require(obs.h.cols() == mean.size() && obs.h.rows() == obs.y.size(),
          "measurement_update_theta: observation has wrong shape");
  const Eigen::LLT<Mat> prior(0.5 * (cov + cov.transpose()));
  require(prior.info() == Eigen::Success, "measurement_update_theta: prior must be positive definite");
  const Eigen::LLT<Mat> noise(0.5 * (obs.r + obs.r.transpose()));
  if (noise.info() != Eigen::Success)
    throw NumericalError("measurement_update_theta: observation covariance is singular");
  const Mat prior_info = prior.solve(Mat::Identity(mean.size(), mean.size()));
  const Mat rih = noise.solve(obs.h);
  const Mat info = prior_info + obs.h.transpose() * rih;
  const Eigen::LLT<Mat> post(0.5 * (info + info.transpose()));
  ThetaPosterior out;
  out.cov = post.solve(Mat::Identity(mean.size(), mean.size()));
  out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
  out.mean = out.cov * (rih.transpose() * obs.y + prior_info * mean);
  return out;
}

ModePosterior measurement_update_mode(const BeliefState& b,
                                      const std::vector<ThetaObservation<double>>& obs) {
  const int nm = b.num_modes();
  require(static_cast<int>(obs.size()) == nm, "measurement_update_mode: one observation per mode");
  ModePosterior out;
  out.log_likelihood.resize(nm);
  Vec logp(nm);
  for (int m = 0; m < nm; ++m) {
    const Mat s = obs[m].r + obs[m].h * b.cov[m] * obs[m].h.transpose();
    out.log_likelihood[m] = gaussian_logpdf(obs[m].y, obs[m].h * b.mean[m], s);
    logp[m] = b.p[m] > 0.0 ? std::log(b.p[m]) + out.log_likelihood[m]
                           : -std::numeric_limits<double>::infinity();
  }
  const double z = logsumexp<double>(logp);
  if (!std::isfinite(z)) {
    out.p = b.p;
    out.degenerate = true;
    return out;
  }
  out.p.resize(nm);
  for (int m = 0; m < nm; ++m) out.p[m] = std::isfinite(logp[m]) ? std::exp(logp[m] - z) : 0.0;
  out.p /= out.p.sum();
  return out;
}

BeliefState time_update(const BeliefState& b, const TimeUpdateModel& tm) {
  require(tm.theta_diffusion >= 0.0 && tm.mode_mixing >= 0.0 && tm.mode_mixing <= 1.0,
          "time_update: invalid transition parameters");
  if (tm.identity()) return b;
  BeliefState out = b;
  const int nm = b.num_modes();
  for (int m = 0; m < nm; ++m)
    out.cov[m] += tm.theta_diffusion * Mat::Identity(b.n_theta(), b.n_theta());
  out.p = (1.0 - tm.mode_mixing) * b.p + Vec::Constant(nm, tm.mode_mixing / nm);
  return out;
}

PropagateResult propagate(const BeliefState& b, const std::vector<ThetaObservation<double>>& obs,
                          const TimeUpdateModel& tm) {
  const int nm = b.num_modes();
  require(static_cast<int>(obs.size()) == nm, "propagate: one observation per mode");
  PropagateResult res;
  const ModePosterior mp = measurement_update_mode(b, obs);
  BeliefState post = b;
  for (int m = 0; m < nm; ++m) kalman_update<double>(post.mean[m], post.cov[m], obs[m]);
  post.p = mp.p;
  res.degenerate = mp.degenerate;
  res.belief = time_update(post, tm);
  return res;
}

PropagateResult propagate(const BeliefState& b, const DynamicsModel& model,
                          const HumanPrediction& pred, const Vec& x_next, const Vec& x,
                          const Vec& ur, const std::vector<Vec>& theta_bar,
                          const BeliefOptions& opts, int stage) {
  require(b.num_modes() == pred.num_modes(), "propagate: belief and prediction modes differ");
  require(b.n_theta() == pred.n_theta(), "propagate: belief and prediction bases differ");
  require(static_cast<int>(theta_bar.size()) == b.num_modes(), "propagate: one theta_bar per mode");
  std::vector<ThetaObservation<double>> obs;
  for (int m = 0; m < b.num_modes(); ++m)
    obs.push_back(
        observe_theta<double>(model, pred, stage, m, x, ur, x_next, theta_bar[m], opts.obs_jitter));
  return propagate(b, obs, opts.transition);
}

std::vector<Vec> estimate_theta_bar(const BeliefState& b) { return b.mean; }

double categorical_entropy(const Vec& p) { return categorical_entropy_t<double>(p); }

double gaussian_entropy(const Mat& cov) {
  const double k = static_cast<double>(cov.rows());
  const double ld = std::log(std::max(cov.determinant(), 0.0));
  return 0.5 * (ld + k * std::log(2.0 * std::numbers::pi * std::numbers::e));
}

double hybrid_entropy(const BeliefState& b) {
  double h = categorical_entropy(b.p);
  for (int m = 0; m < b.num_modes(); ++m)
    if (b.p[m] > 0.0) h += b.p[m] * gaussian_entropy(b.cov[m]);
  return h;
}

}  // namespace dualmpc
