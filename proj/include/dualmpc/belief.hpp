#pragma once

#include <numbers>
#include <vector>

#include "dualmpc/dynamics.hpp"
#include "dualmpc/human.hpp"
#include "dualmpc/linalg.hpp"

namespace dualmpc {

/// Belief over the hidden state of one human: a Gaussian over θ for every
/// mode plus a categorical distribution over the modes.
struct BeliefState {
  std::vector<Vec> mean;  // [mode] n_θ
  std::vector<Mat> cov;   // [mode] n_θ × n_θ
  Vec p;                  // [mode]

  int num_modes() const { return static_cast<int>(p.size()); }
  int n_theta() const { return mean.empty() ? 0 : static_cast<int>(mean[0].size()); }

  /// Checks shapes, symmetry and positive definiteness; p is renormalized.
  static BeliefState make(std::vector<Vec> mean, std::vector<Mat> cov, Vec p);
  /// Same prior Gaussian N(mean, cov) for every mode.
  static BeliefState uniform_theta(const Vec& mean, const Mat& cov, const Vec& p);
  void validate() const;
};

/// Hidden-state transition. The default is the identity (static θ and M).
struct TimeUpdateModel {
  double theta_diffusion = 0.0;  // Σ^θ += q·I
  double mode_mixing = 0.0;      // p ← (1 − ε) p + ε / |M|
  bool identity() const { return theta_diffusion == 0.0 && mode_mixing == 0.0; }
};

/// Linear-Gaussian observation of θ for one mode: y = H θ + v, v ~ N(0, R).
template <class T>
struct ThetaObservation {
  MatT<T> h;
  VecT<T> y;
  MatT<T> r;
};

struct BeliefOptions {
  TimeUpdateModel transition;
  double obs_jitter = 1e-6;  // added to the diagonal of R
};

/// Σ_d + Σ_i θ̄_i² B^H Σ_i^M B^Hᵀ over the full joint state, using the
/// columns of B^H that belong to the predicted human.
Mat combined_covariance(const DynamicsModel& model, const HumanPrediction& pred, const Vec& x,
                        const Vec& theta_bar, int mode, int stage = 0);

/// Observation of θ under `mode` carried by the human's own state rows:
/// y = x⁺_h − f(x)_h − (B^R uR)_h, H = B^H_hh U^M(x, uR),
/// R = Σ_d,hh + Σ_i θ̄_i² B^H_hh Σ_i^M B^H_hhᵀ + jitter·I.
template <class T>
ThetaObservation<T> observe_theta(const DynamicsModel& model, const HumanPrediction& pred,
                                  int stage, int mode, const VecT<T>& x, const VecT<T>& ur,
                                  const VecT<T>& x_next, const Vec& theta_bar, double jitter) {
  const int h = pred.human;
  const int so = model.human_state_offset(h);
  const int sn = model.human(h).nx;
  const int io = model.human_input_offset(h);
  const int in = model.human(h).nu;
  const VecT<T> f = model.drift<T>(x);
  const MatT<T> br = model.robot_input_matrix<T>(x);
  const MatT<T> bh = model.human_input_matrix<T>(x).block(so, io, sn, in);
  const MatT<T> u = pred.basis_matrix<T>(stage, mode, x, ur);
  ThetaObservation<T> o;
  o.y = x_next.segment(so, sn) - f.segment(so, sn) - br.middleRows(so, sn) * ur;
  o.h = bh * u;
  MatT<T> r = model.noise_cov().block(so, so, sn, sn).template cast<T>();
  for (int i = 0; i < pred.n_theta(); ++i) {
    const double w = theta_bar[i] * theta_bar[i];
    if (w == 0.0) continue;
    r += bh * (pred.basis_cov(stage, mode, i) * w).template cast<T>() * bh.transpose();
  }
  for (int i = 0; i < sn; ++i) r(i, i) += T(jitter);
  o.r = symmetrize<T>(r);
  return o;
}

/// Gaussian density of the human's state rows of x⁺ given θ and the mode
/// (the robot rows carry no information about θ and are left out).
double state_likelihood(const DynamicsModel& model, const HumanPrediction& pred, const Vec& x_next,
                        const Vec& x, const Vec& ur, const Vec& theta, int mode,
                        const Vec& theta_bar, int stage = 0, double jitter = 0.0);

/// Gaussian log density N(y; mean, cov); throws on a singular covariance.
double gaussian_logpdf(const Vec& y, const Vec& mean, const Mat& cov);

struct ThetaPosterior {
  Vec mean;
  Mat cov;
};

/// Information-form update: Σ⁺ = (Σ⁻¹ + HᵀR⁻¹H)⁻¹, μ⁺ = Σ⁺(HᵀR⁻¹y + Σ⁻¹μ).
ThetaPosterior measurement_update_theta(const Vec& mean, const Mat& cov,
                                        const ThetaObservation<double>& obs);

struct ModePosterior {
  Vec p;
  Vec log_likelihood;
  bool degenerate = false;  // no mode explains the data; prior returned
};

/// p⁺(M) ∝ p(M) N(y; H μ_M, R + H Σ_M Hᵀ), evaluated in log space.
ModePosterior measurement_update_mode(const BeliefState& b,
                                      const std::vector<ThetaObservation<double>>& obs);

BeliefState time_update(const BeliefState& b, const TimeUpdateModel& tm);

struct PropagateResult {
  BeliefState belief;
  bool degenerate = false;
};

/// One step of the belief dynamics from an observed transition x → x⁺
/// under robot input uR: per-mode θ update, mode update, then time update.
PropagateResult propagate(const BeliefState& b, const DynamicsModel& model,
                          const HumanPrediction& pred, const Vec& x_next, const Vec& x,
                          const Vec& ur, const std::vector<Vec>& theta_bar,
                          const BeliefOptions& opts = {}, int stage = 0);

/// Same update from precomputed observations.
PropagateResult propagate(const BeliefState& b, const std::vector<ThetaObservation<double>>& obs,
                          const TimeUpdateModel& tm);

/// θ̄ per mode: the conditional means of a belief.
std::vector<Vec> estimate_theta_bar(const BeliefState& b);

double categorical_entropy(const Vec& p);
double gaussian_entropy(const Mat& cov);
/// Categorical entropy of p(M) plus the p(M)-weighted Gaussian entropies.
double hybrid_entropy(const BeliefState& b);

// --- Differentiable recursion used inside the planning problem -------------

template <class T>
struct BeliefT {
  std::vector<VecT<T>> mean;
  std::vector<MatT<T>> cov;
  VecT<T> p;

  static BeliefT from(const BeliefState& b) {
    BeliefT out;
    for (int m = 0; m < b.num_modes(); ++m) {
      out.mean.push_back(b.mean[m].template cast<T>());
      out.cov.push_back(b.cov[m].template cast<T>());
    }
    out.p = b.p.template cast<T>();
    return out;
  }
  BeliefState values() const {
    BeliefState b;
    for (size_t m = 0; m < mean.size(); ++m) {
      b.mean.push_back(values_of<T>(mean[m]));
      b.cov.push_back(values_of<T>(cov[m]));
    }
    b.p = values_of<T>(p);
    return b;
  }
};

/// Kalman-form θ update for one mode; returns the log marginal likelihood
/// of y (innovation covariance S = H Σ Hᵀ + R shared by both updates).
template <class T>
T kalman_update(VecT<T>& mean, MatT<T>& cov, const ThetaObservation<T>& o) {
  const MatT<T> ph = cov * o.h.transpose();
  const MatT<T> s = symmetrize<T>(o.h * ph + o.r);
  const MatT<T> l = pd_cholesky<T>(s);
  const VecT<T> v = o.y - o.h * mean;
  const MatT<T> sv = cholesky_solve<T>(l, MatT<T>(v));
  const MatT<T> sph = cholesky_solve<T>(l, MatT<T>(ph.transpose()));
  mean = mean + ph * sv.col(0);
  cov = symmetrize<T>(MatT<T>(cov - ph * sph));
  const T quad = v.dot(sv.col(0));
  const double k = static_cast<double>(v.size());
  return T(-0.5) * (quad + logdet_from_cholesky<T>(l) + T(k * std::log(2.0 * std::numbers::pi)));
}

template <class T>
BeliefT<T> time_update_t(const BeliefT<T>& b, const TimeUpdateModel& tm) {
  if (tm.identity()) return b;
  BeliefT<T> out = b;
  const int nm = static_cast<int>(b.p.size());
  for (int m = 0; m < nm; ++m)
    for (Eigen::Index i = 0; i < out.cov[m].rows(); ++i) out.cov[m](i, i) += T(tm.theta_diffusion);
  for (int m = 0; m < nm; ++m)
    out.p[m] = T(1.0 - tm.mode_mixing) * b.p[m] + T(tm.mode_mixing / nm);
  return out;
}

/// Observation update of every mode followed by the time update.
template <class T>
BeliefT<T> propagate_t(const BeliefT<T>& b, const std::vector<ThetaObservation<T>>& obs,
                       const TimeUpdateModel& tm) {
  const int nm = static_cast<int>(b.p.size());
  BeliefT<T> out = b;
  VecT<T> logp(nm);
  for (int m = 0; m < nm; ++m) {
    const T ll = kalman_update<T>(out.mean[m], out.cov[m], obs[m]);
    logp[m] = value_of(b.p[m]) > 0.0 ? T(log(b.p[m]) + ll)
                                     : T(-std::numeric_limits<double>::infinity());
  }
  const T z = logsumexp<T>(logp);
  if (std::isfinite(value_of(z))) {
    for (int m = 0; m < nm; ++m)
      out.p[m] = std::isfinite(value_of(logp[m])) ? T(exp(logp[m] - z)) : T(0.0);
  }
  return time_update_t<T>(out, tm);
}

template <class T>
T categorical_entropy_t(const VecT<T>& p) {
  T h(0.0);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (value_of(p[i]) > 0.0) h -= p[i] * log(p[i]);
  return h;
}

template <class T>
T hybrid_entropy_t(const BeliefT<T>& b) {
  T h = categorical_entropy_t<T>(b.p);
  for (size_t m = 0; m < b.mean.size(); ++m) {
    const double k = static_cast<double>(b.cov[m].rows());
    const T ld = logdet_from_cholesky<T>(pd_cholesky<T>(b.cov[m]));
    h += b.p[m] * T(0.5) * (ld + T(k * std::log(2.0 * std::numbers::pi * std::numbers::e)));
  }
  return h;
}

}  // namespace dualmpc
