#pragma once

// Small dense kernels written against a generic scalar so that the same code
// runs on doubles and on forward-mode derivative scalars.

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dualmpc/common.hpp"

namespace dualmpc {

using std::exp;
using std::log;
using std::sqrt;

template <class T>
MatT<T> symmetrize(const MatT<T>& a) {
  return (a + a.transpose()) * T(0.5);
}

/// Lower Cholesky factor of a symmetric PSD matrix. Zero pivots are accepted
/// (the corresponding column is set to zero), so singular covariances such as
/// Σ_d = 0 still have a square root. A clearly negative pivot throws with the
/// smallest eigenvalue in the message.
template <class T>
MatT<T> psd_cholesky(const MatT<T>& a, double tol = 1e-12) {
  const Eigen::Index n = a.rows();
  require(a.cols() == n, "psd_cholesky: matrix must be square");
  double scale = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(value_of(a(i, i))));
  const double zero_tol = tol * std::max(scale, 1.0);
  MatT<T> l = MatT<T>::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    T d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (value_of(d) < -zero_tol) {
      Eigen::SelfAdjointEigenSolver<Mat> es(values_of<T>(a));
      std::ostringstream msg;
      msg << "matrix is not positive semidefinite (min eigenvalue " << es.eigenvalues().minCoeff()
          << ")";
      throw NumericalError(msg.str());
    }
    if (value_of(d) <= zero_tol) continue;
    const T ljj = sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      T s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

/// Strict Cholesky for positive definite matrices.
template <class T>
MatT<T> pd_cholesky(const MatT<T>& a) {
  const Eigen::Index n = a.rows();
  require(a.cols() == n, "pd_cholesky: matrix must be square");
  MatT<T> l = MatT<T>::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    T d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(value_of(d) > 0.0)) throw NumericalError("matrix is not positive definite");
    const T ljj = sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      T s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

/// Solves L Lᵀ X = B given the lower factor L.
template <class T>
MatT<T> cholesky_solve(const MatT<T>& l, const MatT<T>& b) {
  const Eigen::Index n = l.rows();
  MatT<T> x = b;
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      T s = x(i, c);
      for (Eigen::Index k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      T s = x(i, c);
      for (Eigen::Index k = i + 1; k < n; ++k) s -= l(k, i) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

template <class T>
MatT<T> spd_solve(const MatT<T>& a, const MatT<T>& b) {
  return cholesky_solve<T>(pd_cholesky<T>(a), b);
}

template <class T>
T logdet_from_cholesky(const MatT<T>& l) {
  T s(0.0);
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += log(l(i, i));
  return T(2.0) * s;
}

template <class T>
T logsumexp(const VecT<T>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) m = std::max(m, value_of(v[i]));
  if (!std::isfinite(m)) return T(m);
  T s(0.0);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(value_of(v[i]))) s += exp(v[i] - T(m));
  }
  return T(m) + log(s);
}

/// Smooth approximation of max(0, z) with width κ.
template <class T>
T softplus(const T& z, double kappa) {
  const T s = z / kappa;
  if (value_of(s) > 30.0) return z;
  if (value_of(s) < -30.0) return T(kappa) * exp(s);
  return T(kappa) * log(T(1.0) + exp(s));
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Symmetric eigenvalue clipping onto the PSD cone.
inline Mat project_psd(const Mat& a, double floor = 0.0) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
  Vec ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline double min_eigenvalue(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace dualmpc
