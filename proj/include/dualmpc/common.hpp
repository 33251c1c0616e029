#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace dualmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

template <class T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// Forward-mode scalar used to differentiate tree rollouts. Storage is inline
// so that arithmetic never touches the heap.
inline constexpr int kMaxAdDirections = 160;
using AdDerivatives = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxAdDirections, 1>;
using Ad = Eigen::AutoDiffScalar<AdDerivatives>;

/// Thrown when a caller breaks an operation's preconditions (dimension
/// mismatch, invalid parameters, malformed beliefs).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical procedure cannot produce a meaningful result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct is_ad : std::false_type {};
template <class D>
struct is_ad<Eigen::AutoDiffScalar<D>> : std::true_type {};

inline double value_of(double v) { return v; }
template <class D>
double value_of(const Eigen::AutoDiffScalar<D>& v) {
  return v.value();
}

template <class T>
Vec values_of(const VecT<T>& v) {
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = value_of(v[i]);
  return out;
}

template <class T>
Mat values_of(const MatT<T>& m) {
  Mat out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = value_of(m(i, j));
  return out;
}

template <class T>
VecT<T> cast_vec(const Vec& v) {
  return v.template cast<T>();
}

template <class T>
MatT<T> cast_mat(const Mat& m) {
  return m.template cast<T>();
}

/// Clamp that keeps the derivative of the active branch and zeroes it when
/// the bound is active.
template <class T>
T clamp_scalar(const T& v, double lo, double hi) {
  if (value_of(v) < lo) return T(lo);
  if (value_of(v) > hi) return T(hi);
  return v;
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace dualmpc
