#pragma once

#include <string>
#include <vector>

#include "dualmpc/common.hpp"

namespace dualmpc {

enum class AgentKind { Bicycle, Unicycle, Linear };

/// Box bounds for one control vector.
struct ControlBounds {
  Vec lo;
  Vec hi;

  Eigen::Index size() const { return lo.size(); }
  bool contains(const Vec& u, double tol = 0.0) const;
  Vec project(const Vec& u) const;
  template <class T>
  VecT<T> project(const VecT<T>& u) const {
    VecT<T> out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = clamp_scalar(u[i], lo[i], hi[i]);
    return out;
  }
};

struct BicycleParams {
  double dt = 0.2;
  double wheelbase = 2.7;
  double length = 4.5;
  double width = 1.8;
  double sigma = 0.0;  // per-state process-noise standard deviation
  ControlBounds bounds{Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)};
};

struct UnicycleParams {
  double dt = 0.2;
  double length = 0.6;
  double width = 0.6;
  double sigma = 0.0;
  ControlBounds bounds{Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)};
};

struct LinearParams {
  double dt = 0.2;
  Mat a;
  Mat b;
  int pos_x = 0;
  int pos_y = -1;  // -1: the agent moves along one axis only
  double length = 1.0;
  double width = 1.0;
  double sigma = 0.0;
  ControlBounds bounds;
};

/// One agent's Euler-discretized, input-affine dynamics
/// x⁺ = f(x) + B(x) u.
struct AgentModel {
  std::string name;
  AgentKind kind = AgentKind::Linear;
  int nx = 0;
  int nu = 0;
  double dt = 0.2;
  double wheelbase = 1.0;
  Mat a;  // Linear only
  Mat b;  // Linear only
  int pos_x = 0;
  int pos_y = 1;
  int heading = -1;
  double length = 1.0;
  double width = 1.0;
  double sigma = 0.0;
  ControlBounds bounds;

  template <class T>
  VecT<T> drift(const VecT<T>& x) const;
  template <class T>
  MatT<T> input_matrix(const VecT<T>& x) const;
};

AgentModel bicycle_agent(const std::string& name, const BicycleParams& p);
AgentModel unicycle_agent(const std::string& name, const UnicycleParams& p);
AgentModel linear_agent(const std::string& name, const LinearParams& p);
/// Double integrator along one axis: state (p, v), input acceleration.
AgentModel double_integrator_agent(const std::string& name, double dt, double sigma,
                                   const ControlBounds& bounds);

struct Linearization {
  Mat a;
  Mat br;
  Mat bh;
};

/// Joint robot-human system. Agent 0 is the robot; agents 1..H are humans.
/// The joint state stacks agent states in order; uR is the robot input and
/// uH stacks the human inputs in order.
class DynamicsModel {
 public:
  DynamicsModel() = default;
  DynamicsModel(AgentModel robot, std::vector<AgentModel> humans);

  int nx() const { return nx_; }
  int nr() const { return agents_[0].nu; }
  int nh() const { return nh_; }
  double dt() const { return agents_[0].dt; }
  int num_humans() const { return static_cast<int>(agents_.size()) - 1; }
  const AgentModel& agent(int a) const { return agents_[a]; }
  const AgentModel& robot() const { return agents_[0]; }
  const AgentModel& human(int h) const { return agents_[h + 1]; }
  int state_offset(int a) const { return state_offset_[a]; }
  /// Offset of human h's input inside uH.
  int human_input_offset(int h) const { return input_offset_[h + 1]; }
  int human_state_offset(int h) const { return state_offset_[h + 1]; }
  const Mat& noise_cov() const { return sigma_d_; }
  const ControlBounds& robot_bounds() const { return agents_[0].bounds; }
  ControlBounds human_bounds() const;

  template <class T>
  VecT<T> drift(const VecT<T>& x) const;
  template <class T>
  MatT<T> robot_input_matrix(const VecT<T>& x) const;
  template <class T>
  MatT<T> human_input_matrix(const VecT<T>& x) const;
  /// f(x) + B^R(x) uR + B^H(x) uH + d.
  template <class T>
  VecT<T> step(const VecT<T>& x, const VecT<T>& ur, const VecT<T>& uh, const VecT<T>& d) const;

  Vec step(const Vec& x, const Vec& ur, const Vec& uh, const Vec& d) const {
    return step<double>(x, ur, uh, d);
  }
  Vec step(const Vec& x, const Vec& ur, const Vec& uh) const {
    return step<double>(x, ur, uh, Vec::Zero(nx_));
  }

 private:
  void check(const Vec& x, const Vec& ur, const Vec& uh, const Vec& d) const;

  std::vector<AgentModel> agents_;
  std::vector<int> state_offset_;
  std::vector<int> input_offset_;
  int nx_ = 0;
  int nh_ = 0;
  Mat sigma_d_;
};

/// Single-agent models (the agent acts as the robot, uH is empty).
DynamicsModel bicycle_model(const BicycleParams& p);
DynamicsModel unicycle_model(const UnicycleParams& p);

/// Jacobians of the one-step map with respect to x, uR and uH.
Linearization linearize(const DynamicsModel& model, const Vec& x, const Vec& ur, const Vec& uh);

// ---------------------------------------------------------------------------

template <class T>
VecT<T> AgentModel::drift(const VecT<T>& x) const {
  using std::cos;
  using std::sin;
  switch (kind) {
    case AgentKind::Bicycle: {
      VecT<T> out = x;
      out[0] += x[3] * cos(x[2]) * dt;
      out[1] += x[3] * sin(x[2]) * dt;
      return out;
    }
    case AgentKind::Unicycle:
      return x;
    case AgentKind::Linear:
      return a.template cast<T>() * x;
  }
  return x;
}

template <class T>
MatT<T> AgentModel::input_matrix(const VecT<T>& x) const {
  using std::cos;
  using std::sin;
  switch (kind) {
    case AgentKind::Bicycle: {
      MatT<T> bm = MatT<T>::Zero(4, 2);
      bm(2, 1) = x[3] * (dt / wheelbase);
      bm(3, 0) = T(dt);
      return bm;
    }
    case AgentKind::Unicycle: {
      MatT<T> bm = MatT<T>::Zero(3, 2);
      bm(0, 0) = cos(x[2]) * dt;
      bm(1, 0) = sin(x[2]) * dt;
      bm(2, 1) = T(dt);
      return bm;
    }
    case AgentKind::Linear:
      return b.template cast<T>();
  }
  return MatT<T>();
}

template <class T>
VecT<T> DynamicsModel::drift(const VecT<T>& x) const {
  VecT<T> out(nx_);
  for (size_t a = 0; a < agents_.size(); ++a) {
    const auto& ag = agents_[a];
    out.segment(state_offset_[a], ag.nx) =
        ag.drift<T>(VecT<T>(x.segment(state_offset_[a], ag.nx)));
  }
  return out;
}

template <class T>
MatT<T> DynamicsModel::robot_input_matrix(const VecT<T>& x) const {
  MatT<T> bm = MatT<T>::Zero(nx_, nr());
  bm.block(0, 0, agents_[0].nx, agents_[0].nu) =
      agents_[0].input_matrix<T>(VecT<T>(x.segment(0, agents_[0].nx)));
  return bm;
}

template <class T>
MatT<T> DynamicsModel::human_input_matrix(const VecT<T>& x) const {
  MatT<T> bm = MatT<T>::Zero(nx_, nh_);
  for (size_t a = 1; a < agents_.size(); ++a) {
    const auto& ag = agents_[a];
    bm.block(state_offset_[a], input_offset_[a], ag.nx, ag.nu) =
        ag.input_matrix<T>(VecT<T>(x.segment(state_offset_[a], ag.nx)));
  }
  return bm;
}

template <class T>
VecT<T> DynamicsModel::step(const VecT<T>& x, const VecT<T>& ur, const VecT<T>& uh,
                            const VecT<T>& d) const {
  if constexpr (std::is_same_v<T, double>) check(x, ur, uh, d);
  VecT<T> out(nx_);
  for (size_t a = 0; a < agents_.size(); ++a) {
    const auto& ag = agents_[a];
    const VecT<T> xa = x.segment(state_offset_[a], ag.nx);
    const VecT<T> ua = a == 0 ? VecT<T>(ur) : VecT<T>(uh.segment(input_offset_[a], ag.nu));
    out.segment(state_offset_[a], ag.nx) = ag.drift<T>(xa) + ag.input_matrix<T>(xa) * ua;
  }
  return out + d;
}

}  // namespace dualmpc
