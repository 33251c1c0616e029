#include "dualmpc/dynamics.hpp"

#include <sstream>

namespace dualmpc {

bool ControlBounds::contains(const Vec& u, double tol) const {
  if (u.size() != lo.size()) return false;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (u[i] < lo[i] - tol || u[i] > hi[i] + tol) return false;
  }
  return true;
}

Vec ControlBounds::project(const Vec& u) const {
  require(u.size() == lo.size(), "ControlBounds::project: dimension mismatch");
  return u.cwiseMax(lo).cwiseMin(hi);
}

namespace {

void check_bounds(const ControlBounds& b, int nu, const std::string& who) {
  require(b.lo.size() == nu && b.hi.size() == nu, who + ": control bounds need " +
                                                      std::to_string(nu) + " entries");
  for (int i = 0; i < nu; ++i) {
    require(std::isfinite(b.lo[i]) && std::isfinite(b.hi[i]) && b.lo[i] <= b.hi[i],
            who + ": control bounds must be finite intervals");
  }
}

}  // namespace

AgentModel bicycle_agent(const std::string& name, const BicycleParams& p) {
  require(p.dt > 0, "bicycle: dt must be positive");
  require(p.wheelbase > 0, "bicycle: wheelbase must be positive");
  require(p.length > 0 && p.width > 0, "bicycle: footprint must be positive");
  require(p.sigma >= 0, "bicycle: noise level must be non-negative");
  check_bounds(p.bounds, 2, "bicycle");
  AgentModel m;
  m.name = name;
  m.kind = AgentKind::Bicycle;
  m.nx = 4;
  m.nu = 2;
  m.dt = p.dt;
  m.wheelbase = p.wheelbase;
  m.pos_x = 0;
  m.pos_y = 1;
  m.heading = 2;
  m.length = p.length;
  m.width = p.width;
  m.sigma = p.sigma;
  m.bounds = p.bounds;
  return m;
}

AgentModel unicycle_agent(const std::string& name, const UnicycleParams& p) {
  require(p.dt > 0, "unicycle: dt must be positive");
  require(p.length > 0 && p.width > 0, "unicycle: footprint must be positive");
  require(p.sigma >= 0, "unicycle: noise level must be non-negative");
  check_bounds(p.bounds, 2, "unicycle");
  AgentModel m;
  m.name = name;
  m.kind = AgentKind::Unicycle;
  m.nx = 3;
  m.nu = 2;
  m.dt = p.dt;
  m.pos_x = 0;
  m.pos_y = 1;
  m.heading = 2;
  m.length = p.length;
  m.width = p.width;
  m.sigma = p.sigma;
  m.bounds = p.bounds;
  return m;
}

AgentModel linear_agent(const std::string& name, const LinearParams& p) {
  require(p.dt > 0, "linear: dt must be positive");
  require(p.a.rows() == p.a.cols() && p.a.rows() > 0, "linear: A must be square");
  require(p.b.rows() == p.a.rows() && p.b.cols() > 0, "linear: B rows must match A");
  require(p.sigma >= 0, "linear: noise level must be non-negative");
  check_bounds(p.bounds, static_cast<int>(p.b.cols()), "linear");
  AgentModel m;
  m.name = name;
  m.kind = AgentKind::Linear;
  m.nx = static_cast<int>(p.a.rows());
  m.nu = static_cast<int>(p.b.cols());
  m.dt = p.dt;
  m.a = p.a;
  m.b = p.b;
  m.pos_x = p.pos_x;
  m.pos_y = p.pos_y;
  m.heading = -1;
  m.length = p.length;
  m.width = p.width;
  m.sigma = p.sigma;
  m.bounds = p.bounds;
  return m;
}

AgentModel double_integrator_agent(const std::string& name, double dt, double sigma,
                                   const ControlBounds& bounds) {
  LinearParams p;
  p.dt = dt;
  p.a = Mat{{1.0, dt}, {0.0, 1.0}};
  p.b = Mat{{0.5 * dt * dt}, {dt}};
  p.pos_x = 0;
  p.pos_y = -1;
  p.sigma = sigma;
  p.bounds = bounds;
  return linear_agent(name, p);
}

DynamicsModel::DynamicsModel(AgentModel robot, std::vector<AgentModel> humans) {
  agents_.push_back(std::move(robot));
  for (auto& h : humans) agents_.push_back(std::move(h));
  int sx = 0, su = 0;
  for (size_t a = 0; a < agents_.size(); ++a) {
    require(agents_[a].nx > 0 && agents_[a].nu > 0, "DynamicsModel: empty agent");
    require(std::abs(agents_[a].dt - agents_[0].dt) < 1e-15,
            "DynamicsModel: all agents must share one time step");
    state_offset_.push_back(sx);
    sx += agents_[a].nx;
    if (a == 0) {
      input_offset_.push_back(0);
    } else {
      input_offset_.push_back(su);
      su += agents_[a].nu;
    }
  }
  nx_ = sx;
  nh_ = su;
  sigma_d_ = Mat::Zero(nx_, nx_);
  for (size_t a = 0; a < agents_.size(); ++a) {
    const double s2 = agents_[a].sigma * agents_[a].sigma;
    sigma_d_.block(state_offset_[a], state_offset_[a], agents_[a].nx, agents_[a].nx) =
        s2 * Mat::Identity(agents_[a].nx, agents_[a].nx);
  }
}

ControlBounds DynamicsModel::human_bounds() const {
  ControlBounds b{Vec(nh_), Vec(nh_)};
  for (size_t a = 1; a < agents_.size(); ++a) {
    b.lo.segment(input_offset_[a], agents_[a].nu) = agents_[a].bounds.lo;
    b.hi.segment(input_offset_[a], agents_[a].nu) = agents_[a].bounds.hi;
  }
  return b;
}

void DynamicsModel::check(const Vec& x, const Vec& ur, const Vec& uh, const Vec& d) const {
  if (x.size() != nx_ || ur.size() != nr() || uh.size() != nh_ || d.size() != nx_) {
    std::ostringstream msg;
    msg << "step: dimension mismatch (x " << x.size() << "/" << nx_ << ", uR " << ur.size()
        << "/" << nr() << ", uH " << uh.size() << "/" << nh_ << ", d " << d.size() << ")";
    throw ContractViolation(msg.str());
  }
}

DynamicsModel bicycle_model(const BicycleParams& p) {
  return DynamicsModel(bicycle_agent("vehicle", p), {});
}

DynamicsModel unicycle_model(const UnicycleParams& p) {
  return DynamicsModel(unicycle_agent("agent", p), {});
}

Linearization linearize(const DynamicsModel& model, const Vec& x, const Vec& ur, const Vec& uh) {
  require(x.size() == model.nx() && ur.size() == model.nr() && uh.size() == model.nh(),
          "linearize: dimension mismatch");
  using Dyn = Eigen::AutoDiffScalar<Vec>;
  const int nx = model.nx(), nr = model.nr(), nh = model.nh();
  const int nz = nx + nr + nh;
  VecT<Dyn> xs(nx), urs(nr), uhs(nh);
  for (int i = 0; i < nx; ++i) xs[i] = Dyn(x[i], nz, i);
  for (int i = 0; i < nr; ++i) urs[i] = Dyn(ur[i], nz, nx + i);
  for (int i = 0; i < nh; ++i) uhs[i] = Dyn(uh[i], nz, nx + nr + i);
  VecT<Dyn> d(nx);
  for (int i = 0; i < nx; ++i) d[i] = Dyn(0.0, Vec::Zero(nz));
  const VecT<Dyn> out = model.step<Dyn>(xs, urs, uhs, d);
  Mat jac(nx, nz);
  for (int i = 0; i < nx; ++i) {
    if (out[i].derivatives().size() == nz)
      jac.row(i) = out[i].derivatives().transpose();
    else
      jac.row(i).setZero();
  }
  return {jac.leftCols(nx), jac.middleCols(nx, nr), jac.rightCols(nh)};
}

}  // namespace dualmpc
