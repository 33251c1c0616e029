#include "dualmpc/scenarios.hpp"

#include <cmath>
#include <numbers>

namespace dualmpc {

AgentModel AgentSpec::build() const {
  if (kind == AgentKind::Bicycle) {
    BicycleParams p;
    p.dt = dt;
    p.wheelbase = wheelbase;
    p.length = length;
    p.width = width;
    p.sigma = sigma;
    p.bounds = bounds;
    return bicycle_agent(name, p);
  }
  require(kind == AgentKind::Unicycle, "agent '" + name + "': only bicycle and unicycle agents");
  UnicycleParams p;
  p.dt = dt;
  p.length = length;
  p.width = width;
  p.sigma = sigma;
  p.bounds = bounds;
  return unicycle_agent(name, p);
}

DynamicsModel ScenarioConfig::model() const {
  std::vector<AgentModel> hs;
  for (const auto& h : humans) hs.push_back(h.agent.build());
  return DynamicsModel(robot.build(), std::move(hs));
}

PlanningScene ScenarioConfig::scene(const DynamicsModel& m) const {
  PlanningScene s;
  s.model = &m;
  s.cost = cost;
  s.failure = failure;
  for (const auto& h : humans) s.behaviors.push_back(h.behavior);
  return s;
}

std::vector<BeliefState> ScenarioConfig::priors() const {
  std::vector<BeliefState> out;
  for (const auto& h : humans) out.push_back(h.prior);
  return out;
}

void ScenarioConfig::validate() const {
  require(t_sim >= 1, "scenario '" + name + "': t_sim must be at least 1");
  require(!humans.empty(), "scenario '" + name + "': no humans");
  const DynamicsModel m = model();
  require(x0.size() == m.nx(), "scenario '" + name + "': x0 has the wrong length");
  require(x0_spread.size() == m.nx() && (x0_spread.array() >= 0.0).all(),
          "scenario '" + name + "': x0_spread must be non-negative with one entry per state");
  for (size_t i = 0; i < humans.size(); ++i) {
    const auto& h = humans[i];
    const std::string who = "scenario '" + name + "', human " + std::to_string(i);
    h.behavior.validate();
    require(h.behavior.human == static_cast<int>(i), who + ": behavior.human must be its index");
    h.prior.validate();
    require(h.prior.num_modes() == h.behavior.num_modes() &&
                h.prior.n_theta() == h.behavior.n_theta(),
            who + ": prior does not match the behavior model");
    require(h.mode_weights.size() == h.behavior.num_modes() &&
                (h.mode_weights.array() >= 0.0).all() && h.mode_weights.sum() > 0.0,
            who + ": mode_weights needs one non-negative weight per mode");
    require(h.theta_lo.size() == h.behavior.n_theta() && h.theta_hi.size() == h.behavior.n_theta() &&
                (h.theta_lo.array() <= h.theta_hi.array()).all(),
            who + ": θ range malformed");
    require(h.switch_prob >= 0.0 && h.switch_prob <= 1.0, who + ": switch_prob outside [0, 1]");
    require(h.switch_earliest >= 0 && h.switch_earliest <= h.switch_latest,
            who + ": switch window malformed");
  }
  planner.validate();
}

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

AgentSpec car(const std::string& name, double sigma, double a_lo, double a_hi, double steer) {
  AgentSpec a;
  a.name = name;
  a.kind = AgentKind::Bicycle;
  a.dt = 0.2;
  a.wheelbase = 2.7;
  a.length = 4.5;
  a.width = 1.8;
  a.sigma = sigma;
  a.bounds = {Vec{{a_lo, -steer}}, Vec{{a_hi, steer}}};
  return a;
}

AgentSpec walker(const std::string& name, double sigma) {
  AgentSpec a;
  a.name = name;
  a.kind = AgentKind::Unicycle;
  a.dt = 0.2;
  a.length = 0.6;
  a.width = 0.6;
  a.sigma = sigma;
  a.bounds = {Vec{{0.0, -1.0}}, Vec{{2.0, 1.0}}};
  return a;
}

// Car lane keeping in the pair (robot = indices 0..3, car = o..o+3) or solo
// (o = 0) frame. Heading target psi, lane coordinate `lat` (1 = y, 0 = x).
ResidualCost car_keeping(int o, int ui, int lat, double lane, double psi, double speed,
                         double w_lane, double w_steer = 20.0) {
  ResidualCost c;
  c.tracking = {{o + lat, w_lane, lane}, {o + 2, 5.0, psi}, {o + 3, 1.0, speed}};
  c.control = {{ui, 1.0, 0.0}, {ui + 1, w_steer, 0.0}};
  return c;
}

// Pedestrian (unicycle, input (v, ω)) walking along `lat` = lane at
// heading psi.
ResidualCost walker_keeping(int o, int ui, int lat, double lane, double psi, double speed) {
  ResidualCost c;
  c.tracking = {{o + lat, 1.0, lane}, {o + 2, 2.0, psi}};
  c.control = {{ui, 1.0, speed}, {ui + 1, 1.0, 0.0}};
  return c;
}

PlayerCost both(ResidualCost c) {
  PlayerCost p;
  p.stage = c;
  p.terminal.tracking = c.tracking;
  return p;
}

void add(ResidualCost& a, const ResidualCost& b) {
  a.tracking.insert(a.tracking.end(), b.tracking.begin(), b.tracking.end());
  a.control.insert(a.control.end(), b.control.begin(), b.control.end());
  a.proximity.insert(a.proximity.end(), b.proximity.begin(), b.proximity.end());
  a.halfplanes.insert(a.halfplanes.end(), b.halfplanes.begin(), b.halfplanes.end());
}

ProximityTerm proximity(int ax, int bx, double sx, double sy, double weight, double margin) {
  return {ax, ax + 1, bx, bx + 1, sx, sy, weight, margin, 0.2};
}

// --- Example 1 ---------------------------------------------------------------

constexpr double kLaneLeft = 3.6;
constexpr double kLaneRight = 0.0;
// Steering is expensive at highway speed: δ = 0.1 turns the heading by
// 0.16 rad per step at 22 m/s.
constexpr double kHighwaySteer = 200.0;
constexpr double kHighwaySteerMax = 0.15;
constexpr double kHighwaySigma = 0.02;
// A weak lane preference: the mode shows mostly in how the driver dodges.
constexpr double kDriverLaneWeight = 0.1;

// Robot cost in pair coordinates, also what a focused driver assumes.
PlayerCost highway_robot_pair() {
  PlayerCost r;
  r.stage.tracking = {{1, 0.5, 0.0}, {2, 5.0, 0.0}, {3, 1.0, 24.0}};
  r.stage.control = {{0, 1.0, 0.0}, {1, kHighwaySteer, 0.0}};
  r.stage.proximity = {proximity(0, 4, 4.95, 1.98, 20.0, 0.2)};
  r.terminal.tracking = r.stage.tracking;
  return r;
}

HumanBehaviorModel highway_driver(int human, double beta) {
  HumanBehaviorModel m;
  m.human = human;
  m.modes = {"l", "r"};
  m.bases = {"D", "F"};
  m.beta = beta;
  m.game.horizon = 15;
  for (double lane : {kLaneLeft, kLaneRight}) {
    BasisGame d{RobotResponse::Oblivious, both(car_keeping(0, 0, 1, lane, 0.0, 18.0, kDriverLaneWeight, kHighwaySteer)), {}};
    ResidualCost f = car_keeping(4, 2, 1, lane, 0.0, 18.0, kDriverLaneWeight, kHighwaySteer);
    f.proximity = {proximity(4, 0, 7.5, 2.5, 30.0, 0.5)};
    BasisGame fg{RobotResponse::Responsive, both(f), highway_robot_pair()};
    m.games.push_back({d, fg});
  }
  return m;
}

// --- Example 2 ---------------------------------------------------------------

// Robot heading north along x = 0, crossing driver heading east along y = 0.
PlayerCost intersection_robot_pair(int ho) {
  PlayerCost r = both(car_keeping(0, 0, 0, 0.0, kHalfPi, 6.0, 1.0));
  r.stage.proximity = {proximity(0, ho, 4.0, 4.0, 20.0, 0.2)};
  return r;
}

// Interaction modes N, p, w, o with bases C (also optimizes the robot's
// objective) and NC (own objective only). The oblivious mode plays the
// cooperative basis as a yielding driver that slows down.
HumanBehaviorModel interaction_human(int human, bool pedestrian, int lat, double lane, double psi,
                                     double speed, double beta) {
  HumanBehaviorModel m;
  m.human = human;
  m.modes = {"N", "p", "w", "o"};
  m.bases = {"C", "NC"};
  m.beta = beta;
  m.game.horizon = 15;
  const int ho = 4;
  auto own = [&](int o, int ui, double v) {
    return pedestrian ? walker_keeping(o, ui, lat, lane, psi, v)
                      : car_keeping(o, ui, lat, lane, psi, v, 1.0);
  };
  const PlayerCost robot = intersection_robot_pair(ho);
  const std::vector<RobotResponse> responses{RobotResponse::Nash, RobotResponse::Protected,
                                             RobotResponse::Wishful};
  for (auto resp : responses) {
    ResidualCost c = own(ho, 2, speed);
    add(c, robot.stage);
    c.proximity.push_back(proximity(ho, 0, 4.0, 4.0, 30.0, 0.5));
    PlayerCost cc;
    cc.stage = c;
    cc.terminal.tracking = own(ho, 2, speed).tracking;
    BasisGame cg{resp, cc, robot};
    BasisGame ng{resp, both(own(ho, 2, speed)), robot};
    m.games.push_back({cg, ng});
  }
  BasisGame oc{RobotResponse::Oblivious, both(own(0, 0, 0.5 * speed)), {}};
  BasisGame on{RobotResponse::Oblivious, both(own(0, 0, speed)), {}};
  m.games.push_back({oc, on});
  return m;
}

HumanSpec human_spec(AgentSpec agent, HumanBehaviorModel behavior, const Vec& theta_mean,
                     double theta_var, const Vec& p) {
  HumanSpec h;
  h.agent = std::move(agent);
  h.prior = BeliefState::uniform_theta(theta_mean, theta_var * Mat::Identity(theta_mean.size(),
                                                                             theta_mean.size()),
                                       p);
  h.mode_weights = Vec::Ones(behavior.num_modes());
  h.theta_lo = Vec::Zero(behavior.n_theta());
  h.theta_hi = Vec::Ones(behavior.n_theta());
  h.behavior = std::move(behavior);
  return h;
}

}  // namespace

ScenarioConfig example1_highway() {
  ScenarioConfig c;
  c.name = "example1_highway";
  c.robot = car("robot", kHighwaySigma, -4.0, 2.0, kHighwaySteerMax);
  c.humans.push_back(human_spec(car("driver", kHighwaySigma, -4.0, 2.0, kHighwaySteerMax),
                                highway_driver(0, 20.0),
                                Vec{{0.5, 0.5}}, 0.2, Vec{{0.5, 0.5}}));
  auto& h = c.humans[0];
  h.switch_prob = 0.3;
  h.switch_earliest = 10;
  h.switch_latest = 35;

  const PlayerCost pair = highway_robot_pair();
  c.cost.stage = pair.stage;
  c.cost.terminal = pair.terminal;
  c.failure.ellipses = {{0, 1, 4, 5, 4.95, 1.98, 0.0, 0.0, 0.1}};
  c.failure.halfplanes = {{1, 5.4, 1.0, 0.0, 0.0, 0.1}, {1, -1.8, -1.0, 0.0, 0.0, 0.1}};
  c.x0 = Vec{{0.0, 0.0, 0.0, 22.0, 14.0, 1.8, 0.0, 18.0}};
  c.x0_spread = Vec{{1.0, 0.3, 0.0, 1.0, 1.0, 0.3, 0.0, 1.0}};
  c.t_sim = 50;
  c.planner.kind = PlannerKind::ID;
  c.planner.smpc.horizon = 12;
  c.planner.smpc.dual_horizon = 2;
  c.planner.smpc.belief.transition.mode_mixing = 0.01;
  c.planner.isa_game.horizon = 15;
  c.seed = 1;
  return c;
}

ScenarioConfig example2_intersection() {
  ScenarioConfig c;
  c.name = "example2_intersection";
  c.robot = car("robot", 0.02, -4.0, 2.0, 0.4);
  c.humans.push_back(human_spec(car("driver", 0.02, -4.0, 2.0, 0.4),
                                interaction_human(0, false, 1, 0.0, 0.0, 6.0, 10.0),
                                Vec{{0.5, 0.5}}, 0.2, Vec::Constant(4, 0.25)));

  const PlayerCost pair = intersection_robot_pair(4);
  c.cost.stage = pair.stage;
  c.cost.terminal = pair.terminal;
  c.failure.ellipses = {{0, 1, 4, 5, 3.0, 3.0, 0.0, 0.0, 0.1}};
  c.failure.halfplanes = {{0, 3.6, 1.0, 0.0, 0.0, 0.1}, {0, -3.6, -1.0, 0.0, 0.0, 0.1}};
  c.x0 = Vec{{0.0, -18.0, kHalfPi, 6.0, -18.0, 0.0, 0.0, 6.0}};
  c.x0_spread = Vec{{0.2, 1.0, 0.0, 0.5, 1.0, 0.2, 0.0, 0.5}};
  c.t_sim = 50;
  c.planner.smpc.horizon = 8;
  c.planner.smpc.dual_horizon = 1;
  c.planner.smpc.belief.transition.mode_mixing = 0.01;
  c.planner.isa_game.horizon = 15;
  c.seed = 2;
  return c;
}

ScenarioConfig example3_multiagent() {
  ScenarioConfig c;
  c.name = "example3_multiagent";
  c.robot = car("robot", 0.02, -4.0, 2.0, 0.4);
  // H1 crosses the robot's road at y = 6, H2 drives east at y < 0, H3 west
  // at y > 0; the cars' lane modes are (outer, inner) lanes of their side.
  c.humans.push_back(human_spec(walker("pedestrian", 0.01),
                                interaction_human(0, true, 1, 6.0, 0.0, 1.2, 10.0),
                                Vec{{0.5, 0.5}}, 0.2, Vec::Constant(4, 0.25)));
  auto east = highway_driver(1, 20.0);
  auto west = highway_driver(2, 20.0);
  const std::vector<double> east_lanes{-5.4, -1.8}, west_lanes{5.4, 1.8};
  for (int m = 0; m < 2; ++m) {
    for (auto* d : {&east, &west}) {
      const bool is_east = d == &east;
      const double lane = is_east ? east_lanes[m] : west_lanes[m];
      const double psi = is_east ? 0.0 : std::numbers::pi;
      d->games[m][0].human_cost = both(car_keeping(0, 0, 1, lane, psi, 8.0, 1.0));
      ResidualCost f = car_keeping(4, 2, 1, lane, psi, 8.0, 1.0);
      f.proximity = {proximity(4, 0, 6.0, 4.0, 30.0, 0.5)};
      d->games[m][1].human_cost = both(f);
      d->games[m][1].robot_cost = intersection_robot_pair(4);
    }
  }
  c.humans.push_back(human_spec(car("east", 0.02, -4.0, 2.0, 0.4), east, Vec{{0.5, 0.5}}, 0.2,
                                Vec{{0.5, 0.5}}));
  c.humans.push_back(human_spec(car("west", 0.02, -4.0, 2.0, 0.4), west, Vec{{0.5, 0.5}}, 0.2,
                                Vec{{0.5, 0.5}}));

  // Joint state: robot 0..3, pedestrian 4..6, east 7..10, west 11..14.
  c.cost.stage = car_keeping(0, 0, 0, 0.0, kHalfPi, 6.0, 1.0);
  c.cost.stage.proximity = {proximity(0, 4, 2.5, 2.5, 20.0, 0.2), proximity(0, 7, 4.0, 4.0, 20.0, 0.2),
                            proximity(0, 11, 4.0, 4.0, 20.0, 0.2)};
  c.cost.terminal.tracking = c.cost.stage.tracking;
  c.failure.ellipses = {{0, 1, 4, 5, 1.8, 1.8, 0.0, 0.0, 0.1},
                        {0, 1, 7, 8, 3.0, 3.0, 0.0, 0.0, 0.1},
                        {0, 1, 11, 12, 3.0, 3.0, 0.0, 0.0, 0.1}};
  c.failure.halfplanes = {{0, 3.6, 1.0, 0.0, 0.0, 0.1}, {0, -3.6, -1.0, 0.0, 0.0, 0.1}};
  c.x0 = Vec{{0.0, -20.0, kHalfPi, 6.0, -5.0, 6.0, 0.0, -30.0, -3.6, 0.0, 8.0, 30.0, 3.6,
              std::numbers::pi, 8.0}};
  c.x0_spread = Vec{{0.2, 1.0, 0.0, 0.5, 0.5, 0.2, 0.0, 2.0, 0.3, 0.0, 0.5, 2.0, 0.3, 0.0, 0.5}};
  c.t_sim = 50;
  c.planner.smpc.horizon = 6;
  c.planner.smpc.dual_horizon = 1;
  c.planner.smpc.belief.transition.mode_mixing = 0.01;
  c.planner.isa_game.horizon = 15;
  c.seed = 3;
  return c;
}

std::vector<std::string> scenario_names() {
  return {"example1_highway", "example2_intersection", "example3_multiagent"};
}

ScenarioConfig scenario_by_name(const std::string& name) {
  if (name == "example1" || name == "example1_highway") return example1_highway();
  if (name == "example2" || name == "example2_intersection") return example2_intersection();
  if (name == "example3" || name == "example3_multiagent") return example3_multiagent();
  throw ContractViolation("unknown scenario '" + name +
                          "' (expected example1_highway, example2_intersection or "
                          "example3_multiagent)");
}

namespace {

void scale_proximity(ResidualCost& c, double w) {
  for (auto& p : c.proximity) p.weight = w;
}

}  // namespace

std::vector<std::string> parameter_names() {
  return {"collision_weight", "soft_linear", "soft_quadratic", "info_weight", "belief_weight",
          "horizon", "dual_horizon", "branching", "accel_max", "accel_min", "sigma", "t_sim",
          "switch_prob", "theta_prior_var", "mode_mixing"};
}

void set_parameter(ScenarioConfig& c, const std::string& name, double v) {
  auto as_int = [&](int lo) {
    require(v == std::floor(v) && v >= lo, "parameter " + name + " needs an integer ≥ " +
                                               std::to_string(lo));
    return static_cast<int>(v);
  };
  auto& o = c.planner.smpc;
  if (name == "collision_weight") {
    scale_proximity(c.cost.stage, v);
    scale_proximity(c.cost.terminal, v);
  } else if (name == "soft_linear") {
    o.soft_linear = v;
  } else if (name == "soft_quadratic") {
    o.soft_quadratic = v;
  } else if (name == "info_weight") {
    o.info_weight = v;
  } else if (name == "belief_weight") {
    c.cost.belief_weight = v;
  } else if (name == "horizon") {
    o.horizon = as_int(1);
  } else if (name == "dual_horizon") {
    o.dual_horizon = as_int(1);
  } else if (name == "branching") {
    o.branching = as_int(1);
  } else if (name == "accel_max") {
    c.robot.bounds.hi[0] = v;
  } else if (name == "accel_min") {
    c.robot.bounds.lo[0] = v;
  } else if (name == "sigma") {
    c.robot.sigma = v;
    for (auto& h : c.humans) h.agent.sigma = v;
  } else if (name == "t_sim") {
    c.t_sim = as_int(1);
  } else if (name == "switch_prob") {
    for (auto& h : c.humans) h.switch_prob = v;
  } else if (name == "theta_prior_var") {
    for (auto& h : c.humans)
      for (auto& s : h.prior.cov) s = v * Mat::Identity(s.rows(), s.cols());
  } else if (name == "mode_mixing") {
    o.belief.transition.mode_mixing = v;
  } else {
    throw ContractViolation("unknown parameter '" + name + "'");
  }
}

}  // namespace dualmpc
