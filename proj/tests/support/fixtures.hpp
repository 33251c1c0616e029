#pragma once

// Small hand-built models shared by the unit tests.

#include "dualmpc/human.hpp"

namespace fixtures {

using namespace dualmpc;

inline BicycleParams car(double sigma = 0.0) {
  BicycleParams p;
  p.dt = 0.2;
  p.wheelbase = 2.7;
  p.sigma = sigma;
  p.bounds = {Vec{{-4.0, -0.4}}, Vec{{2.0, 0.4}}};
  return p;
}

inline DynamicsModel two_cars(double sigma = 0.0) {
  return DynamicsModel(bicycle_agent("robot", car(sigma)), {bicycle_agent("human", car(sigma))});
}

// Robot cost as assumed by the human, in pair coordinates.
inline PlayerCost pair_robot_cost() {
  PlayerCost r;
  r.stage.tracking = {{1, 0.5, 0.0}, {2, 5.0, 0.0}, {3, 1.0, 24.0}};
  r.stage.control = {{0, 1.0, 0.0}, {1, 20.0, 0.0}};
  r.stage.proximity = {{0, 1, 4, 5, 4.95, 1.98, 20.0, 0.2, 0.2}};
  r.terminal.tracking = r.stage.tracking;
  return r;
}

// Human lane keeping at lane y, in pair coordinates (focused) or solo
// coordinates (distracted).
inline PlayerCost human_cost(double lane, bool solo, bool avoid) {
  const int o = solo ? 0 : 4;
  const int ui = solo ? 0 : 2;
  PlayerCost h;
  h.stage.tracking = {{o + 1, 1.0, lane}, {o + 2, 5.0, 0.0}, {o + 3, 1.0, 18.0}};
  h.stage.control = {{ui, 1.0, 0.0}, {ui + 1, 20.0, 0.0}};
  if (avoid) h.stage.proximity = {{4, 5, 0, 1, 7.5, 2.5, 30.0, 0.5, 0.5}};
  h.terminal.tracking = h.stage.tracking;
  return h;
}

// Two lane modes (l: y = 3.6, r: y = 0) and bases (distracted, focused).
inline HumanBehaviorModel highway_human(double beta = 20.0) {
  HumanBehaviorModel m;
  m.human = 0;
  m.modes = {"l", "r"};
  m.bases = {"D", "F"};
  m.beta = beta;
  for (double lane : {3.6, 0.0}) {
    BasisGame d{RobotResponse::Oblivious, human_cost(lane, true, false), {}};
    BasisGame f{RobotResponse::Responsive, human_cost(lane, false, true), pair_robot_cost()};
    m.games.push_back({d, f});
  }
  return m;
}

inline Vec highway_state() { return Vec{{0.0, 0.0, 0.0, 22.0, 14.0, 1.8, 0.0, 18.0}}; }

}  // namespace fixtures
