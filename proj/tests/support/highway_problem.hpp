#pragma once

// Planning problem around the two-car highway fixture.

#include "dualmpc/smpc.hpp"
#include "fixtures.hpp"

namespace fixtures {

inline RobotCostModel highway_robot_cost() {
  const PlayerCost pc = pair_robot_cost();
  RobotCostModel c;
  c.stage = pc.stage;
  c.terminal = pc.terminal;
  return c;
}

inline FailureSet highway_failure() {
  FailureSet f;
  f.ellipses = {{0, 1, 4, 5, 4.95, 1.98, 0.0, 0.0, 0.1}};
  f.halfplanes = {{1, 5.4, 1.0, 0.0, 0.0, 0.1}, {1, -1.8, -1.0, 0.0, 0.0, 0.1}};
  return f;
}

inline BeliefState highway_belief(double p_left = 0.5) {
  return BeliefState::uniform_theta(Vec{{0.5, 0.5}}, 0.2 * Mat::Identity(2, 2),
                                    Vec{{p_left, 1.0 - p_left}});
}

struct HighwaySetup {
  DynamicsModel dyn;
  HumanPrediction pred;
  Vec x;
};

inline HighwaySetup highway_setup(int stages, double sigma = 0.05, Vec x = highway_state()) {
  HighwaySetup s{two_cars(sigma), {}, x};
  HumanPredictor predictor(s.dyn, highway_human());
  s.pred = predictor.predict(x, stages);
  return s;
}

inline PlanningProblem highway_problem(const HighwaySetup& s, const SmpcOptions& o,
                                       const BeliefState& b = highway_belief()) {
  return assemble(s.dyn, highway_robot_cost(), highway_failure(), {s.pred}, {b}, s.x, o);
}

}  // namespace fixtures
