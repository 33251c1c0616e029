#pragma once

#include <string>
#include <vector>

#include "dualmpc/belief.hpp"
#include "dualmpc/planners.hpp"

namespace dualmpc {

/// Dynamics of one agent as written in a scenario file.
struct AgentSpec {
  std::string name;
  AgentKind kind = AgentKind::Bicycle;  // Bicycle or Unicycle
  double dt = 0.2;
  double wheelbase = 2.7;  // bicycle only
  double length = 4.5;
  double width = 1.8;
  double sigma = 0.0;
  ControlBounds bounds{Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)};

  AgentModel build() const;
};

/// One simulated human: its behavior model, the robot's prior over its hidden
/// state, and the law the simulator draws the true hidden state from.
struct HumanSpec {
  AgentSpec agent;
  HumanBehaviorModel behavior;
  BeliefState prior;
  Vec mode_weights;  // M* ~ Categorical(mode_weights)
  Vec theta_lo;      // θ* ~ U[theta_lo, theta_hi] per component
  Vec theta_hi;
  double switch_prob = 0.0;  // chance that M* jumps once during the trial
  int switch_earliest = 0;   // the jump step is uniform on [earliest, latest]
  int switch_latest = 0;
};

struct ScenarioConfig {
  int version = 1;
  std::string name;
  AgentSpec robot;
  std::vector<HumanSpec> humans;
  RobotCostModel cost;
  FailureSet failure;
  Vec x0;
  Vec x0_spread;  // x0 + U[−spread, spread] per state
  int t_sim = 50;
  bool human_noise = true;  // humans sample from their Laplace policies
  bool disturbance = true;  // executed steps add d ~ N(0, Σ_d)
  PlannerConfig planner;
  std::uint64_t seed = 0;

  DynamicsModel model() const;
  PlanningScene scene(const DynamicsModel& model) const;
  std::vector<BeliefState> priors() const;
  void validate() const;
};

/// Two-lane highway overtake: one human driver with lane modes (l, r) and
/// bases (distracted, focused).
ScenarioConfig example1_highway();
/// Uncontrolled intersection: one crossing driver with interaction modes
/// (N, p, w, o) and bases (cooperative, non-cooperative).
ScenarioConfig example2_intersection();
/// Intersection with a pedestrian (Example-2 model) and two drivers
/// (Example-1 model).
ScenarioConfig example3_multiagent();

std::vector<std::string> scenario_names();
/// Preset by name ("example1", "example1_highway", ...).
ScenarioConfig scenario_by_name(const std::string& name);

/// Sets one named tunable (see the README for the list); throws on unknown
/// names.
void set_parameter(ScenarioConfig& cfg, const std::string& name, double value);
std::vector<std::string> parameter_names();

// --- Scenario files (JSON, schema version 1) -----------------------------------

std::string scenario_to_json(const ScenarioConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ScenarioConfig scenario_from_json(const std::string& text);
void save_scenario(const ScenarioConfig& cfg, const std::string& path);
/// A preset name or a path to a scenario file.
ScenarioConfig load_scenario(const std::string& name_or_path);

}  // namespace dualmpc
