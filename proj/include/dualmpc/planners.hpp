#pragma once

#include <string>
#include <vector>

#include "dualmpc/human.hpp"
#include "dualmpc/smpc.hpp"

namespace dualmpc {

enum class PlannerKind { ID, ED, ND, CE, ISA };

const char* to_string(PlannerKind k);
PlannerKind planner_kind_from_string(const std::string& s);

struct PlannerConfig {
  PlannerKind kind = PlannerKind::ID;
  SmpcOptions smpc;           // tree, solver, seed; smpc.info_weight is ED's λ
  bool ce_warm_start = true;  // step 1 of the warm-start pipeline
  GameOptions isa_game;

  /// λ > 0 exactly when kind = ED.
  void validate() const;
};

/// What the planners know about the scene besides the state and beliefs.
struct PlanningScene {
  const DynamicsModel* model = nullptr;
  RobotCostModel cost;
  FailureSet failure;
  std::vector<HumanBehaviorModel> behaviors;  // [human], used by ISA-iLQ
};

struct PolicyDecision {
  Vec ur;                  // input to execute now
  std::vector<Vec> plan;   // robot inputs along the most likely branch
  Vec w;                   // full decision vector (empty for ISA-iLQ)
  SolverReport report;
  std::vector<std::vector<BeliefState>> predicted_beliefs;  // [node][human]
  bool ok = true;          // false: best iterate of a failed solve
};

/// Mode with the largest probability; ties go to the lowest index.
int map_mode(const BeliefState& b);

PolicyDecision id_smpc(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                       const std::vector<BeliefState>& b, const std::vector<HumanPrediction>& preds);
PolicyDecision ed_smpc(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                       const std::vector<BeliefState>& b, const std::vector<HumanPrediction>& preds);
PolicyDecision nd_smpc(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                       const std::vector<BeliefState>& b, const std::vector<HumanPrediction>& preds);
PolicyDecision ce_mpc(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                      const std::vector<BeliefState>& b, const std::vector<HumanPrediction>& preds);
PolicyDecision isa_ilq(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                       const std::vector<BeliefState>& b);

/// Dispatches on cfg.kind.
PolicyDecision decide(const PlanningScene& scene, const PlannerConfig& cfg, const Vec& x,
                      const std::vector<BeliefState>& b, const std::vector<HumanPrediction>& preds);

/// Cost of one human under (mode, θ) written on the joint state and the
/// stacked input [uR; uH]: the θ-weighted sum of its basis costs, with
/// negative weights clamped to zero.
PlayerCost blended_human_cost(const DynamicsModel& model, const HumanBehaviorModel& behavior,
                              int mode, const Vec& theta);

}  // namespace dualmpc
