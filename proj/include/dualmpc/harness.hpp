#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualmpc/scenarios.hpp"

namespace dualmpc {

/// Belief of one human flattened for the trace.
struct BeliefSnapshot {
  Vec p;                  // [mode]
  std::vector<Vec> mean;  // [mode]
  std::vector<Mat> cov;   // [mode]
};

BeliefSnapshot snapshot(const BeliefState& b);
BeliefState restore(const BeliefSnapshot& s);

/// One executed step. Record k holds x_k and the belief b_k; the inputs
/// are those applied at x_k (zero on the final record, which has no input).
struct TraceRecord {
  int step = 0;
  double time = 0.0;
  Vec x;
  Vec ur;
  Vec uh;
  std::vector<BeliefSnapshot> beliefs;  // [human]
  std::vector<int> true_modes;          // [human] M* at this step
  double stage_cost = 0.0;
  double violation = 0.0;  // max_j h_j(x), > 0 inside the failure set
  bool collision = false;
  bool solver_ok = true;
  int solver_iterations = 0;
  double solver_merit = 0.0;
  double planned_slack = 0.0;  // largest soft-constraint slack of the plan
};

struct TrialTrace {
  std::string scenario;
  std::string planner;
  std::uint64_t master_seed = 0;
  std::uint64_t trial = 0;
  std::vector<int> agent_offsets;  // [agent] state offset; position is (o, o + 1)
  std::vector<Vec> true_theta;     // [human] θ*, constant along the trial
  std::vector<TraceRecord> records;
};

struct TrialMetrics {
  double closed_loop_cost = 0.0;  // Σ ℓ^R(x_t, u_t) over executed pairs
  bool collision = false;
  int collision_step = -1;
  bool failed = false;  // planner hard failure, trial stopped early
  std::string failure;
  int soft_failures = 0;  // steps that executed an unconverged plan
  std::vector<double> solve_times;  // wall seconds per decision
  std::vector<double> mode_entropy;  // Σ_h H(p_h(M)) per record
};

struct SolveTimeStats {
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

SolveTimeStats solve_time_stats(std::vector<double> times);

struct BenchmarkMetrics {
  std::string scenario;
  std::string planner;
  int trials = 0;
  int collisions = 0;
  int failed = 0;
  double collision_rate = 0.0;  // collisions / trials
  double mean_cost = 0.0;       // over trials that did not fail
  double std_cost = 0.0;
  double entropy_reduced = 0.0;  // fraction of trials ending below the prior entropy
  SolveTimeStats solve_time;
  std::vector<TrialMetrics> per_trial;
};

struct TrialResult {
  TrialTrace trace;
  TrialMetrics metrics;
};

/// PRNG purposes of one trial; each gets its own stream from
/// trial_rng(master, trial, purpose).
enum class TrialStream : std::uint64_t {
  InitialState = 1,
  HiddenState = 2,
  HumanAction = 3,
  Disturbance = 4,
  Planner = 5,
};

/// Closed loop with replanning at every step. Trial `trial` of master seed
/// `master` draws x0, (θ*, M*) and its switch, human action noise and
/// disturbances from separate streams.
TrialResult run_trial(const ScenarioConfig& cfg, const PlannerConfig& planner,
                      std::uint64_t master, std::uint64_t trial);

/// Trials 0…n−1 of `master`, or one trial per entry of `seeds` when given
/// (each entry is used as the master seed of trial 0). Trials run on up to
/// `jobs` threads; the result does not depend on `jobs`.
BenchmarkMetrics run_benchmark(const ScenarioConfig& cfg, const PlannerConfig& planner,
                               int n_trials, std::uint64_t master,
                               const std::vector<std::uint64_t>& seeds = {}, int jobs = 1);
BenchmarkMetrics aggregate(const std::vector<TrialMetrics>& trials);

double closed_loop_cost(const TrialTrace& trace, const RobotCostModel& cost);

/// Re-runs the belief filter over the trace's states and inputs with fresh
/// human predictions; returns the largest deviation from the recorded
/// belief columns.
double replay_belief_error(const ScenarioConfig& cfg, const TrialTrace& trace);

// --- Trace files -------------------------------------------------------------

/// Dimensions of a trace's columns.
struct TraceLayout {
  int nx = 0;
  int nr = 0;
  int nh = 0;
  std::vector<int> modes;    // [human]
  std::vector<int> n_theta;  // [human]
};

TraceLayout layout_of(const ScenarioConfig& cfg);
TraceLayout layout_of(const TrialTrace& trace);
std::vector<std::string> trace_header(const TraceLayout& l);

/// CSV with a `#` metadata line and a fixed header; floats are written with
/// 17 significant digits so that reading reproduces them exactly.
std::string trace_to_csv(const TrialTrace& trace);
TrialTrace trace_from_csv(const std::string& text);
void export_trace(const TrialTrace& trace, const std::string& path);
TrialTrace import_trace(const std::string& path);

std::string metrics_to_json(const BenchmarkMetrics& m);

// --- Plots -------------------------------------------------------------------

/// Trajectories of all agents in the plane.
std::string trajectory_svg(const std::vector<TrialTrace>& traces);
/// p(M) per human over time.
std::string belief_svg(const TrialTrace& trace);
/// Σ_h H(p_h(M)) over time for several traces.
std::string entropy_svg(const std::vector<TrialTrace>& traces);
/// Writes trajectory, belief and entropy plots next to `path_stem`
/// (stem + "_traj.svg", ...); returns the paths.
std::vector<std::string> export_plot(const std::vector<TrialTrace>& traces,
                                     const std::string& path_stem);

}  // namespace dualmpc
