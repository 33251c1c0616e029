#include "dualmpc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace dualmpc {

BeliefSnapshot snapshot(const BeliefState& b) { return {b.p, b.mean, b.cov}; }

BeliefState restore(const BeliefSnapshot& s) {
  BeliefState b;
  b.p = s.p;
  b.mean = s.mean;
  b.cov = s.cov;
  return b;
}

namespace {

Rng stream(std::uint64_t master, std::uint64_t trial, TrialStream s) {
  return trial_rng(master, trial, static_cast<std::uint64_t>(s));
}

int sample_categorical(const Vec& w, Rng& rng) {
  const double u = rng.uniform() * w.sum();
  double acc = 0.0;
  for (int k = 0; k < w.size(); ++k) {
    acc += w[k];
    if (u < acc) return k;
  }
  return static_cast<int>(w.size()) - 1;
}

struct HiddenState {
  Vec theta;
  int mode = 0;
  int switch_step = -1;  // −1: no switch
  int switch_to = 0;

  int mode_at(int t) const { return switch_step >= 0 && t >= switch_step ? switch_to : mode; }
};

HiddenState draw_hidden(const HumanSpec& h, Rng& rng) {
  HiddenState s;
  s.mode = sample_categorical(h.mode_weights, rng);
  s.theta = Vec(h.theta_lo.size());
  for (int i = 0; i < s.theta.size(); ++i) s.theta[i] = rng.uniform(h.theta_lo[i], h.theta_hi[i]);
  // Draws are made unconditionally so the stream position does not depend on
  // the outcome.
  const double u = rng.uniform();
  const double when = rng.uniform();
  const double to = rng.uniform();
  const int nm = h.behavior.num_modes();
  if (nm > 1 && u < h.switch_prob) {
    const int span = h.switch_latest - h.switch_earliest + 1;
    s.switch_step = h.switch_earliest + std::min(span - 1, static_cast<int>(when * span));
    const int other = std::min(nm - 2, static_cast<int>(to * (nm - 1)));
    s.switch_to = other >= s.mode ? other + 1 : other;
  }
  return s;
}

double mode_entropy(const std::vector<BeliefState>& b) {
  double h = 0.0;
  for (const auto& bi : b) h += categorical_entropy(bi.p);
  return h;
}

}  // namespace

SolveTimeStats solve_time_stats(std::vector<double> t) {
  SolveTimeStats s;
  if (t.empty()) return s;
  std::sort(t.begin(), t.end());
  double sum = 0.0;
  for (double v : t) sum += v;
  s.mean = sum / static_cast<double>(t.size());
  auto pct = [&](double q) {
    const size_t i = static_cast<size_t>(std::ceil(q * static_cast<double>(t.size()))) - 1;
    return t[std::min(i, t.size() - 1)];
  };
  s.p50 = pct(0.5);
  s.p95 = pct(0.95);
  s.max = t.back();
  return s;
}

TrialResult run_trial(const ScenarioConfig& cfg, const PlannerConfig& planner,
                      std::uint64_t master, std::uint64_t trial) {
  cfg.validate();
  planner.validate();
  const DynamicsModel model = cfg.model();
  const PlanningScene scene = cfg.scene(model);
  const int nh_agents = model.num_humans();

  Rng init_rng = stream(master, trial, TrialStream::InitialState);
  Rng hidden_rng = stream(master, trial, TrialStream::HiddenState);
  Rng action_rng = stream(master, trial, TrialStream::HumanAction);
  Rng noise_rng = stream(master, trial, TrialStream::Disturbance);
  Rng planner_rng = stream(master, trial, TrialStream::Planner);

  Vec x = cfg.x0;
  for (int i = 0; i < x.size(); ++i) x[i] += init_rng.uniform(-cfg.x0_spread[i], cfg.x0_spread[i]);

  std::vector<HiddenState> hidden;
  for (const auto& h : cfg.humans) hidden.push_back(draw_hidden(h, hidden_rng));

  PlannerConfig pc = planner;
  pc.smpc.seed = planner_rng.next_u64();
  const int stages = std::max(pc.smpc.horizon, 1);

  std::vector<HumanPredictor> predictors;
  for (const auto& h : cfg.humans) predictors.emplace_back(model, h.behavior);
  std::vector<BeliefState> beliefs = cfg.priors();

  TrialResult out;
  TrialTrace& tr = out.trace;
  TrialMetrics& m = out.metrics;
  tr.scenario = cfg.name;
  tr.planner = to_string(planner.kind);
  tr.master_seed = master;
  tr.trial = trial;
  for (int a = 0; a <= nh_agents; ++a) tr.agent_offsets.push_back(model.state_offset(a));
  for (const auto& h : hidden) tr.true_theta.push_back(h.theta);

  const Vec sigma = model.noise_cov().diagonal().cwiseSqrt();
  const ControlBounds hb = model.human_bounds();

  auto make_record = [&](int t) {
    TraceRecord r;
    r.step = t;
    r.time = t * model.dt();
    r.x = x;
    r.ur = Vec::Zero(model.nr());
    r.uh = Vec::Zero(model.nh());
    for (const auto& b : beliefs) r.beliefs.push_back(snapshot(b));
    for (const auto& h : hidden) r.true_modes.push_back(h.mode_at(t));
    r.violation = cfg.failure.size() > 0 ? cfg.failure.max_violation(x) : 0.0;
    r.collision = r.violation > 0.0;
    if (r.collision && !m.collision) {
      m.collision = true;
      m.collision_step = t;
    }
    m.mode_entropy.push_back(mode_entropy(beliefs));
    return r;
  };

  for (int t = 0; t < cfg.t_sim; ++t) {
    TraceRecord rec = make_record(t);
    std::vector<HumanPrediction> preds;
    try {
      for (auto& p : predictors) preds.push_back(p.predict(x, stages));
    } catch (const NumericalError& e) {
      m.failed = true;
      m.failure = std::string("human prediction failed: ") + e.what();
      tr.records.push_back(rec);
      return out;
    }

    PolicyDecision d;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      d = decide(scene, pc, x, beliefs, preds);
    } catch (const NumericalError& e) {
      m.failed = true;
      m.failure = std::string("planner failed at step ") + std::to_string(t) + ": " + e.what();
      tr.records.push_back(rec);
      return out;
    }
    m.solve_times.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (!d.ur.allFinite()) {
      m.failed = true;
      m.failure = "planner returned a non-finite input at step " + std::to_string(t);
      tr.records.push_back(rec);
      return out;
    }
    if (!d.ok) ++m.soft_failures;

    Vec uh = Vec::Zero(model.nh());
    for (int h = 0; h < nh_agents; ++h) {
      const int off = model.human_input_offset(h), nu = model.human(h).nu;
      const ControlBounds bh{hb.lo.segment(off, nu), hb.hi.segment(off, nu)};
      uh.segment(off, nu) = simulate_human(preds[h], hidden[h].theta, hidden[h].mode_at(t), x,
                                           d.ur, bh, action_rng, cfg.human_noise);
    }
    Vec dist = Vec::Zero(model.nx());
    if (cfg.disturbance)
      for (int i = 0; i < dist.size(); ++i) dist[i] = sigma[i] * noise_rng.normal();
    const Vec x_next = model.step(x, d.ur, uh, dist);

    for (int h = 0; h < nh_agents; ++h)
      beliefs[h] = propagate(beliefs[h], model, preds[h], x_next, x, d.ur,
                             estimate_theta_bar(beliefs[h]), pc.smpc.belief)
                       .belief;

    rec.ur = d.ur;
    rec.uh = uh;
    rec.stage_cost = cfg.cost.stage_cost(x, d.ur);
    rec.solver_ok = d.ok;
    rec.solver_iterations = d.report.iterations;
    rec.solver_merit = d.report.merit;
    rec.planned_slack = d.report.max_violation;
    m.closed_loop_cost += rec.stage_cost;
    tr.records.push_back(rec);
    x = x_next;
  }
  tr.records.push_back(make_record(cfg.t_sim));
  return out;
}

BenchmarkMetrics aggregate(const std::vector<TrialMetrics>& trials) {
  BenchmarkMetrics b;
  b.trials = static_cast<int>(trials.size());
  b.per_trial = trials;
  std::vector<double> costs, times;
  int reduced = 0;
  for (const auto& t : trials) {
    if (t.collision) ++b.collisions;
    if (t.failed) {
      ++b.failed;
    } else {
      costs.push_back(t.closed_loop_cost);
    }
    if (!t.mode_entropy.empty() && t.mode_entropy.back() < t.mode_entropy.front()) ++reduced;
    times.insert(times.end(), t.solve_times.begin(), t.solve_times.end());
  }
  if (b.trials > 0) {
    b.collision_rate = static_cast<double>(b.collisions) / b.trials;
    b.entropy_reduced = static_cast<double>(reduced) / b.trials;
  }
  if (!costs.empty()) {
    double s = 0.0;
    for (double c : costs) s += c;
    b.mean_cost = s / static_cast<double>(costs.size());
    double v = 0.0;
    for (double c : costs) v += (c - b.mean_cost) * (c - b.mean_cost);
    b.std_cost = costs.size() > 1 ? std::sqrt(v / static_cast<double>(costs.size() - 1)) : 0.0;
  }
  b.solve_time = solve_time_stats(times);
  return b;
}

BenchmarkMetrics run_benchmark(const ScenarioConfig& cfg, const PlannerConfig& planner,
                               int n_trials, std::uint64_t master,
                               const std::vector<std::uint64_t>& seeds, int jobs) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> runs;  // (master, trial)
  if (!seeds.empty()) {
    for (auto s : seeds) runs.emplace_back(s, 0);
  } else {
    require(n_trials >= 1, "run_benchmark: need at least one trial");
    for (int i = 0; i < n_trials; ++i) runs.emplace_back(master, static_cast<std::uint64_t>(i));
  }
  std::vector<TrialMetrics> trials(runs.size());
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (size_t i = next++; i < runs.size(); i = next++) {
      try {
        trials[i] = run_trial(cfg, planner, runs[i].first, runs[i].second).metrics;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(jobs, 1, static_cast<int>(runs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  BenchmarkMetrics b = aggregate(trials);
  b.scenario = cfg.name;
  b.planner = to_string(planner.kind);
  return b;
}

double closed_loop_cost(const TrialTrace& trace, const RobotCostModel& cost) {
  double j = 0.0;
  // The final record carries no executed input.
  for (size_t k = 0; k + 1 < trace.records.size(); ++k)
    j += cost.stage_cost(trace.records[k].x, trace.records[k].ur);
  return j;
}

double replay_belief_error(const ScenarioConfig& cfg, const TrialTrace& trace) {
  const DynamicsModel model = cfg.model();
  require(!trace.records.empty(), "replay_belief_error: empty trace");
  std::vector<HumanPredictor> predictors;
  for (const auto& h : cfg.humans) predictors.emplace_back(model, h.behavior);
  std::vector<BeliefState> b;
  for (const auto& s : trace.records[0].beliefs) b.push_back(restore(s));
  const int stages = std::max(cfg.planner.smpc.horizon, 1);
  double err = 0.0;
  for (size_t k = 0; k + 1 < trace.records.size(); ++k) {
    const auto& r = trace.records[k];
    const Vec& xn = trace.records[k + 1].x;
    for (size_t h = 0; h < predictors.size(); ++h) {
      const HumanPrediction pred = predictors[h].predict(r.x, stages);
      b[h] = propagate(b[h], model, pred, xn, r.x, r.ur, estimate_theta_bar(b[h]),
                       cfg.planner.smpc.belief)
                 .belief;
      const auto& rec = trace.records[k + 1].beliefs[h];
      err = std::max(err, (b[h].p - rec.p).cwiseAbs().maxCoeff());
      for (int mo = 0; mo < b[h].num_modes(); ++mo) {
        err = std::max(err, (b[h].mean[mo] - rec.mean[mo]).cwiseAbs().maxCoeff());
        err = std::max(err, (b[h].cov[mo] - rec.cov[mo]).cwiseAbs().maxCoeff());
      }
    }
  }
  return err;
}

}  // namespace dualmpc
