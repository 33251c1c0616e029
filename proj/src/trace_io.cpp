#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dualmpc/harness.hpp"

namespace dualmpc {

namespace {

constexpr const char* kTraceMagic = "dualmpc-trace";
constexpr int kTraceVersion = 1;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  for (const auto& t : split(s, ',')) out.push_back(std::stoi(t));
  return out;
}

double parse_double(const std::string& s) {
  size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw ContractViolation("trace: malformed number '" + s + "'");
  return v;
}

}  // namespace

TraceLayout layout_of(const ScenarioConfig& cfg) {
  const DynamicsModel m = cfg.model();
  TraceLayout l;
  l.nx = m.nx();
  l.nr = m.nr();
  l.nh = m.nh();
  for (const auto& h : cfg.humans) {
    l.modes.push_back(h.behavior.num_modes());
    l.n_theta.push_back(h.behavior.n_theta());
  }
  return l;
}

TraceLayout layout_of(const TrialTrace& t) {
  require(!t.records.empty(), "trace has no records");
  const auto& r = t.records.front();
  TraceLayout l;
  l.nx = static_cast<int>(r.x.size());
  l.nr = static_cast<int>(r.ur.size());
  l.nh = static_cast<int>(r.uh.size());
  for (const auto& b : r.beliefs) {
    l.modes.push_back(static_cast<int>(b.p.size()));
    l.n_theta.push_back(b.mean.empty() ? 0 : static_cast<int>(b.mean[0].size()));
  }
  return l;
}

std::vector<std::string> trace_header(const TraceLayout& l) {
  std::vector<std::string> h{"step", "time"};
  for (int i = 0; i < l.nx; ++i) h.push_back("x" + std::to_string(i));
  for (int i = 0; i < l.nr; ++i) h.push_back("ur" + std::to_string(i));
  for (int i = 0; i < l.nh; ++i) h.push_back("uh" + std::to_string(i));
  for (size_t k = 0; k < l.modes.size(); ++k) {
    const std::string p = "h" + std::to_string(k) + "_";
    h.push_back(p + "true_mode");
    for (int m = 0; m < l.modes[k]; ++m) h.push_back(p + "p" + std::to_string(m));
    for (int m = 0; m < l.modes[k]; ++m)
      for (int i = 0; i < l.n_theta[k]; ++i)
        h.push_back(p + "mu" + std::to_string(m) + "_" + std::to_string(i));
    for (int m = 0; m < l.modes[k]; ++m)
      for (int i = 0; i < l.n_theta[k]; ++i)
        for (int j = 0; j < l.n_theta[k]; ++j)
          h.push_back(p + "cov" + std::to_string(m) + "_" + std::to_string(i) +
                      std::to_string(j));
  }
  for (const char* c : {"stage_cost", "violation", "collision", "solver_ok", "solver_iterations",
                        "solver_merit", "planned_slack"})
    h.emplace_back(c);
  return h;
}

std::string trace_to_csv(const TrialTrace& t) {
  const TraceLayout l = layout_of(t);
  nlohmann::json meta;
  meta["format"] = kTraceMagic;
  meta["version"] = kTraceVersion;
  meta["scenario"] = t.scenario;
  meta["planner"] = t.planner;
  meta["master_seed"] = t.master_seed;
  meta["trial"] = t.trial;
  meta["agent_offsets"] = join_ints(t.agent_offsets);
  meta["modes"] = join_ints(l.modes);
  meta["n_theta"] = join_ints(l.n_theta);
  std::vector<std::string> theta;
  for (const auto& th : t.true_theta) {
    std::string s;
    for (int i = 0; i < th.size(); ++i) s += (i ? " " : "") + fmt(th[i]);
    theta.push_back(s);
  }
  meta["true_theta"] = theta;

  std::ostringstream out;
  out << "# " << meta.dump() << "\n";
  const auto header = trace_header(l);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& r : t.records) {
    std::vector<std::string> row{std::to_string(r.step), fmt(r.time)};
    for (int i = 0; i < r.x.size(); ++i) row.push_back(fmt(r.x[i]));
    for (int i = 0; i < r.ur.size(); ++i) row.push_back(fmt(r.ur[i]));
    for (int i = 0; i < r.uh.size(); ++i) row.push_back(fmt(r.uh[i]));
    for (size_t k = 0; k < r.beliefs.size(); ++k) {
      const auto& b = r.beliefs[k];
      row.push_back(std::to_string(k < r.true_modes.size() ? r.true_modes[k] : -1));
      for (int m = 0; m < b.p.size(); ++m) row.push_back(fmt(b.p[m]));
      for (const auto& mu : b.mean)
        for (int i = 0; i < mu.size(); ++i) row.push_back(fmt(mu[i]));
      for (const auto& c : b.cov)
        for (int i = 0; i < c.rows(); ++i)
          for (int j = 0; j < c.cols(); ++j) row.push_back(fmt(c(i, j)));
    }
    row.push_back(fmt(r.stage_cost));
    row.push_back(fmt(r.violation));
    row.push_back(r.collision ? "1" : "0");
    row.push_back(r.solver_ok ? "1" : "0");
    row.push_back(std::to_string(r.solver_iterations));
    row.push_back(fmt(r.solver_merit));
    row.push_back(fmt(r.planned_slack));
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  return out.str();
}

TrialTrace trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(std::getline(in, line) && line.rfind("# ", 0) == 0, "trace: missing metadata line");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(line.substr(2));
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("trace: bad metadata: ") + e.what());
  }
  require(meta.value("format", "") == kTraceMagic, "trace: not a dualmpc trace");
  require(meta.value("version", 0) == kTraceVersion,
          "trace: unsupported version " + std::to_string(meta.value("version", 0)));
  TrialTrace t;
  t.scenario = meta.at("scenario").get<std::string>();
  t.planner = meta.at("planner").get<std::string>();
  t.master_seed = meta.at("master_seed").get<std::uint64_t>();
  t.trial = meta.at("trial").get<std::uint64_t>();
  t.agent_offsets = parse_ints(meta.at("agent_offsets").get<std::string>());
  TraceLayout l;
  l.modes = parse_ints(meta.at("modes").get<std::string>());
  l.n_theta = parse_ints(meta.at("n_theta").get<std::string>());
  for (const auto& s : meta.at("true_theta")) {
    const auto parts = split(s.get<std::string>(), ' ');
    Vec th(static_cast<Eigen::Index>(parts.size()));
    for (size_t i = 0; i < parts.size(); ++i) th[static_cast<Eigen::Index>(i)] = parse_double(parts[i]);
    t.true_theta.push_back(th);
  }

  require(static_cast<bool>(std::getline(in, line)), "trace: missing header");
  const auto header = split(line, ',');
  for (const auto& c : header) {
    if (c.size() > 1 && c[0] == 'x' && std::isdigit(static_cast<unsigned char>(c[1]))) ++l.nx;
    if (c.rfind("ur", 0) == 0) ++l.nr;
    if (c.rfind("uh", 0) == 0) ++l.nh;
  }
  require(header == trace_header(l), "trace: header does not match the version-1 schema");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    require(f.size() == header.size(), "trace: row " + std::to_string(t.records.size()) +
                                           " has " + std::to_string(f.size()) + " fields, expected " +
                                           std::to_string(header.size()));
    size_t k = 0;
    auto next = [&] { return parse_double(f[k++]); };
    TraceRecord r;
    r.step = std::stoi(f[k++]);
    r.time = next();
    r.x = Vec(l.nx);
    for (int i = 0; i < l.nx; ++i) r.x[i] = next();
    r.ur = Vec(l.nr);
    for (int i = 0; i < l.nr; ++i) r.ur[i] = next();
    r.uh = Vec(l.nh);
    for (int i = 0; i < l.nh; ++i) r.uh[i] = next();
    for (size_t h = 0; h < l.modes.size(); ++h) {
      r.true_modes.push_back(std::stoi(f[k++]));
      BeliefSnapshot b;
      const int nm = l.modes[h], nt = l.n_theta[h];
      b.p = Vec(nm);
      for (int m = 0; m < nm; ++m) b.p[m] = next();
      for (int m = 0; m < nm; ++m) {
        Vec mu(nt);
        for (int i = 0; i < nt; ++i) mu[i] = next();
        b.mean.push_back(mu);
      }
      for (int m = 0; m < nm; ++m) {
        Mat c(nt, nt);
        for (int i = 0; i < nt; ++i)
          for (int j = 0; j < nt; ++j) c(i, j) = next();
        b.cov.push_back(c);
      }
      r.beliefs.push_back(std::move(b));
    }
    r.stage_cost = next();
    r.violation = next();
    r.collision = f[k++] == "1";
    r.solver_ok = f[k++] == "1";
    r.solver_iterations = std::stoi(f[k++]);
    r.solver_merit = next();
    r.planned_slack = next();
    t.records.push_back(std::move(r));
  }
  return t;
}

void export_trace(const TrialTrace& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << trace_to_csv(trace);
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

TrialTrace import_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream s;
  s << f.rdbuf();
  return trace_from_csv(s.str());
}

std::string metrics_to_json(const BenchmarkMetrics& m) {
  nlohmann::json j;
  j["scenario"] = m.scenario;
  j["planner"] = m.planner;
  j["trials"] = m.trials;
  j["collisions"] = m.collisions;
  j["failed"] = m.failed;
  j["collision_rate"] = m.collision_rate;
  j["mean_cost"] = m.mean_cost;
  j["std_cost"] = m.std_cost;
  j["entropy_reduced"] = m.entropy_reduced;
  j["solve_time"] = {{"mean", m.solve_time.mean},
                     {"p50", m.solve_time.p50},
                     {"p95", m.solve_time.p95},
                     {"max", m.solve_time.max}};
  auto& per = j["per_trial"] = nlohmann::json::array();
  for (const auto& t : m.per_trial) {
    nlohmann::json e;
    e["closed_loop_cost"] = t.closed_loop_cost;
    e["collision"] = t.collision;
    e["collision_step"] = t.collision_step;
    e["failed"] = t.failed;
    if (t.failed) e["failure"] = t.failure;
    e["soft_failures"] = t.soft_failures;
    e["initial_entropy"] = t.mode_entropy.empty() ? 0.0 : t.mode_entropy.front();
    e["final_entropy"] = t.mode_entropy.empty() ? 0.0 : t.mode_entropy.back();
    per.push_back(e);
  }
  return j.dump(2);
}

}  // namespace dualmpc
