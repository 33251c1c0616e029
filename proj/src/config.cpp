#include <array>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dualmpc/scenarios.hpp"

namespace dualmpc {

namespace {

using json = nlohmann::json;

constexpr int kSchemaVersion = 1;

// Every serialized struct lists its fields once; the same list drives
// writing and reading.
template <class V>
void visit(ControlBounds& t, V& v) {
  v("lo", t.lo);
  v("hi", t.hi);
}
template <class V>
void visit(AgentSpec& t, V& v) {
  v("name", t.name);
  v("kind", t.kind);
  v("dt", t.dt);
  v("wheelbase", t.wheelbase);
  v("length", t.length);
  v("width", t.width);
  v("sigma", t.sigma);
  v("bounds", t.bounds);
}
template <class V>
void visit(TrackingTerm& t, V& v) {
  v("index", t.index);
  v("weight", t.weight);
  v("target", t.target);
}
template <class V>
void visit(ControlTerm& t, V& v) {
  v("index", t.index);
  v("weight", t.weight);
  v("target", t.target);
}
template <class V>
void visit(ProximityTerm& t, V& v) {
  v("ax", t.ax);
  v("ay", t.ay);
  v("bx", t.bx);
  v("by", t.by);
  v("semi_x", t.semi_x);
  v("semi_y", t.semi_y);
  v("weight", t.weight);
  v("margin", t.margin);
  v("kappa", t.kappa);
}
template <class V>
void visit(HalfPlaneTerm& t, V& v) {
  v("index", t.index);
  v("bound", t.bound);
  v("sign", t.sign);
  v("weight", t.weight);
  v("margin", t.margin);
  v("kappa", t.kappa);
}
template <class V>
void visit(ResidualCost& t, V& v) {
  v("tracking", t.tracking);
  v("control", t.control);
  v("proximity", t.proximity);
  v("halfplanes", t.halfplanes);
}
template <class V>
void visit(PlayerCost& t, V& v) {
  v("stage", t.stage);
  v("terminal", t.terminal);
}
template <class V>
void visit(BasisGame& t, V& v) {
  v("response", t.response);
  v("human_cost", t.human_cost);
  v("robot_cost", t.robot_cost);
}
template <class V>
void visit(GameOptions& t, V& v) {
  v("horizon", t.horizon);
  v("tol", t.tol);
  v("max_iter", t.max_iter);
  v("backtrack", t.backtrack);
  v("max_backtracks", t.max_backtracks);
  v("max_deviation", t.max_deviation);
  v("descent_check", t.descent_check);
}
template <class V>
void visit(HumanBehaviorModel& t, V& v) {
  v("human", t.human);
  v("modes", t.modes);
  v("bases", t.bases);
  v("beta", t.beta);
  v("game", t.game);
  v("games", t.games);
}
template <class V>
void visit(BeliefState& t, V& v) {
  v("p", t.p);
  v("mean", t.mean);
  v("cov", t.cov);
}
template <class V>
void visit(HumanSpec& t, V& v) {
  v("agent", t.agent);
  v("behavior", t.behavior);
  v("prior", t.prior);
  v("mode_weights", t.mode_weights);
  v("theta_lo", t.theta_lo);
  v("theta_hi", t.theta_hi);
  v("switch_prob", t.switch_prob);
  v("switch_earliest", t.switch_earliest);
  v("switch_latest", t.switch_latest);
}
template <class V>
void visit(RobotCostModel& t, V& v) {
  v("stage", t.stage);
  v("terminal", t.terminal);
  v("belief_weight", t.belief_weight);
}
template <class V>
void visit(FailureSet& t, V& v) {
  v("ellipses", t.ellipses);
  v("halfplanes", t.halfplanes);
}
template <class V>
void visit(TimeUpdateModel& t, V& v) {
  v("theta_diffusion", t.theta_diffusion);
  v("mode_mixing", t.mode_mixing);
}
template <class V>
void visit(BeliefOptions& t, V& v) {
  v("transition", t.transition);
  v("obs_jitter", t.obs_jitter);
}
template <class V>
void visit(QpOptions& t, V& v) {
  v("tol", t.tol);
  v("stall_tol", t.stall_tol);
  v("max_iter", t.max_iter);
}
template <class V>
void visit(SolverOptions& t, V& v) {
  v("tol", t.tol);
  v("max_iter", t.max_iter);
  v("damping", t.damping);
  v("armijo", t.armijo);
  v("max_backtracks", t.max_backtracks);
  v("qp", t.qp);
}
template <class V>
void visit(SmpcOptions& t, V& v) {
  v("horizon", t.horizon);
  v("dual_horizon", t.dual_horizon);
  v("branching", t.branching);
  v("max_leaves", t.max_leaves);
  v("prune_threshold", t.prune_threshold);
  v("beliefs", t.beliefs);
  v("human_action", t.human_action);
  v("penalty_c", t.penalty_c);
  v("soft_linear", t.soft_linear);
  v("soft_quadratic", t.soft_quadratic);
  v("info_weight", t.info_weight);
  v("disturbance", t.disturbance);
  v("belief", t.belief);
  v("solver", t.solver);
  v("seed", t.seed);
}
template <class V>
void visit(PlannerConfig& t, V& v) {
  v("kind", t.kind);
  v("smpc", t.smpc);
  v("ce_warm_start", t.ce_warm_start);
  v("isa_game", t.isa_game);
}
template <class V>
void visit(ScenarioConfig& t, V& v) {
  v("version", t.version);
  v("name", t.name);
  v("robot", t.robot);
  v("humans", t.humans);
  v("cost", t.cost);
  v("failure", t.failure);
  v("x0", t.x0);
  v("x0_spread", t.x0_spread);
  v("t_sim", t.t_sim);
  v("human_noise", t.human_noise);
  v("disturbance", t.disturbance);
  v("planner", t.planner);
  v("seed", t.seed);
}

struct NullVisitor {
  template <class M>
  void operator()(const char*, M&) {}
};

template <class T>
concept Visitable = requires(T& t, NullVisitor& n) { visit(t, n); };

// --- enums -------------------------------------------------------------------

template <class E>
struct EnumNames;
template <>
struct EnumNames<AgentKind> {
  static constexpr std::array<const char*, 3> names{"bicycle", "unicycle", "linear"};
};
template <>
struct EnumNames<BeliefDynamics> {
  static constexpr std::array<const char*, 2> names{"dual", "nondual"};
};
template <>
struct EnumNames<HumanActionMode> {
  static constexpr std::array<const char*, 2> names{"penalty", "projection"};
};

template <class E>
concept NamedEnum = requires { EnumNames<E>::names; };

template <class T>
json write(const T& t);
template <class T>
json write(const std::vector<T>& v);

json write_enum(RobotResponse r) { return to_string(r); }
json write_enum(PlannerKind k) { return to_string(k); }
template <NamedEnum E>
json write_enum(E e) {
  return EnumNames<E>::names.at(static_cast<size_t>(e));
}

struct Writer {
  json& j;
  template <class M>
  void operator()(const char* key, M& m) {
    j[key] = write(m);
  }
};

template <class T>
json write(const T& t) {
  if constexpr (std::is_same_v<T, Vec>) {
    json a = json::array();
    for (Eigen::Index i = 0; i < t.size(); ++i) a.push_back(t[i]);
    return a;
  } else if constexpr (std::is_same_v<T, Mat>) {
    json a = json::array();
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < t.cols(); ++j) row.push_back(t(i, j));
      a.push_back(row);
    }
    return a;
  } else if constexpr (std::is_enum_v<T>) {
    return write_enum(t);
  } else if constexpr (Visitable<T>) {
    json o = json::object();
    Writer w{o};
    visit(const_cast<T&>(t), w);
    return o;
  } else {
    return json(t);
  }
}

template <class T>
json write(const std::vector<T>& v) {
  json a = json::array();
  for (const auto& e : v) a.push_back(write(e));
  return a;
}

// --- reading -------------------------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ContractViolation("scenario file: " + (path.empty() ? std::string("<root>") : path) +
                          ": " + what);
}

template <class T>
void read(const json& j, T& t, const std::string& path);
template <class T>
void read(const json& j, std::vector<T>& v, const std::string& path);

template <class E>
void read_enum(const json& j, E& e, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  const std::string s = j.get<std::string>();
  try {
    if constexpr (std::is_same_v<E, RobotResponse>) {
      e = robot_response_from_string(s);
    } else if constexpr (std::is_same_v<E, PlannerKind>) {
      e = planner_kind_from_string(s);
    } else {
      const auto& names = EnumNames<E>::names;
      for (size_t i = 0; i < names.size(); ++i)
        if (s == names[i]) {
          e = static_cast<E>(i);
          return;
        }
      fail(path, "unknown value '" + s + "'");
    }
  } catch (const ContractViolation& ex) {
    fail(path, ex.what());
  }
}

struct Reader {
  const json& j;
  std::string path;
  std::set<std::string> known;
  template <class M>
  void operator()(const char* key, M& m) {
    known.insert(key);
    if (j.contains(key)) read(j.at(key), m, path.empty() ? key : path + "." + key);
  }
};

template <class T>
void read(const json& j, std::vector<T>& v, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  v.clear();
  for (size_t i = 0; i < j.size(); ++i) {
    T e{};
    read(j[i], e, path + "[" + std::to_string(i) + "]");
    v.push_back(std::move(e));
  }
}

template <class T>
void read(const json& j, T& t, const std::string& path) {
  if constexpr (std::is_same_v<T, Vec>) {
    if (!j.is_array()) fail(path, "expected an array of numbers");
    t = Vec(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) fail(path, "expected an array of numbers");
      t[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
  } else if constexpr (std::is_same_v<T, Mat>) {
    if (!j.is_array()) fail(path, "expected an array of rows");
    const size_t cols = j.empty() ? 0 : j[0].size();
    t = Mat(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_array() || j[i].size() != cols) fail(path, "rows must have equal length");
      for (size_t c = 0; c < cols; ++c) {
        if (!j[i][c].is_number()) fail(path, "expected numbers");
        t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
      }
    }
  } else if constexpr (std::is_enum_v<T>) {
    read_enum(j, t, path);
  } else if constexpr (Visitable<T>) {
    if (!j.is_object()) fail(path, "expected an object");
    Reader r{j, path, {}};
    visit(t, r);
    for (const auto& [key, value] : j.items())
      if (!r.known.count(key)) fail(path, "unknown key '" + key + "'");
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) fail(path, "expected true or false");
    t = j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) fail(path, "expected a string");
    t = j.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    if (std::is_unsigned_v<T> && j.is_number_integer() && !j.is_number_unsigned())
      fail(path, "expected a non-negative integer");
    t = j.get<T>();
  } else {
    if (!j.is_number()) fail(path, "expected a number");
    t = j.get<T>();
  }
}

}  // namespace

std::string scenario_to_json(const ScenarioConfig& cfg) { return write(cfg).dump(2) + "\n"; }

ScenarioConfig scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ContractViolation(std::string("scenario file: ") + e.what());
  }
  ScenarioConfig c;
  read(j, c, "");
  if (c.version != kSchemaVersion)
    throw ContractViolation("scenario file: unsupported version " + std::to_string(c.version));
  c.validate();
  return c;
}

void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << scenario_to_json(cfg);
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

ScenarioConfig load_scenario(const std::string& name_or_path) {
  if (!std::filesystem::exists(name_or_path)) return scenario_by_name(name_or_path);
  std::ifstream f(name_or_path);
  if (!f) throw std::runtime_error("cannot open '" + name_or_path + "' for reading");
  std::ostringstream s;
  s << f.rdbuf();
  return scenario_from_json(s.str());
}

}  // namespace dualmpc
