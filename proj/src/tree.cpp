#include "dualmpc/tree.hpp"

#include <climits>
#include <cmath>
#include <json.hpp>

namespace dualmpc {

const char* to_string(StageKind k) {
  switch (k) {
    case StageKind::Root: return "root";
    case StageKind::Dual: return "dual";
    case StageKind::Exploitation: return "exploitation";
  }
  return "root";
}

void TreeConfig::validate() const {
  require(horizon >= 1, "tree: horizon must be at least one step");
  require(dual_horizon >= 1 && dual_horizon <= horizon, "tree: need 1 <= N^d <= N");
  require(branching >= 1, "tree: K must be at least one");
  require(num_modes >= 1, "tree: at least one mode is required");
  require(n_theta >= 0 && n_state >= 0, "tree: negative sample dimension");
  require(max_leaves >= 1, "tree: leaf cap must be positive");
}

long TreeConfig::leaf_count() const {
  const long w = static_cast<long>(branching) * num_modes;
  long n = 1;
  for (int i = 0; i < dual_horizon; ++i) {
    if (n > LONG_MAX / w) return LONG_MAX;
    n *= w;
  }
  return n;
}

long TreeConfig::node_count() const {
  const long w = static_cast<long>(branching) * num_modes;
  long n = 1, level = 1;
  for (int i = 0; i < dual_horizon; ++i) {
    level *= w;
    n += level;
  }
  return n + level * exploitation_horizon();
}

double ScenarioTree::leaf_mass() const {
  double s = 0.0;
  for (int l : leaves) s += nodes[l].p;
  return s;
}

std::vector<int> branch(ScenarioTree& tree, int node, int modes, int k, Rng& rng) {
  std::vector<int> out;
  for (int m = 0; m < modes; ++m) {
    for (int j = 0; j < k; ++j) {
      Node c;
      c.id = tree.size();
      c.parent = node;
      c.t = tree.nodes[node].t + 1;
      c.mode = m;
      c.kind = StageKind::Dual;
      c.theta_o = rng.normal_vec(tree.cfg.n_theta);
      c.dbar_o = rng.normal_vec(tree.cfg.n_state);
      c.p_bar = 1.0 / (static_cast<double>(k) * modes);
      c.p = c.p_bar * tree.nodes[node].p;
      tree.nodes[node].children.push_back(c.id);
      tree.dual_nodes.push_back(c.id);
      tree.nodes.push_back(std::move(c));
      out.push_back(tree.size() - 1);
    }
  }
  return out;
}

int extend(ScenarioTree& tree, int node) {
  Node c;
  c.id = tree.size();
  c.parent = node;
  c.t = tree.nodes[node].t + 1;
  c.mode = tree.nodes[node].mode;
  c.kind = StageKind::Exploitation;
  c.theta_o = Vec::Zero(tree.cfg.n_theta);
  c.dbar_o = Vec::Zero(tree.cfg.n_state);
  c.p_bar = 1.0;
  c.p = tree.nodes[node].p;
  tree.nodes[node].children.push_back(c.id);
  tree.exploitation_nodes.push_back(c.id);
  tree.nodes.push_back(std::move(c));
  return tree.size() - 1;
}

ScenarioTree build_tree(const TreeConfig& cfg, Rng& rng) {
  cfg.validate();
  const long leaves = cfg.leaf_count();
  if (leaves > cfg.max_leaves)
    throw ContractViolation("tree: " + std::to_string(leaves) + " leaves exceed the cap of " +
                            std::to_string(cfg.max_leaves));
  ScenarioTree tree;
  tree.cfg = cfg;
  Node root;
  root.theta_o = Vec::Zero(cfg.n_theta);
  root.dbar_o = Vec::Zero(cfg.n_state);
  tree.nodes.push_back(root);
  std::vector<int> frontier{0};
  for (int t = 0; t < cfg.horizon; ++t) {
    std::vector<int> next;
    for (int n : frontier) {
      if (t < cfg.dual_horizon) {
        for (int c : branch(tree, n, cfg.num_modes, cfg.branching, rng)) next.push_back(c);
      } else {
        next.push_back(extend(tree, n));
      }
    }
    frontier = std::move(next);
  }
  tree.leaves = frontier;
  return tree;
}

void path_probabilities(ScenarioTree& tree, const std::function<double(const Node&)>& mode_prob) {
  tree.renormalized = false;
  for (Node& n : tree.nodes) {
    if (n.leaf()) continue;
    if (n.children.size() == 1 && tree.nodes[n.children[0]].kind == StageKind::Exploitation) {
      Node& c = tree.nodes[n.children[0]];
      c.p_bar = 1.0;
      continue;
    }
    double s = 0.0;
    for (int ci : n.children) {
      Node& c = tree.nodes[ci];
      const double pm = mode_prob(c);
      require(pm >= 0.0 && std::isfinite(pm), "path_probabilities: negative mode probability");
      c.p_bar = branch_probability<double>(tree, c, pm);
      s += c.p_bar;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      require(s > 0.0, "path_probabilities: sibling probabilities vanish");
      for (int ci : n.children) tree.nodes[ci].p_bar /= s;
      tree.renormalized = true;
    }
  }
  for (Node& n : tree.nodes)
    n.p = n.parent < 0 ? 1.0 : n.p_bar * tree.nodes[n.parent].p;
}

int prune(ScenarioTree& tree, double threshold) {
  if (threshold <= 0.0) return 0;
  std::vector<bool> keep(tree.size(), false);
  keep[0] = true;
  // Parents precede children, so one pass decides every subtree. A kept node
  // always keeps at least its most probable child.
  for (const Node& n : tree.nodes) {
    if (!keep[n.id] || n.leaf()) continue;
    int best = n.children[0];
    bool any = false;
    for (int c : n.children) {
      if (tree.nodes[c].p > tree.nodes[best].p) best = c;
      if (tree.nodes[c].p >= threshold) keep[c] = any = true;
    }
    if (!any) keep[best] = true;
  }

  std::vector<int> remap(tree.size(), -1);
  ScenarioTree out;
  out.cfg = tree.cfg;
  for (const Node& n : tree.nodes) {
    if (!keep[n.id]) continue;
    Node c = n;
    c.id = out.size();
    c.parent = n.parent < 0 ? -1 : remap[n.parent];
    c.children.clear();
    remap[n.id] = c.id;
    if (c.parent >= 0) out.nodes[c.parent].children.push_back(c.id);
    if (c.kind == StageKind::Dual) out.dual_nodes.push_back(c.id);
    if (c.kind == StageKind::Exploitation) out.exploitation_nodes.push_back(c.id);
    out.nodes.push_back(std::move(c));
  }
  for (Node& n : out.nodes) {
    if (n.leaf()) out.leaves.push_back(n.id);
    double s = 0.0;
    for (int c : n.children) s += out.nodes[c].p_bar;
    for (int c : n.children) out.nodes[c].p_bar /= s;
  }
  for (Node& n : out.nodes) n.p = n.parent < 0 ? 1.0 : n.p_bar * out.nodes[n.parent].p;
  const int removed = tree.size() - out.size();
  tree = std::move(out);
  return removed;
}

std::string export_tree(const ScenarioTree& tree) {
  nlohmann::json j;
  j["horizon"] = tree.cfg.horizon;
  j["dual_horizon"] = tree.cfg.dual_horizon;
  j["branching"] = tree.cfg.branching;
  j["num_modes"] = tree.cfg.num_modes;
  j["leaves"] = tree.leaves;
  nlohmann::json nodes = nlohmann::json::array();
  for (const Node& n : tree.nodes) {
    nlohmann::json e;
    e["id"] = n.id;
    e["parent"] = n.parent;
    e["t"] = n.t;
    e["mode"] = n.mode;
    e["kind"] = to_string(n.kind);
    e["p_bar"] = n.p_bar;
    e["p"] = n.p;
    e["theta_o"] = std::vector<double>(n.theta_o.data(), n.theta_o.data() + n.theta_o.size());
    e["children"] = n.children;
    nodes.push_back(e);
  }
  j["nodes"] = nodes;
  return j.dump(1);
}

}  // namespace dualmpc
