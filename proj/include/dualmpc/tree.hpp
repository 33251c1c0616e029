#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dualmpc/linalg.hpp"
#include "dualmpc/rng.hpp"

namespace dualmpc {

enum class StageKind { Root, Dual, Exploitation };
const char* to_string(StageKind k);

struct TreeConfig {
  int horizon = 6;       // N
  int dual_horizon = 2;  // N^d, branching stops after this many steps
  int branching = 1;     // K samples per mode
  int num_modes = 2;     // |M| (joint over humans when several are tracked)
  int n_theta = 2;       // length of the offline θ sample
  int n_state = 1;       // length of the offline disturbance sample
  long max_leaves = 4096;

  int exploitation_horizon() const { return horizon - dual_horizon; }
  void validate() const;
  /// (K·|M|)^{N^d}; saturates at LONG_MAX.
  long leaf_count() const;
  long node_count() const;
};

struct Node {
  int id = 0;
  int parent = -1;
  int t = 0;
  int mode = -1;  // -1 at the root
  StageKind kind = StageKind::Root;
  Vec theta_o;    // standard-normal offline samples
  Vec dbar_o;
  double p_bar = 1.0;
  double p = 1.0;
  std::vector<int> children;

  bool leaf() const { return children.empty(); }
};

struct ScenarioTree {
  TreeConfig cfg;
  std::vector<Node> nodes;  // parents precede children
  std::vector<int> leaves;
  std::vector<int> dual_nodes;
  std::vector<int> exploitation_nodes;
  bool renormalized = false;  // path_probabilities had to fix a drift

  const Node& root() const { return nodes.front(); }
  int size() const { return static_cast<int>(nodes.size()); }
  int non_leaf_count() const { return size() - static_cast<int>(leaves.size()); }
  double leaf_mass() const;
};

/// Branches at times 0 … N^d−1 and extends at N^d … N−1, drawing every
/// offline sample once from `rng`.
ScenarioTree build_tree(const TreeConfig& cfg, Rng& rng);

/// K children per mode with fresh standard-normal samples.
std::vector<int> branch(ScenarioTree& tree, int node, int modes, int k, Rng& rng);
/// One child with zero samples and the parent's mode.
int extend(ScenarioTree& tree, int node);

/// θ = μ + chol(Σ^θ) θ°, d̄ = chol(Σ^d̄) d̄° with PSD Cholesky factors.
template <class T>
void transform_samples(const Node& node, const VecT<T>& mean, const MatT<T>& cov,
                       const MatT<T>& dbar_cov, VecT<T>& theta, VecT<T>& dbar) {
  theta = mean + psd_cholesky<T>(cov) * node.theta_o.template cast<T>();
  dbar = psd_cholesky<T>(dbar_cov) * node.dbar_o.template cast<T>();
}

/// Same transform with the factors supplied by the caller.
template <class T>
void transform_with_factors(const Node& node, const VecT<T>& mean, const MatT<T>& chol_theta,
                            const MatT<T>& chol_dbar, VecT<T>& theta, VecT<T>& dbar) {
  theta = mean + chol_theta * node.theta_o.template cast<T>();
  dbar = chol_dbar * node.dbar_o.template cast<T>();
}

/// P̄ of a branched child: (1/K) · p(M_child | parent belief).
template <class T>
T branch_probability(const ScenarioTree& tree, const Node& child, const T& mode_prob) {
  (void)child;
  return mode_prob / T(static_cast<double>(tree.cfg.branching));
}

/// Recomputes P̄ and P from the mode probabilities seen at each branched
/// child's parent. Sibling groups whose P̄ drifts from one by more than 1e-9
/// are renormalized and the tree is flagged.
void path_probabilities(ScenarioTree& tree, const std::function<double(const Node&)>& mode_prob);

/// Removes subtrees below `threshold` path probability and renormalizes
/// the surviving siblings. Returns the number of nodes removed.
int prune(ScenarioTree& tree, double threshold);

/// Node list as a JSON document.
std::string export_tree(const ScenarioTree& tree);

}  // namespace dualmpc
