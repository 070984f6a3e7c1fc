#pragma once

// Soft decision tree (SDT) and cascading decision tree (CDT) classifiers.
//
// An SDT routes the raw input through one soft tree whose leaves hold class
// logits. A CDT first routes the raw input x through a feature tree F whose
// leaves are linear maps f = T x, then routes each candidate f through a
// decision tree D whose leaves hold class logits:
//
//   pi(x) = sum_u1 P_F(u1 | x) * sum_u2 P_D(u2 | T_u1 x) * softmax(logits_u2)
//
// Training and action sampling use this mixture. Greedy inference follows the
// single most probable leaf of each tree instead.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdt/autodiff.hpp"
#include "cdt/random.hpp"
#include "cdt/tree.hpp"

namespace cdt {

inline constexpr double kInitRange = 0.1;

template <class T>
struct Sdt {
  SoftTree<T, DistributionLeaf> tree;
  std::size_t outputs = 0;

  std::size_t inputs() const { return tree.input_dim; }
};

template <class T>
struct Cdt {
  SoftTree<T, FeatureLeaf> features;   // F: routes on x, leaves emit f = T x
  SoftTree<T, DistributionLeaf> decisions;  // D: routes on f
  std::size_t inputs = 0;    // R
  std::size_t features_dim = 0;  // K
  std::size_t outputs = 0;   // O
};

enum class DiscretizeMode { none, sdt, cdt_f_only, cdt_d_only, cdt_f_and_d };

inline std::string to_string(DiscretizeMode m) {
  switch (m) {
    case DiscretizeMode::none: return "soft";
    case DiscretizeMode::sdt: return "discretized";
    case DiscretizeMode::cdt_f_only: return "F";
    case DiscretizeMode::cdt_d_only: return "D";
    case DiscretizeMode::cdt_f_and_d: return "F+D";
  }
  return "soft";
}

inline DiscretizeMode parse_discretize_mode(const std::string& s) {
  if (s == "soft" || s == "none") return DiscretizeMode::none;
  if (s == "sdt" || s == "discretized") return DiscretizeMode::sdt;
  if (s == "F" || s == "cdt-F-only" || s == "f") return DiscretizeMode::cdt_f_only;
  if (s == "D" || s == "cdt-D-only" || s == "d") return DiscretizeMode::cdt_d_only;
  if (s == "F+D" || s == "cdt-F-and-D" || s == "fd") return DiscretizeMode::cdt_f_and_d;
  throw std::invalid_argument("unknown discretization mode '" + s + "'");
}

// ---- construction --------------------------------------------------------------

inline Sdt<double> make_sdt(std::size_t inputs, std::size_t outputs, int depth, Rng& rng) {
  if (inputs == 0) throw std::invalid_argument("SDT needs at least one input dimension");
  if (outputs < 2) throw std::invalid_argument("SDT needs at least two output classes");
  Sdt<double> m;
  m.outputs = outputs;
  m.tree = make_tree<DistributionLeaf>(depth, inputs, rng, kInitRange, [&](Rng& r) {
    return random_distribution_leaf(outputs, r, kInitRange);
  });
  return m;
}

inline Cdt<double> make_cdt(std::size_t inputs, std::size_t features_dim, std::size_t outputs,
                            int feature_depth, int decision_depth, Rng& rng) {
  if (inputs == 0) throw std::invalid_argument("CDT needs at least one input dimension");
  if (features_dim == 0) throw std::invalid_argument("CDT needs at least one intermediate feature");
  if (outputs < 2) throw std::invalid_argument("CDT needs at least two output classes");
  Cdt<double> m;
  m.inputs = inputs;
  m.features_dim = features_dim;
  m.outputs = outputs;
  m.features = make_tree<FeatureLeaf>(feature_depth, inputs, rng, kInitRange, [&](Rng& r) {
    return random_feature_leaf(features_dim, inputs, r, kInitRange);
  });
  m.decisions = make_tree<DistributionLeaf>(decision_depth, features_dim, rng, kInitRange, [&](Rng& r) {
    return random_distribution_leaf(outputs, r, kInitRange);
  });
  return m;
}

template <class U, class T, class F>
Sdt<U> rebind(const Sdt<T>& m, F&& f) {
  return Sdt<U>{rebind<U>(m.tree, f), m.outputs};
}

template <class U, class T, class F>
Cdt<U> rebind(const Cdt<T>& m, F&& f) {
  return Cdt<U>{rebind<U>(m.features, f), rebind<U>(m.decisions, f), m.inputs, m.features_dim,
                m.outputs};
}

template <class T, class F>
void for_each_param(Sdt<T>& m, F&& f) {
  for_each_param(m.tree, f);
}
template <class T, class F>
void for_each_param(const Sdt<T>& m, F&& f) {
  for_each_param(m.tree, f);
}
template <class T, class F>
void for_each_param(Cdt<T>& m, F&& f) {
  for_each_param(m.features, f);
  for_each_param(m.decisions, f);
}
template <class T, class F>
void for_each_param(const Cdt<T>& m, F&& f) {
  for_each_param(m.features, f);
  for_each_param(m.decisions, f);
}

template <class T>
std::size_t param_count(const Sdt<T>& m) {
  return param_count(m.tree);
}
template <class T>
std::size_t param_count(const Cdt<T>& m) {
  return param_count(m.features) + param_count(m.decisions);
}

// ---- soft prediction -------------------------------------------------------------

template <class T>
using LeafDistributions = std::vector<std::vector<T>>;

/// softmax of every leaf's logits. Input independent, so callers that
/// evaluate many inputs compute it once.
template <class T>
LeafDistributions<T> leaf_distributions(const SoftTree<T, DistributionLeaf>& tree) {
  LeafDistributions<T> out;
  out.reserve(tree.leaves.size());
  for (const auto& l : tree.leaves) out.push_back(softmax(std::span<const T>(l.logits)));
  return out;
}

/// sum_u P_u * q_u[cls]
template <class T>
T mixture_component(std::span<const T> leaf_probs, const LeafDistributions<T>& dists, std::size_t cls) {
  std::vector<T> column;
  column.reserve(dists.size());
  for (const auto& q : dists) column.push_back(q[cls]);
  return dot(leaf_probs, std::span<const T>(column));
}

template <class T>
std::vector<T> mixture(std::span<const T> leaf_probs, const LeafDistributions<T>& dists) {
  std::vector<T> out;
  const std::size_t classes = dists.front().size();
  out.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) out.push_back(mixture_component(leaf_probs, dists, c));
  return out;
}

template <class T>
std::vector<T> predict_soft(const Sdt<T>& m, std::span<const double> x, const LeafDistributions<T>& dists) {
  const Routing<T> r = soft_forward(m.tree, x);
  return mixture(r.leaves(), dists);
}

template <class T>
std::vector<T> predict_soft(const Sdt<T>& m, std::span<const double> x) {
  return predict_soft(m, x, leaf_distributions(m.tree));
}

/// f = T_leaf . x
template <class T>
std::vector<T> leaf_features(const FeatureLeaf<T>& leaf, std::span<const double> x) {
  std::vector<T> f;
  f.reserve(leaf.rows);
  for (std::size_t k = 0; k < leaf.rows; ++k) f.push_back(affine(T(0.0), leaf.row(k), x));
  return f;
}

template <class T>
std::vector<T> predict_soft(const Cdt<T>& m, std::span<const double> x, const LeafDistributions<T>& dists) {
  if (x.size() != m.inputs) {
    throw std::invalid_argument("predict_soft: input has dimension " + std::to_string(x.size()) +
                                ", model expects " + std::to_string(m.inputs));
  }
  const Routing<T> outer = soft_forward(m.features, x);
  const auto p_outer = outer.leaves();
  // Per class: sum over F leaves of P_F(u1) * [sum over D leaves].
  std::vector<std::vector<T>> inner_by_class(m.outputs);
  for (std::size_t u1 = 0; u1 < m.features.leaves.size(); ++u1) {
    const std::vector<T> f = leaf_features(m.features.leaves[u1], x);
    const Routing<T> inner = soft_forward(m.decisions, std::span<const T>(f));
    const std::vector<T> mix = mixture(inner.leaves(), dists);
    for (std::size_t c = 0; c < m.outputs; ++c) inner_by_class[c].push_back(mix[c]);
  }
  std::vector<T> out;
  out.reserve(m.outputs);
  for (std::size_t c = 0; c < m.outputs; ++c) {
    out.push_back(dot(p_outer, std::span<const T>(inner_by_class[c])));
  }
  return out;
}

template <class T>
std::vector<T> predict_soft(const Cdt<T>& m, std::span<const double> x) {
  return predict_soft(m, x, leaf_distributions(m.decisions));
}

/// Single entry pi(x)[cls] of the mixture; cheaper than predict_soft when
/// only the target class is needed.
template <class T>
T predict_class(const Sdt<T>& m, std::span<const double> x, const LeafDistributions<T>& dists, std::size_t cls) {
  const Routing<T> r = soft_forward(m.tree, x);
  return mixture_component(r.leaves(), dists, cls);
}

template <class T>
T predict_class(const Cdt<T>& m, std::span<const double> x, const LeafDistributions<T>& dists, std::size_t cls) {
  if (x.size() != m.inputs) {
    throw std::invalid_argument("predict_class: input has dimension " + std::to_string(x.size()) +
                                ", model expects " + std::to_string(m.inputs));
  }
  const Routing<T> outer = soft_forward(m.features, x);
  std::vector<T> inner;
  inner.reserve(m.features.leaves.size());
  for (std::size_t u1 = 0; u1 < m.features.leaves.size(); ++u1) {
    const std::vector<T> f = leaf_features(m.features.leaves[u1], x);
    const Routing<T> r = soft_forward(m.decisions, std::span<const T>(f));
    inner.push_back(mixture_component(r.leaves(), dists, cls));
  }
  return dot(outer.leaves(), std::span<const T>(inner));
}

template <class T>
const SoftTree<T, DistributionLeaf>& output_tree(const Sdt<T>& m) {
  return m.tree;
}
template <class T>
const SoftTree<T, DistributionLeaf>& output_tree(const Cdt<T>& m) {
  return m.decisions;
}

// ---- greedy inference ------------------------------------------------------------

enum class TreeRole { sdt, features, decisions };

struct PathStep {
  TreeRole tree = TreeRole::sdt;
  std::size_t node = 1;  // breadth-first id; leaves are >= 2^depth
  double branch_probability = 1.0;  // probability of the edge entering this node

  bool operator==(const PathStep&) const = default;
};

struct GreedyResult {
  std::vector<double> distribution;
  std::vector<PathStep> path;
  std::size_t feature_leaf = 0;   // CDT only
  std::size_t decision_leaf = 0;  // the output leaf (SDT or D)
  std::vector<double> features;   // CDT only: f at the chosen F leaf
};

template <template <class> class Leaf>
std::vector<PathStep> greedy_path(const SoftTree<double, Leaf>& tree, const Routing<double>& r,
                                  std::size_t leaf, TreeRole role) {
  std::vector<PathStep> steps;
  for (std::size_t u : ancestors_path(tree.first_leaf() + leaf)) {
    double p = 1.0;
    if (u > 1) {
      const double left = r.left[u / 2 - 1];
      p = (u % 2 == 0) ? left : 1.0 - left;
    }
    steps.push_back(PathStep{role, u, p});
  }
  return steps;
}

inline GreedyResult greedy_infer(const Sdt<double>& m, std::span<const double> x) {
  const Routing<double> r = soft_forward(m.tree, x);
  GreedyResult g;
  g.decision_leaf = argmax_leaf(r.leaves());
  g.distribution = softmax(std::span<const double>(m.tree.leaves[g.decision_leaf].logits));
  g.path = greedy_path(m.tree, r, g.decision_leaf, TreeRole::sdt);
  return g;
}

inline GreedyResult greedy_infer(const Cdt<double>& m, std::span<const double> x) {
  const Routing<double> outer = soft_forward(m.features, x);
  GreedyResult g;
  g.feature_leaf = argmax_leaf(outer.leaves());
  g.features = leaf_features(m.features.leaves[g.feature_leaf], x);
  const Routing<double> inner = soft_forward(m.decisions, std::span<const double>(g.features));
  g.decision_leaf = argmax_leaf(inner.leaves());
  g.distribution = softmax(std::span<const double>(m.decisions.leaves[g.decision_leaf].logits));
  g.path = greedy_path(m.features, outer, g.feature_leaf, TreeRole::features);
  const auto d_path = greedy_path(m.decisions, inner, g.decision_leaf, TreeRole::decisions);
  g.path.insert(g.path.end(), d_path.begin(), d_path.end());
  return g;
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

// ---- discretization -------------------------------------------------------------

inline Sdt<double> discretize(const Sdt<double>& m, DiscretizeMode mode = DiscretizeMode::sdt) {
  if (mode == DiscretizeMode::none) return m;
  if (mode != DiscretizeMode::sdt) {
    throw std::invalid_argument("SDT models only support the 'sdt' discretization mode");
  }
  return Sdt<double>{discretize_tree(m.tree, "SDT"), m.outputs};
}

inline Cdt<double> discretize(const Cdt<double>& m, DiscretizeMode mode) {
  Cdt<double> out = m;
  switch (mode) {
    case DiscretizeMode::none:
      break;
    case DiscretizeMode::cdt_f_only:
      out.features = discretize_tree(m.features, "F");
      break;
    case DiscretizeMode::cdt_d_only:
      out.decisions = discretize_tree(m.decisions, "D");
      break;
    case DiscretizeMode::cdt_f_and_d:
      out.features = discretize_tree(m.features, "F");
      out.decisions = discretize_tree(m.decisions, "D");
      break;
    case DiscretizeMode::sdt:
      throw std::invalid_argument("CDT models need an F, D or F+D discretization mode");
  }
  return out;
}

// ---- back-projection -------------------------------------------------------------

/// Routing weights of every D node expressed in raw input space through F leaf
/// u1: row = (w' . T_u1, b'), so w' . (T_u1 x) = (w' T_u1) . x. Rows are in
/// breadth-first order of D; the bias is the last column.
inline std::vector<std::vector<double>> effective_weights(const Cdt<double>& m, std::size_t u1) {
  if (u1 >= m.features.leaves.size()) {
    throw std::out_of_range("effective_weights: F leaf index " + std::to_string(u1) +
                            " out of range");
  }
  const FeatureLeaf<double>& leaf = m.features.leaves[u1];
  std::vector<std::vector<double>> rows;
  rows.reserve(m.decisions.nodes.size());
  for (const auto& n : m.decisions.nodes) {
    const auto [w, b] = node_weights(n, m.features_dim);
    std::vector<double> row(m.inputs + 1, 0.0);
    for (std::size_t k = 0; k < m.features_dim; ++k) {
      for (std::size_t r = 0; r < m.inputs; ++r) row[r] += w[k] * leaf.transform[k * leaf.cols + r];
    }
    row[m.inputs] = b;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace cdt
