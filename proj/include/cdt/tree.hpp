#pragma once

// Perfect binary soft decision trees.
//
// Nodes are numbered breadth-first from 1: internal node u has children 2u and
// 2u+1, internal nodes occupy [1, 2^d) and leaf k is node 2^d + k. Layer i
// (counted from 1) holds nodes 2^(i-1) + j for in-layer index j.
//
// Each internal node routes left with probability sigmoid(bias + w . x). A
// discretized node keeps only a univariate threshold test and routes with
// probability exactly 0 or 1.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdt/autodiff.hpp"
#include "cdt/errors.hpp"
#include "cdt/random.hpp"

namespace cdt {

struct HardSplit {
  std::size_t feature = 0;
  double threshold = 0.0;
  // true: go left iff x[feature] > threshold; false: go left iff x[feature] < threshold.
  bool left_if_greater = true;

  bool goes_left(double v) const { return left_if_greater ? v > threshold : v < threshold; }

  bool operator==(const HardSplit&) const = default;
};

template <class T>
struct SplitNode {
  std::vector<T> weights;
  T bias{};
  std::optional<HardSplit> hard;

  bool is_hard() const { return hard.has_value(); }
};

/// F-tree leaf: f = transform . x, a rows x cols row-major matrix.
template <class T>
struct FeatureLeaf {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> transform;

  std::span<const T> row(std::size_t k) const {
    return std::span<const T>(transform).subspan(k * cols, cols);
  }
  std::size_t param_count() const { return transform.size(); }
};

/// Classification leaf holding unnormalized log-probabilities.
template <class T>
struct DistributionLeaf {
  std::vector<T> logits;

  std::size_t param_count() const { return logits.size(); }
};

template <class T, template <class> class Leaf>
struct SoftTree {
  int depth = 1;
  std::size_t input_dim = 0;
  std::vector<SplitNode<T>> nodes;  // node u lives at nodes[u - 1]
  std::vector<Leaf<T>> leaves;

  std::size_t internal_count() const { return nodes.size(); }
  std::size_t leaf_count() const { return leaves.size(); }
  std::size_t first_leaf() const { return std::size_t{1} << depth; }

  const SplitNode<T>& node(std::size_t u) const { return nodes.at(u - 1); }
  SplitNode<T>& node(std::size_t u) { return nodes.at(u - 1); }
};

inline std::size_t layer_of(std::size_t u) {
  std::size_t layer = 0;
  while (u) {
    ++layer;
    u >>= 1;
  }
  return layer;
}

/// Root-to-node path as node ids, root first.
inline std::vector<std::size_t> ancestors_path(std::size_t u) {
  std::vector<std::size_t> path;
  for (; u >= 1; u >>= 1) path.insert(path.begin(), u);
  return path;
}

// ---- construction ------------------------------------------------------------

template <template <class> class Leaf, class LeafFactory>
SoftTree<double, Leaf> make_tree(int depth, std::size_t input_dim, Rng& rng, double init_range,
                                 LeafFactory&& leaf) {
  if (depth < 1) throw std::invalid_argument("tree depth must be at least 1");
  if (input_dim == 0) throw std::invalid_argument("tree input dimension must be at least 1");
  SoftTree<double, Leaf> tree;
  tree.depth = depth;
  tree.input_dim = input_dim;
  const std::size_t internal = (std::size_t{1} << depth) - 1;
  tree.nodes.resize(internal);
  for (auto& n : tree.nodes) {
    n.weights.resize(input_dim);
    for (double& w : n.weights) w = uniform(rng, -init_range, init_range);
    n.bias = uniform(rng, -init_range, init_range);
  }
  tree.leaves.reserve(internal + 1);
  for (std::size_t k = 0; k <= internal; ++k) tree.leaves.push_back(leaf(rng));
  return tree;
}

inline FeatureLeaf<double> random_feature_leaf(std::size_t rows, std::size_t cols, Rng& rng,
                                               double range) {
  FeatureLeaf<double> leaf{rows, cols, std::vector<double>(rows * cols)};
  for (double& v : leaf.transform) v = uniform(rng, -range, range);
  return leaf;
}

inline DistributionLeaf<double> random_distribution_leaf(std::size_t outputs, Rng& rng,
                                                         double range) {
  DistributionLeaf<double> leaf{std::vector<double>(outputs)};
  for (double& v : leaf.logits) v = uniform(rng, -range, range);
  return leaf;
}

// ---- scalar rebinding and parameter traversal --------------------------------

template <class U, class T, class F>
SplitNode<U> rebind(const SplitNode<T>& n, F&& f) {
  SplitNode<U> out;
  out.weights.reserve(n.weights.size());
  for (const T& w : n.weights) out.weights.push_back(f(w));
  out.bias = f(n.bias);
  out.hard = n.hard;
  return out;
}

template <class U, class T, class F>
FeatureLeaf<U> rebind(const FeatureLeaf<T>& l, F&& f) {
  FeatureLeaf<U> out{l.rows, l.cols, {}};
  out.transform.reserve(l.transform.size());
  for (const T& v : l.transform) out.transform.push_back(f(v));
  return out;
}

template <class U, class T, class F>
DistributionLeaf<U> rebind(const DistributionLeaf<T>& l, F&& f) {
  DistributionLeaf<U> out;
  out.logits.reserve(l.logits.size());
  for (const T& v : l.logits) out.logits.push_back(f(v));
  return out;
}

template <class U, class T, template <class> class Leaf, class F>
SoftTree<U, Leaf> rebind(const SoftTree<T, Leaf>& tree, F&& f) {
  SoftTree<U, Leaf> out;
  out.depth = tree.depth;
  out.input_dim = tree.input_dim;
  out.nodes.reserve(tree.nodes.size());
  for (const auto& n : tree.nodes) out.nodes.push_back(rebind<U>(n, f));
  out.leaves.reserve(tree.leaves.size());
  for (const auto& l : tree.leaves) out.leaves.push_back(rebind<U>(l, f));
  return out;
}

/// Visits trainable parameters in a fixed order: soft nodes (weights, then
/// bias) breadth-first, then leaf payloads. Hard nodes have none.
template <class Tree, class F>
void for_each_param(Tree& tree, F&& f) {
  for (auto& n : tree.nodes) {
    if (n.is_hard()) continue;
    for (auto& w : n.weights) f(w);
    f(n.bias);
  }
  for (auto& l : tree.leaves) {
    if constexpr (requires { l.transform; }) {
      for (auto& v : l.transform) f(v);
    } else {
      for (auto& v : l.logits) f(v);
    }
  }
}

/// Trainable parameters, counting a discretized node as two (feature index and
/// threshold).
template <class T, template <class> class Leaf>
std::size_t param_count(const SoftTree<T, Leaf>& tree) {
  std::size_t n = 0;
  for (const auto& node : tree.nodes) n += node.is_hard() ? 2 : node.weights.size() + 1;
  for (const auto& leaf : tree.leaves) n += leaf.param_count();
  return n;
}

// ---- soft routing -----------------------------------------------------------

template <class T>
struct Routing {
  std::vector<T> left;  // left[u - 1]: probability of going left at internal node u
  std::vector<T> path;  // path[u]: probability of reaching node u; path[0] unused
  std::size_t first_leaf = 2;

  std::span<const T> leaves() const {
    return std::span<const T>(path).subspan(first_leaf, first_leaf);
  }
};

template <class T>
T node_left_probability(const SplitNode<T>& n, std::span<const T> x) {
  if (n.hard) return T(n.hard->goes_left(value_of(x[n.hard->feature])) ? 1.0 : 0.0);
  return sigmoid(affine(n.bias, std::span<const T>(n.weights), x));
}

template <class T>
T node_left_probability(const SplitNode<T>& n, std::span<const double> x)
  requires(!std::is_same_v<T, double>)
{
  if (n.hard) return T(n.hard->goes_left(x[n.hard->feature]) ? 1.0 : 0.0);
  return sigmoid(affine(n.bias, std::span<const T>(n.weights), x));
}

/// Path probabilities of every node for input x. X is double for raw inputs or
/// the tree's own scalar type when routing on learned features.
template <class T, template <class> class Leaf, class X>
Routing<T> soft_forward(const SoftTree<T, Leaf>& tree, std::span<const X> x) {
  if (x.size() != tree.input_dim) {
    throw std::invalid_argument("soft_forward: input has dimension " + std::to_string(x.size()) +
                                ", tree expects " + std::to_string(tree.input_dim));
  }
  Routing<T> r;
  r.first_leaf = tree.first_leaf();
  r.left.reserve(tree.nodes.size());
  r.path.resize(2 * r.first_leaf);
  r.path[1] = T(1.0);
  for (std::size_t u = 1; u < r.first_leaf; ++u) {
    const T p = node_left_probability(tree.nodes[u - 1], x);
    r.left.push_back(p);
    if (u == 1) {
      r.path[2] = p;
      r.path[3] = T(1.0) - p;
    } else {
      r.path[2 * u] = r.path[u] * p;
      r.path[2 * u + 1] = r.path[u] * (T(1.0) - p);
    }
  }
  return r;
}

/// Index of the most probable leaf; ties go to the lower index.
inline std::size_t argmax_leaf(std::span<const double> leaf_probs) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < leaf_probs.size(); ++k) {
    if (leaf_probs[k] > leaf_probs[best]) best = k;
  }
  return best;
}

// ---- discretization ------------------------------------------------------------

/// Keeps the dominant weight dimension k* = argmax |w_k| with threshold
/// -bias / w_k*, oriented so that the hard rule agrees with sigmoid > 0.5
/// along that dimension.
inline HardSplit discretize_node(const SplitNode<double>& n, const std::string& name) {
  if (n.hard) return *n.hard;
  std::size_t best = 0;
  for (std::size_t k = 1; k < n.weights.size(); ++k) {
    if (std::abs(n.weights[k]) > std::abs(n.weights[best])) best = k;
  }
  if (n.weights.empty() || n.weights[best] == 0.0) {
    throw DegenerateNodeError("cannot discretize " + name + ": all weights are zero");
  }
  return HardSplit{best, -n.bias / n.weights[best], n.weights[best] > 0.0};
}

template <template <class> class Leaf>
SoftTree<double, Leaf> discretize_tree(const SoftTree<double, Leaf>& tree, const std::string& tree_name) {
  SoftTree<double, Leaf> out = tree;
  for (std::size_t u = 1; u <= out.nodes.size(); ++u) {
    auto& n = out.nodes[u - 1];
    if (n.hard) continue;
    n.hard = discretize_node(n, "node " + std::to_string(u) + " of tree " + tree_name);
    n.weights.clear();
    n.bias = 0.0;
  }
  return out;
}

/// Routing weights (w, b) of a node; a hard node is encoded as s * e_k with
/// bias -s * t, where s = +1 when it goes left on x > t and -1 otherwise, so
/// sigmoid(b + w . x) > 0.5 exactly when the hard rule goes left.
inline std::pair<std::vector<double>, double> node_weights(const SplitNode<double>& n,
                                                           std::size_t dim) {
  if (!n.hard) return {n.weights, n.bias};
  const double s = n.hard->left_if_greater ? 1.0 : -1.0;
  std::vector<double> w(dim, 0.0);
  w.at(n.hard->feature) = s;
  return {w, -s * n.hard->threshold};
}

}  // namespace cdt
