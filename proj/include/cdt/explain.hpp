#pragma once

// Feature importance along decision paths and cross-run weight stability.

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdt/autodiff.hpp"
#include "cdt/imitation.hpp"
#include "cdt/models.hpp"
#include "cdt/parameters.hpp"
#include "cdt/policy.hpp"

namespace cdt {

enum class ImportanceMethod { path_sum, confidence, gradient };

inline std::string to_string(ImportanceMethod m) {
  switch (m) {
    case ImportanceMethod::path_sum: return "path-sum";
    case ImportanceMethod::confidence: return "confidence";
    case ImportanceMethod::gradient: return "gradient";
  }
  return "path-sum";
}

inline ImportanceMethod parse_importance_method(const std::string& s) {
  if (s == "path-sum") return ImportanceMethod::path_sum;
  if (s == "confidence") return ImportanceMethod::confidence;
  if (s == "gradient") return ImportanceMethod::gradient;
  throw std::invalid_argument("unknown importance method '" + s + "' (expected path-sum, confidence or gradient)");
}

/// A routing weight vector expressed in raw input space, with the probability
/// of the branch the greedy path took at that node.
struct PathWeight {
  TreeRole tree = TreeRole::sdt;
  std::size_t node = 1;
  std::vector<double> weights;
  double bias = 0.0;
  double chosen_probability = 1.0;
};

namespace detail {

template <template <class> class Leaf>
void collect_path(const SoftTree<double, Leaf>& tree, const std::vector<PathStep>& steps, TreeRole role,
                  const std::function<std::pair<std::vector<double>, double>(std::size_t)>& project,
                  std::vector<PathWeight>& out) {
  std::vector<PathStep> mine;
  for (const auto& s : steps) {
    if (s.tree == role) mine.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < mine.size(); ++i) {
    const std::size_t u = mine[i].node;
    if (u >= tree.first_leaf()) break;
    auto [w, b] = project(u);
    out.push_back(PathWeight{role, u, std::move(w), b, mine[i + 1].branch_probability});
  }
}

}  // namespace detail

/// Internal nodes on the greedy path of `m` at x, in input space.
inline std::vector<PathWeight> path_weights(const Sdt<double>& m, std::span<const double> x) {
  const GreedyResult g = greedy_infer(m, x);
  std::vector<PathWeight> out;
  detail::collect_path(
      m.tree, g.path, TreeRole::sdt, [&](std::size_t u) { return node_weights(m.tree.node(u), m.inputs()); }, out);
  return out;
}

/// F nodes as they are; D nodes back-projected through the chosen F leaf (w' T).
inline std::vector<PathWeight> path_weights(const Cdt<double>& m, std::span<const double> x) {
  const GreedyResult g = greedy_infer(m, x);
  std::vector<PathWeight> out;
  detail::collect_path(
      m.features, g.path, TreeRole::features,
      [&](std::size_t u) { return node_weights(m.features.node(u), m.inputs); }, out);
  const auto rows = effective_weights(m, g.feature_leaf);
  detail::collect_path(
      m.decisions, g.path, TreeRole::decisions,
      [&](std::size_t u) {
        const auto& row = rows[u - 1];
        return std::pair<std::vector<double>, double>{std::vector<double>(row.begin(), row.end() - 1), row.back()};
      },
      out);
  return out;
}

/// Method I: sum of the path's node weight vectors (bias excluded).
template <class M>
std::vector<double> importance_path_sum(const M& m, std::span<const double> x) {
  std::vector<double> I(x.size(), 0.0);
  for (const auto& pw : path_weights(m, x)) {
    for (std::size_t k = 0; k < I.size(); ++k) I[k] += pw.weights[k];
  }
  return I;
}

/// Method II: path node weights scaled by the probability of the branch taken.
template <class M>
std::vector<double> importance_confidence(const M& m, std::span<const double> x) {
  std::vector<double> I(x.size(), 0.0);
  for (const auto& pw : path_weights(m, x)) {
    for (std::size_t k = 0; k < I.size(); ++k) I[k] += pw.chosen_probability * pw.weights[k];
  }
  return I;
}

namespace detail {

template <template <class> class Leaf>
bool has_hard_nodes(const SoftTree<double, Leaf>& t) {
  for (const auto& n : t.nodes) {
    if (n.hard) return true;
  }
  return false;
}

inline bool is_discretized(const Sdt<double>& m) { return has_hard_nodes(m.tree); }
inline bool is_discretized(const Cdt<double>& m) {
  return has_hard_nodes(m.features) || has_hard_nodes(m.decisions);
}

inline Var class_output(const Sdt<Var>& m, std::span<const Var> x, std::size_t cls) {
  const Routing<Var> r = soft_forward(m.tree, x);
  return mixture_component(r.leaves(), leaf_distributions(m.tree), cls);
}

inline Var class_output(const Cdt<Var>& m, std::span<const Var> x, std::size_t cls) {
  const Routing<Var> outer = soft_forward(m.features, x);
  const auto dists = leaf_distributions(m.decisions);
  std::vector<Var> inner;
  for (const auto& leaf : m.features.leaves) {
    std::vector<Var> f;
    for (std::size_t k = 0; k < leaf.rows; ++k) f.push_back(dot(leaf.row(k), x));
    const Routing<Var> r = soft_forward(m.decisions, std::span<const Var>(f));
    inner.push_back(mixture_component(r.leaves(), dists, cls));
  }
  return dot(outer.leaves(), std::span<const Var>(inner));
}

}  // namespace detail

/// Method III: d pi(x)[c*] / dx for the most probable class c* of the soft output.
template <class M>
std::vector<double> importance_gradient(const M& m, std::span<const double> x) {
  if (detail::is_discretized(m)) {
    throw std::invalid_argument("gradient importance is unsupported for discretized models");
  }
  const auto soft = predict_soft(m, x);
  const std::size_t cls = argmax(std::span<const double>(soft));
  Tape tape;
  std::vector<Var> xv;
  for (double v : x) xv.push_back(tape.variable(v));
  const auto constant = as_constant(m);
  const Var out = detail::class_output(constant, std::span<const Var>(xv), cls);
  std::vector<double> I(x.size(), 0.0);
  if (out.is_constant()) return I;
  const Gradients g = tape.backward(out);
  for (std::size_t k = 0; k < x.size(); ++k) I[k] = g[xv[k]];
  return I;
}

template <class M>
std::vector<double> importance(const M& m, std::span<const double> x, ImportanceMethod method) {
  switch (method) {
    case ImportanceMethod::path_sum: return importance_path_sum(m, x);
    case ImportanceMethod::confidence: return importance_confidence(m, x);
    case ImportanceMethod::gradient: return importance_gradient(m, x);
  }
  throw std::invalid_argument("unknown importance method");
}

/// Importance for a raw environment state; vectors are in the policy's input space.
inline std::vector<double> importance(const Policy& p, std::span<const double> raw, ImportanceMethod method) {
  const std::vector<double> x = p.normalizer.normalize(raw);
  return std::visit(
      [&](const auto& m) -> std::vector<double> {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Mlp<double>>) {
          throw std::invalid_argument("feature importance needs a tree model");
        } else {
          return importance(m, std::span<const double>(x), method);
        }
      },
      p.model);
}

/// Arithmetic mean of local importance vectors.
inline std::vector<double> importance_global(std::span<const std::vector<double>> local) {
  if (local.empty()) throw std::invalid_argument("importance_global: no states");
  std::vector<double> mean(local.front().size(), 0.0);
  for (const auto& v : local) {
    if (v.size() != mean.size()) throw std::invalid_argument("importance_global: ragged vectors");
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += v[k];
  }
  for (double& m : mean) m /= static_cast<double>(local.size());
  return mean;
}

// ---- stability -----------------------------------------------------------------------

using WeightSet = std::vector<std::vector<double>>;

/// (w, b) scaled to unit L1 norm.
inline std::vector<double> unit_l1(std::vector<double> v, const std::string& what) {
  double n = 0.0;
  for (double x : v) n += std::abs(x);
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("weight set: zero or non-finite vector at " + what);
  for (double& x : v) x /= n;
  return v;
}

inline WeightSet weight_set(const Sdt<double>& m) {
  WeightSet out;
  for (std::size_t u = 1; u <= m.tree.nodes.size(); ++u) {
    auto [w, b] = node_weights(m.tree.node(u), m.inputs());
    w.push_back(b);
    out.push_back(unit_l1(std::move(w), "node " + std::to_string(u)));
  }
  return out;
}

/// F nodes, then every D node back-projected through every F leaf.
inline WeightSet weight_set(const Cdt<double>& m) {
  WeightSet out;
  for (std::size_t u = 1; u <= m.features.nodes.size(); ++u) {
    auto [w, b] = node_weights(m.features.node(u), m.inputs);
    w.push_back(b);
    out.push_back(unit_l1(std::move(w), "F node " + std::to_string(u)));
  }
  for (std::size_t u1 = 0; u1 < m.features.leaves.size(); ++u1) {
    const auto rows = effective_weights(m, u1);
    for (std::size_t u = 0; u < rows.size(); ++u) {
      out.push_back(unit_l1(rows[u], "D node " + std::to_string(u + 1) + " via F leaf " + std::to_string(u1)));
    }
  }
  return out;
}

inline WeightSet weight_set(const Policy& p) {
  return std::visit(
      [](const auto& m) -> WeightSet {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Mlp<double>>) {
          throw std::invalid_argument("weight sets need a tree model");
        } else {
          return weight_set(m);
        }
      },
      p.model);
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(a[k] - b[k]);
  return d;
}

/// Symmetric Chamfer L1 distance:
/// (1/2N) sum_n min_m |a_m - b_n| + (1/2M) sum_m min_n |a_m - b_n|, M = |A|, N = |B|.
inline double stability_distance(const WeightSet& a, const WeightSet& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("stability_distance: empty weight set");
  const std::size_t dim = a.front().size();
  for (const auto* set : {&a, &b}) {
    for (const auto& v : *set) {
      if (v.size() != dim) throw std::invalid_argument("stability_distance: vector dimensions differ");
    }
  }
  std::vector<double> best_a(a.size(), std::numeric_limits<double>::infinity());
  std::vector<double> best_b(b.size(), std::numeric_limits<double>::infinity());
  for (std::size_t m = 0; m < a.size(); ++m) {
    for (std::size_t n = 0; n < b.size(); ++n) {
      const double d = l1_distance(a[m], b[n]);
      best_a[m] = std::min(best_a[m], d);
      best_b[n] = std::min(best_b[n], d);
    }
  }
  double sb = 0.0;
  for (double d : best_b) sb += d;
  double sa = 0.0;
  for (double d : best_a) sa += d;
  return sb / (2.0 * static_cast<double>(b.size())) + sa / (2.0 * static_cast<double>(a.size()));
}

struct StabilityResult {
  RewardStats learner_pairs;  // D(L, L') over unordered learner pairs
  RewardStats random;         // D(L, R) over every (learner, random agent) pair
  std::vector<double> pair_distances;
  std::vector<double> random_distances;
  std::size_t learners = 0;
  std::size_t random_agents = 0;
};

/// Random agents share the learners' architecture and initialization distribution.
inline std::vector<Policy> random_agents(const Policy& like, std::size_t count, std::uint64_t seed) {
  const SeedStreams seeds(seed);
  std::vector<Policy> out;
  for (std::size_t j = 0; j < count; ++j) {
    Rng rng = seeds.stream("random-agent", j);
    Policy p;
    p.spec = like.spec;
    p.model = make_model(like.spec, like.inputs(), like.outputs(), rng);
    out.push_back(std::move(p));
  }
  return out;
}

inline StabilityResult stability(const std::vector<WeightSet>& learners, const std::vector<WeightSet>& randoms) {
  if (learners.size() < 2) throw std::invalid_argument("stability: need at least two learners");
  if (randoms.empty()) throw std::invalid_argument("stability: need at least one random agent");
  StabilityResult r;
  r.learners = learners.size();
  r.random_agents = randoms.size();
  for (std::size_t i = 0; i < learners.size(); ++i) {
    for (std::size_t j = i + 1; j < learners.size(); ++j) {
      r.pair_distances.push_back(stability_distance(learners[i], learners[j]));
    }
    for (const auto& rnd : randoms) r.random_distances.push_back(stability_distance(learners[i], rnd));
  }
  r.learner_pairs = mean_std(r.pair_distances);
  r.random = mean_std(r.random_distances);
  return r;
}

}  // namespace cdt
