#pragma once

// A model of any family plus the state normalizer it was trained with.

#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cdt/environments.hpp"
#include "cdt/mlp.hpp"
#include "cdt/models.hpp"
#include "cdt/params.hpp"

namespace cdt {

struct ModelSpec {
  Family family = Family::cdt;
  int depth = 3;              // SDT
  int feature_depth = 1;      // CDT d1
  int decision_depth = 2;     // CDT d2
  std::size_t features = 2;   // CDT K
  std::size_t hidden = 128;   // MLP

  std::string label() const {
    switch (family) {
      case Family::sdt: return "sdt-" + std::to_string(depth);
      case Family::cdt:
        return "cdt-" + std::to_string(feature_depth) + "+" + std::to_string(decision_depth) + "-k" +
               std::to_string(features);
      case Family::mlp: return "mlp-" + std::to_string(hidden);
    }
    return "model";
  }
};

using ModelVariant = std::variant<Sdt<double>, Cdt<double>, Mlp<double>>;

template <class T>
std::size_t input_dim(const Sdt<T>& m) { return m.inputs(); }
template <class T>
std::size_t input_dim(const Cdt<T>& m) { return m.inputs; }
template <class T>
std::size_t input_dim(const Mlp<T>& m) { return m.inputs(); }
template <class T>
std::size_t output_dim(const Sdt<T>& m) { return m.outputs; }
template <class T>
std::size_t output_dim(const Cdt<T>& m) { return m.outputs; }
template <class T>
std::size_t output_dim(const Mlp<T>& m) { return m.outputs(); }

inline ModelVariant make_model(const ModelSpec& spec, std::size_t inputs, std::size_t outputs, Rng& rng) {
  switch (spec.family) {
    case Family::sdt: return make_sdt(inputs, outputs, spec.depth, rng);
    case Family::cdt:
      return make_cdt(inputs, spec.features, outputs, spec.feature_depth, spec.decision_depth, rng);
    case Family::mlp: return make_policy_mlp(inputs, spec.hidden, outputs, rng);
  }
  throw std::invalid_argument("make_model: unknown family");
}

// ---- per-batch action probabilities on any scalar type -------------------------
//
// prepare() computes the input-independent part of the forward pass once per
// batch (the output leaves' softmax); action_probability() reuses it per sample.

template <class T>
LeafDistributions<T> prepare(const Sdt<T>& m) { return leaf_distributions(m.tree); }
template <class T>
LeafDistributions<T> prepare(const Cdt<T>& m) { return leaf_distributions(m.decisions); }
template <class T>
int prepare(const Mlp<T>&) { return 0; }

template <class T>
T action_probability(const Sdt<T>& m, const LeafDistributions<T>& prep, std::span<const double> x,
                     std::size_t a) {
  return predict_class(m, x, prep, a);
}
template <class T>
T action_probability(const Cdt<T>& m, const LeafDistributions<T>& prep, std::span<const double> x,
                     std::size_t a) {
  return predict_class(m, x, prep, a);
}
template <class T>
T action_probability(const Mlp<T>& m, int, std::span<const double> x, std::size_t a) {
  return predict_soft(m, x)[a];
}

/// How a trained model picks actions.
enum class Inference { soft, greedy };

inline std::string to_string(Inference i) { return i == Inference::soft ? "soft" : "greedy"; }

inline Inference parse_inference(const std::string& s) {
  if (s == "soft") return Inference::soft;
  if (s == "greedy") return Inference::greedy;
  throw std::invalid_argument("unknown inference mode '" + s + "' (expected soft or greedy)");
}

template <class M>
std::vector<double> greedy_distribution(const M& m, std::span<const double> x) {
  if constexpr (std::is_same_v<M, Mlp<double>>) {
    return predict_soft(m, x);
  } else {
    return greedy_infer(m, x).distribution;
  }
}

struct Policy {
  ModelSpec spec;
  ModelVariant model;
  StateNormalizer normalizer;
  DiscretizeMode mode = DiscretizeMode::none;

  std::size_t inputs() const {
    return std::visit([](const auto& m) { return input_dim(m); }, model);
  }
  std::size_t outputs() const {
    return std::visit([](const auto& m) { return output_dim(m); }, model);
  }
  std::size_t parameters() const {
    return std::visit([](const auto& m) { return param_count(m); }, model);
  }

  /// Action distribution for a raw (unnormalized) state.
  std::vector<double> distribution(std::span<const double> raw, Inference inference) const {
    const auto x = normalizer.normalize(raw);
    const std::span<const double> xs(x);
    return std::visit(
        [&](const auto& m) { return inference == Inference::soft ? predict_soft(m, xs) : greedy_distribution(m, xs); },
        model);
  }

  int act(std::span<const double> raw, Inference inference) const {
    const auto p = distribution(raw, inference);
    return static_cast<int>(argmax(std::span<const double>(p)));
  }
};

/// Copy of `p` with its tree nodes hardened according to `mode`.
inline Policy discretized(const Policy& p, DiscretizeMode mode) {
  Policy out = p;
  out.mode = mode;
  if (mode == DiscretizeMode::none) return out;
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Mlp<double>>) {
          throw std::invalid_argument("MLP policies cannot be discretized");
        } else {
          out.model = discretize(m, mode);
        }
      },
      p.model);
  return out;
}

/// Total reward of one episode acting with `inference`.
inline double run_episode(const Policy& policy, Environment& env, std::uint64_t seed, Inference inference) {
  auto s = env.reset(seed);
  double total = 0.0;
  while (!env.done()) {
    auto r = env.step(policy.act(s, inference));
    total += r.reward;
    s = std::move(r.state);
  }
  return total;
}

}  // namespace cdt
