#pragma once

// Small tanh perceptrons: the MLP policy baseline and the PPO value network.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdt/autodiff.hpp"
#include "cdt/random.hpp"

namespace cdt {

template <class T>
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<T> weights;  // row-major, outputs x inputs
  std::vector<T> bias;

  std::span<const T> row(std::size_t o) const { return {weights.data() + o * inputs, inputs}; }
};

/// Fully connected net; tanh on every layer but the last.
template <class T>
struct Mlp {
  std::vector<DenseLayer<T>> layers;

  std::size_t inputs() const { return layers.front().inputs; }
  std::size_t outputs() const { return layers.back().outputs; }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init.
inline Mlp<double> make_mlp(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output widths");
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("make_mlp: layer widths must be >= 1");
  }
  Mlp<double> m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayer<double> l;
    l.inputs = widths[i];
    l.outputs = widths[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.inputs));
    l.weights.resize(l.inputs * l.outputs);
    l.bias.resize(l.outputs);
    for (double& w : l.weights) w = uniform(rng, -bound, bound);
    for (double& b : l.bias) b = uniform(rng, -bound, bound);
    m.layers.push_back(std::move(l));
  }
  return m;
}

/// Policy MLP: R -> hidden (tanh) -> action logits.
inline Mlp<double> make_policy_mlp(std::size_t inputs, std::size_t hidden, std::size_t actions, Rng& rng) {
  return make_mlp({inputs, hidden, actions}, rng);
}

/// Value net: R -> hidden (tanh) -> scalar.
inline Mlp<double> make_value_net(std::size_t inputs, std::size_t hidden, Rng& rng) {
  return make_mlp({inputs, hidden, 1}, rng);
}

template <class U, class T, class F>
Mlp<U> rebind(const Mlp<T>& m, F&& f) {
  Mlp<U> out;
  for (const auto& l : m.layers) {
    DenseLayer<U> r;
    r.inputs = l.inputs;
    r.outputs = l.outputs;
    for (const auto& w : l.weights) r.weights.push_back(f(w));
    for (const auto& b : l.bias) r.bias.push_back(f(b));
    out.layers.push_back(std::move(r));
  }
  return out;
}

template <class T, class F>
void for_each_param(Mlp<T>& m, F&& f) {
  for (auto& l : m.layers) {
    for (auto& w : l.weights) f(w);
    for (auto& b : l.bias) f(b);
  }
}

template <class T, class F>
void for_each_param(const Mlp<T>& m, F&& f) {
  for (const auto& l : m.layers) {
    for (const auto& w : l.weights) f(w);
    for (const auto& b : l.bias) f(b);
  }
}

template <class T>
std::size_t param_count(const Mlp<T>& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers) n += l.weights.size() + l.bias.size();
  return n;
}

template <class T>
std::vector<T> forward(const Mlp<T>& m, std::span<const double> x) {
  if (x.size() != m.inputs()) throw std::invalid_argument("mlp forward: input dimension mismatch");
  using std::tanh;
  std::vector<T> h;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const auto& l = m.layers[li];
    std::vector<T> next(l.outputs);
    for (std::size_t o = 0; o < l.outputs; ++o) {
      T z = li == 0 ? T(affine(l.bias[o], l.row(o), x)) : T(affine(l.bias[o], l.row(o), std::span<const T>(h)));
      next[o] = li + 1 < m.layers.size() ? T(tanh(z)) : z;
    }
    h = std::move(next);
  }
  return h;
}

/// Action distribution of an MLP policy.
template <class T>
std::vector<T> predict_soft(const Mlp<T>& m, std::span<const double> x) {
  const auto logits = forward(m, x);
  return softmax(std::span<const T>(logits));
}

}  // namespace cdt
