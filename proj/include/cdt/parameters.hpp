#pragma once

// Moving model parameters between plain storage, flat vectors and the tape.

#include <span>
#include <stdexcept>
#include <vector>

#include "cdt/autodiff.hpp"

namespace cdt {

/// Copy of `model` whose trainable values are leaves on `tape`.
template <template <class> class Model>
Model<Var> lift(const Model<double>& model, Tape& tape) {
  return rebind<Var>(model, [&](double v) { return tape.variable(v); });
}

/// Copy of `model` whose values are tape-free constants.
template <template <class> class Model>
Model<Var> as_constant(const Model<double>& model) {
  return rebind<Var>(model, [](double v) { return Var(v); });
}

template <class Model>
std::vector<double> flatten(const Model& model) {
  std::vector<double> out;
  for_each_param(model, [&](const auto& v) { out.push_back(value_of(v)); });
  return out;
}

template <class Model>
void assign(Model& model, std::span<const double> values) {
  std::size_t i = 0;
  for_each_param(model, [&](double& v) {
    if (i >= values.size()) throw std::invalid_argument("assign: too few parameter values");
    v = values[i++];
  });
  if (i != values.size()) throw std::invalid_argument("assign: too many parameter values");
}

/// Gradient entries for a lifted model, in for_each_param order.
template <class Model>
std::vector<double> gradient_of(const Model& lifted, const Gradients& grads) {
  std::vector<double> out;
  for_each_param(lifted, [&](const Var& v) { out.push_back(grads[v]); });
  return out;
}

}  // namespace cdt
