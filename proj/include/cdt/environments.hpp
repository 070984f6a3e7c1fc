#pragma once

// CartPole and MountainCar classic-control dynamics, teachers and state normalization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdt/random.hpp"

namespace cdt {

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;

  bool done() const { return terminated || truncated; }
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual int max_steps() const = 0;
  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  virtual StepResult step(int action) = 0;
  virtual std::vector<double> state() const = 0;
  virtual bool done() const = 0;
};

class CartPole final : public Environment {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kCartMass = 1.0;
  static constexpr double kPoleMass = 0.1;
  static constexpr double kTotalMass = kCartMass + kPoleMass;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kPoleMassLength = kPoleMass * kHalfLength;
  static constexpr double kForce = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kThetaLimit = 12.0 * 2.0 * std::numbers::pi / 360.0;
  static constexpr double kXLimit = 2.4;
  static constexpr int kMaxSteps = 500;

  std::string name() const override { return "cartpole"; }
  std::size_t state_dim() const override { return 4; }
  std::size_t action_count() const override { return 2; }
  int max_steps() const override { return kMaxSteps; }

  std::vector<double> reset(std::uint64_t seed) override {
    Rng rng(seed);
    for (double& v : s_) v = uniform(rng, -0.05, 0.05);
    steps_ = 0;
    done_ = false;
    return state();
  }

  /// Start from an explicit state (tests and tooling).
  void set_state(std::span<const double> s) {
    if (s.size() != 4) throw std::invalid_argument("cartpole: state must have 4 components");
    std::copy(s.begin(), s.end(), s_.begin());
    steps_ = 0;
    done_ = false;
  }

  StepResult step(int action) override {
    if (done_) throw std::logic_error("cartpole: step called after episode end; call reset");
    if (action != 0 && action != 1) throw std::invalid_argument("cartpole: action must be 0 or 1");
    auto& [x, x_dot, theta, theta_dot] = s_;
    const double force = action == 1 ? kForce : -kForce;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double temp = (force + kPoleMassLength * theta_dot * theta_dot * sin_t) / kTotalMass;
    const double theta_acc =
        (kGravity * sin_t - cos_t * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / kTotalMass));
    const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;
    x += kTau * x_dot;
    x_dot += kTau * x_acc;
    theta += kTau * theta_dot;
    theta_dot += kTau * theta_acc;
    ++steps_;

    StepResult r;
    r.state = state();
    r.reward = 1.0;
    r.terminated = x < -kXLimit || x > kXLimit || theta < -kThetaLimit || theta > kThetaLimit;
    r.truncated = !r.terminated && steps_ >= kMaxSteps;
    done_ = r.done();
    return r;
  }

  std::vector<double> state() const override { return {s_.begin(), s_.end()}; }
  bool done() const override { return done_; }

 private:
  std::array<double, 4> s_{};
  int steps_ = 0;
  bool done_ = true;
};

class MountainCar final : public Environment {
 public:
  static constexpr double kMinPosition = -1.2;
  static constexpr double kMaxPosition = 0.6;
  static constexpr double kMaxSpeed = 0.07;
  static constexpr double kGoalPosition = 0.5;
  static constexpr double kForce = 0.001;
  static constexpr double kGravity = 0.0025;
  static constexpr int kMaxSteps = 200;

  std::string name() const override { return "mountaincar"; }
  std::size_t state_dim() const override { return 2; }
  std::size_t action_count() const override { return 3; }
  int max_steps() const override { return kMaxSteps; }

  std::vector<double> reset(std::uint64_t seed) override {
    Rng rng(seed);
    position_ = uniform(rng, -0.6, -0.4);
    velocity_ = 0.0;
    steps_ = 0;
    done_ = false;
    return state();
  }

  void set_state(double position, double velocity) {
    position_ = std::clamp(position, kMinPosition, kMaxPosition);
    velocity_ = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
    steps_ = 0;
    done_ = false;
  }

  StepResult step(int action) override {
    if (done_) throw std::logic_error("mountaincar: step called after episode end; call reset");
    if (action < 0 || action > 2) throw std::invalid_argument("mountaincar: action must be 0, 1 or 2");
    velocity_ += (action - 1) * kForce - kGravity * std::cos(3.0 * position_);
    velocity_ = std::clamp(velocity_, -kMaxSpeed, kMaxSpeed);
    position_ += velocity_;
    position_ = std::clamp(position_, kMinPosition, kMaxPosition);
    if (position_ == kMinPosition && velocity_ < 0.0) velocity_ = 0.0;
    ++steps_;

    StepResult r;
    r.state = state();
    r.reward = -1.0;
    r.terminated = position_ >= kGoalPosition;
    r.truncated = !r.terminated && steps_ >= kMaxSteps;
    done_ = r.done();
    return r;
  }

  std::vector<double> state() const override { return {position_, velocity_}; }
  bool done() const override { return done_; }

  /// v^2/2 + U(p) with U' = 0.0025 cos(3p), the unforced mechanical energy.
  static double energy(double position, double velocity) {
    return 0.5 * velocity * velocity + kGravity / 3.0 * std::sin(3.0 * position);
  }

 private:
  double position_ = -0.5;
  double velocity_ = 0.0;
  int steps_ = 0;
  bool done_ = true;
};

inline std::string canonical_env_name(const std::string& name) {
  if (name == "cartpole" || name == "CartPole-v1") return "cartpole";
  if (name == "mountaincar" || name == "MountainCar-v0") return "mountaincar";
  throw std::invalid_argument("unknown environment '" + name + "' (expected cartpole or mountaincar)");
}

inline std::unique_ptr<Environment> make_env(const std::string& name) {
  const auto n = canonical_env_name(name);
  if (n == "cartpole") return std::make_unique<CartPole>();
  return std::make_unique<MountainCar>();
}

/// Push right iff 3 theta + theta_dot > 0.
inline int heuristic_cartpole(std::span<const double> s) { return 3.0 * s[2] + s[3] > 0.0 ? 1 : 0; }

/// Push in the direction of motion.
inline int energy_pumping_mountaincar(std::span<const double> s) { return s[1] >= 0.0 ? 2 : 0; }

/// Scripted teacher for an environment name.
inline int scripted_teacher(const std::string& env, std::span<const double> s) {
  return canonical_env_name(env) == "cartpole" ? heuristic_cartpole(s) : energy_pumping_mountaincar(s);
}

struct StateNormalizer {
  std::vector<double> mean;
  std::vector<double> stdev;

  bool empty() const { return mean.empty(); }

  std::vector<double> normalize(std::span<const double> x) const {
    if (empty()) return {x.begin(), x.end()};
    check(x.size());
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / stdev[i];
    return z;
  }

  std::vector<double> denormalize(std::span<const double> z) const {
    if (empty()) return {z.begin(), z.end()};
    check(z.size());
    std::vector<double> x(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] * stdev[i] + mean[i];
    return x;
  }

 private:
  void check(std::size_t n) const {
    if (n != mean.size()) throw std::invalid_argument("normalizer: dimension mismatch");
  }
};

inline constexpr double kStdFloor = 1e-8;

/// Per-dimension mean and population standard deviation, std floored at 1e-8.
inline StateNormalizer fit_normalizer(std::span<const std::vector<double>> states) {
  if (states.empty()) throw std::invalid_argument("fit_normalizer: no states");
  const std::size_t dim = states.front().size();
  StateNormalizer n;
  n.mean.assign(dim, 0.0);
  n.stdev.assign(dim, 0.0);
  for (const auto& s : states) {
    if (s.size() != dim) throw std::invalid_argument("fit_normalizer: ragged states");
    for (std::size_t i = 0; i < dim; ++i) n.mean[i] += s[i];
  }
  const double count = static_cast<double>(states.size());
  for (double& m : n.mean) m /= count;
  for (const auto& s : states) {
    for (std::size_t i = 0; i < dim; ++i) n.stdev[i] += (s[i] - n.mean[i]) * (s[i] - n.mean[i]);
  }
  for (double& v : n.stdev) v = std::max(std::sqrt(v / count), kStdFloor);
  return n;
}

/// States visited by the scripted teacher over `episodes` seeded episodes.
inline std::vector<std::vector<double>> teacher_states(const std::string& env_name, int episodes,
                                                       const SeedStreams& seeds) {
  auto env = make_env(env_name);
  std::vector<std::vector<double>> out;
  for (int e = 0; e < episodes; ++e) {
    auto s = env->reset(seeds.derive("normalizer", static_cast<std::uint64_t>(e)));
    out.push_back(s);
    while (!env->done()) {
      auto r = env->step(scripted_teacher(env_name, s));
      s = std::move(r.state);
      if (!r.done()) out.push_back(s);
    }
  }
  return out;
}

/// Normalizer fitted on scripted-teacher rollouts (3000 episodes by default).
inline StateNormalizer teacher_normalizer(const std::string& env_name, std::uint64_t seed, int episodes = 3000) {
  const auto states = teacher_states(env_name, episodes, SeedStreams{seed});
  return fit_normalizer(std::span<const std::vector<double>>(states));
}

}  // namespace cdt
