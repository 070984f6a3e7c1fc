#pragma once

// PPO with GAE for SDT, CDT and MLP policies.

#include <cmath>
#include <deque>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cdt/adam.hpp"
#include "cdt/errors.hpp"
#include "cdt/imitation.hpp"
#include "cdt/mlp.hpp"
#include "cdt/parameters.hpp"
#include "cdt/policy.hpp"

namespace cdt {

struct Transition {
  std::vector<double> state;  // model input (already normalized)
  int action = 0;
  double log_prob = 0.0;      // behaviour policy, at collection time
  double reward = 0.0;
  bool done = false;          // environment terminated
  bool truncated = false;     // time limit; bootstraps from next_value
  double value = 0.0;         // V(state) at collection time
  double next_value = 0.0;    // V(successor), used when truncated
};

struct PPOConfig {
  double learning_rate = 5e-4;
  double gamma = 0.98;
  double lambda = 0.95;
  double clip = 0.1;
  int update_iterations = 3;
  std::size_t value_hidden = 128;
  int episodes = 3000;
  int horizon = 1000;
  bool normalize = false;
  int normalizer_episodes = 3000;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo: gamma must be in (0, 1]");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("ppo: lambda must be in (0, 1]");
    if (!(clip > 0.0)) throw std::invalid_argument("ppo: clip epsilon must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("ppo: learning rate must be positive");
    if (update_iterations < 1 || episodes < 1 || horizon < 1 || value_hidden < 1) {
      throw std::invalid_argument("ppo: iterations, episodes, horizon and hidden width must be >= 1");
    }
  }
};

inline PPOConfig ppo_preset(const std::string& env_name) {
  PPOConfig c;
  if (canonical_env_name(env_name) == "mountaincar") {
    c.learning_rate = 5e-3;
    c.gamma = 0.999;
    c.lambda = 0.98;
    c.clip = 0.1;
    c.update_iterations = 10;
    c.value_hidden = 32;
    c.episodes = 5000;
  }
  return c;
}

/// Hidden width of the MLP policy baseline per environment.
inline std::size_t mlp_policy_hidden(const std::string& env_name) {
  return canonical_env_name(env_name) == "mountaincar" ? 32 : 128;
}

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t
/// A_t = delta_t + gamma lambda A_{t+1}, restarted after done or truncated steps.
/// V after the last transition is `bootstrap`; a truncated transition inside
/// the trajectory uses its own next_value.
inline Advantages gae(std::span<const Transition> traj, double gamma, double lambda, double bootstrap) {
  if (traj.empty()) throw std::invalid_argument("gae: empty trajectory");
  Advantages out;
  const std::size_t n = traj.size();
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const Transition& t = traj[i];
    const bool last = i + 1 == n;
    const double next_v = last ? bootstrap : (t.truncated ? t.next_value : traj[i + 1].value);
    const double delta = t.reward + gamma * next_v * (t.done ? 0.0 : 1.0) - t.value;
    const bool boundary = last || t.done || t.truncated;
    const double adv = delta + gamma * lambda * (boundary ? 0.0 : next_adv);
    out.advantages[i] = adv;
    out.returns[i] = adv + t.value;
    next_adv = adv;
  }
  return out;
}

/// Zero mean, unit population std. A batch with (near) zero spread maps to all zeros.
inline void normalize_advantages(std::vector<double>& a) {
  if (a.empty()) return;
  double mean = 0.0;
  for (double v : a) mean += v;
  mean /= static_cast<double>(a.size());
  double var = 0.0;
  for (double v : a) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(a.size()));
  for (double& v : a) v = sd > 1e-12 ? (v - mean) / sd : 0.0;
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  std::size_t skipped = 0;
};

struct LossGradient {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  std::size_t skipped = 0;
  std::vector<double> policy_grad;
  std::vector<double> value_grad;
};

/// Clipped surrogate plus squared value error on one batch, with gradients
/// for both parameter sets. `value` may be null to skip the value term.
template <class M>
LossGradient ppo_loss_gradient(const M& policy, const Mlp<double>* value, std::span<const Transition> batch,
                               std::span<const double> advantages, std::span<const double> returns, double clip,
                               Tape& tape) {
  tape.clear();
  const auto lifted = lift(policy, tape);
  const auto prep = prepare(lifted);
  std::optional<Mlp<Var>> v_lifted;
  if (value) v_lifted = lift(*value, tape);

  std::vector<Var> surrogate;
  std::vector<Var> value_err;
  LossGradient out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = batch[i];
    const Var logp = log(action_probability(lifted, prep, t.state, static_cast<std::size_t>(t.action)));
    const Var ratio = exp(logp - Var(t.log_prob));
    if (!std::isfinite(ratio.value)) {
      ++out.skipped;
      continue;
    }
    const Var a(advantages[i]);
    const Var clipped = min(max(ratio, Var(1.0 - clip)), Var(1.0 + clip));
    surrogate.push_back(min(ratio * a, clipped * a));
    if (v_lifted) {
      const Var err = forward(*v_lifted, t.state)[0] - Var(returns[i]);
      value_err.push_back(err * err);
    }
  }
  if (out.skipped > 0) {
    std::cerr << "warning: ppo skipped " << out.skipped << " samples with non-finite probability ratio\n";
  }
  Var loss(0.0);
  Var p_loss(0.0);
  Var v_loss(0.0);
  if (!surrogate.empty()) {
    p_loss = sum(std::span<const Var>(surrogate)) * Var(-1.0 / static_cast<double>(surrogate.size()));
    loss = p_loss;
  }
  if (!value_err.empty()) {
    v_loss = sum(std::span<const Var>(value_err)) * Var(1.0 / static_cast<double>(value_err.size()));
    loss = loss + v_loss;
  }
  out.policy_loss = p_loss.value;
  out.value_loss = v_loss.value;
  if (loss.is_constant()) {
    out.policy_grad.assign(param_count(policy), 0.0);
    if (value) out.value_grad.assign(param_count(*value), 0.0);
    return out;
  }
  const Gradients g = tape.backward(loss);
  out.policy_grad = gradient_of(lifted, g);
  if (v_lifted) out.value_grad = gradient_of(*v_lifted, g);
  return out;
}

/// Joint Adam state over [policy params, value params].
struct PPOOptimizer {
  AdamState adam;
};

/// `update_iterations` passes over the batch, each a single joint Adam step.
template <class M>
UpdateStats ppo_update(M& policy, Mlp<double>& value, std::span<const Transition> batch,
                       std::span<const double> advantages, std::span<const double> returns, const PPOConfig& cfg,
                       PPOOptimizer& opt, Tape& tape) {
  std::vector<double> params = flatten(policy);
  const std::size_t n_policy = params.size();
  const auto vparams = flatten(value);
  params.insert(params.end(), vparams.begin(), vparams.end());
  if (opt.adam.m.size() != params.size()) opt.adam = AdamState(params.size());
  UpdateStats st;
  for (int it = 0; it < cfg.update_iterations; ++it) {
    auto lg = ppo_loss_gradient(policy, &value, batch, advantages, returns, cfg.clip, tape);
    std::vector<double> grad = std::move(lg.policy_grad);
    grad.insert(grad.end(), lg.value_grad.begin(), lg.value_grad.end());
    for (double gv : grad) {
      if (!std::isfinite(gv)) throw NumericFailure("ppo: non-finite gradient");
    }
    adam_step(params, grad, opt.adam, cfg.learning_rate);
    assign(policy, std::span<const double>(params.data(), n_policy));
    assign(value, std::span<const double>(params.data() + n_policy, params.size() - n_policy));
    st.policy_loss = lg.policy_loss;
    st.value_loss = lg.value_loss;
    st.skipped += lg.skipped;
  }
  return st;
}

/// Inverse-CDF draw from a discrete distribution.
inline int sample_action(std::span<const double> probs, Rng& rng) {
  const double u = uniform(rng, 0.0, 1.0);
  double c = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    c += probs[k];
    if (u < c) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size() - 1);
}

struct CurvePoint {
  int episode = 0;
  double reward = 0.0;
  double smoothed = 0.0;  // trailing mean over the last 100 episodes (fewer at the start)
};

inline constexpr int kSmoothingWindow = 100;

struct RLResult {
  Policy final_policy;
  Policy best_policy;
  Mlp<double> value;
  std::vector<CurvePoint> curve;
  double best_smoothed = -std::numeric_limits<double>::infinity();
  int best_episode = -1;  // first episode whose full 100-episode window attains best_smoothed

  /// First episode whose trailing mean reaches `threshold`, or -1.
  int episodes_to(double threshold) const {
    for (const auto& p : curve) {
      if (p.episode + 1 >= kSmoothingWindow && p.smoothed >= threshold) return p.episode;
    }
    return -1;
  }
  double final_smoothed() const { return curve.empty() ? 0.0 : curve.back().smoothed; }
};

/// Trains `spec` on `env_name` from scratch. Actions are sampled from the soft
/// distribution; one PPO update runs after every episode (or every `horizon`
/// steps if sooner). `progress` is called after each episode when set.
inline RLResult train_rl(const std::string& env_name, const ModelSpec& spec, const PPOConfig& cfg,
                         std::uint64_t seed, const std::function<void(const CurvePoint&)>& progress = {}) {
  cfg.validate();
  const SeedStreams seeds(seed);
  auto env = make_env(env_name);
  RLResult result;
  Policy& pol = result.final_policy;
  pol.spec = spec;
  if (cfg.normalize) {
    pol.normalizer = teacher_normalizer(env_name, seeds.derive("normalizer"), cfg.normalizer_episodes);
  }
  Rng init = seeds.stream("init");
  pol.model = make_model(spec, env->state_dim(), env->action_count(), init);
  result.value = make_value_net(env->state_dim(), cfg.value_hidden, init);
  Rng sampling = seeds.stream("sampling");
  Tape tape;
  PPOOptimizer opt;
  std::deque<double> window;
  double window_sum = 0.0;

  std::visit(
      [&](auto& model) {
        std::vector<Transition> batch;
        auto update = [&](double bootstrap) {
          auto adv = gae(batch, cfg.gamma, cfg.lambda, bootstrap);
          normalize_advantages(adv.advantages);
          ppo_update(model, result.value, batch, adv.advantages, adv.returns, cfg, opt, tape);
          batch.clear();
        };
        for (int e = 0; e < cfg.episodes; ++e) {
          auto raw = env->reset(seeds.derive("env", static_cast<std::uint64_t>(e)));
          auto x = pol.normalizer.normalize(raw);
          double total = 0.0;
          while (!env->done()) {
            const auto probs = predict_soft(model, std::span<const double>(x));
            const int a = sample_action(probs, sampling);
            Transition t;
            t.state = x;
            t.action = a;
            t.log_prob = std::log(probs[static_cast<std::size_t>(a)]);
            t.value = forward(result.value, std::span<const double>(x))[0];
            auto r = env->step(a);
            total += r.reward;
            x = pol.normalizer.normalize(r.state);
            t.reward = r.reward;
            t.done = r.terminated;
            t.truncated = r.truncated;
            if (r.truncated) t.next_value = forward(result.value, std::span<const double>(x))[0];
            if (!std::isfinite(t.log_prob) || !std::isfinite(t.value)) {
              std::ostringstream msg;
              msg << "rl diverged: non-finite policy or value output (seed " << seed << ", episode " << e << ")";
              throw NumericFailure(msg.str());
            }
            batch.push_back(std::move(t));
            if (r.done()) {
              update(r.truncated ? batch.back().next_value : 0.0);
            } else if (static_cast<int>(batch.size()) >= cfg.horizon) {
              update(forward(result.value, std::span<const double>(x))[0]);
            }
          }
          if (!std::isfinite(total)) {
            std::ostringstream msg;
            msg << "rl diverged: non-finite reward (seed " << seed << ", episode " << e << ")";
            throw NumericFailure(msg.str());
          }
          window.push_back(total);
          window_sum += total;
          if (static_cast<int>(window.size()) > kSmoothingWindow) {
            window_sum -= window.front();
            window.pop_front();
          }
          CurvePoint p{e, total, window_sum / static_cast<double>(window.size())};
          result.curve.push_back(p);
          const bool full = static_cast<int>(window.size()) == kSmoothingWindow || e + 1 == cfg.episodes;
          if (full && p.smoothed > result.best_smoothed) {
            result.best_smoothed = p.smoothed;
            result.best_episode = e;
            result.best_policy = pol;
          }
          if (progress) progress(p);
        }
      },
      pol.model);
  return result;
}

inline void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "episode,reward,smoothed_reward\n";
  for (const auto& p : curve) {
    out << p.episode << ',' << format_double(p.reward) << ',' << format_double(p.smoothed) << '\n';
  }
}

}  // namespace cdt
