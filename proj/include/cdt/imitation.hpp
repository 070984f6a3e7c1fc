#pragma once

// Training SDT/CDT imitators on teacher datasets and measuring their fidelity.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cdt/adam.hpp"
#include "cdt/dataset.hpp"
#include "cdt/errors.hpp"
#include "cdt/parameters.hpp"
#include "cdt/policy.hpp"

namespace cdt {

struct ImitationConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 1280;
  int epochs = 80;
  int dataset_episodes = 1000;
  double holdout = 0.1;
  bool normalize = false;  // z-score states with statistics of the training split
  ModelSpec model;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("imitation: learning rate must be positive");
    if (batch_size == 0) throw std::invalid_argument("imitation: batch size must be positive");
    if (epochs < 1) throw std::invalid_argument("imitation: epochs must be >= 1");
    if (dataset_episodes < 1) throw std::invalid_argument("imitation: dataset episodes must be >= 1");
    if (model.family == Family::mlp) throw std::invalid_argument("imitation: only sdt and cdt imitators");
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double holdout_accuracy = 0.0;
};

struct ImitationResult {
  Policy policy;
  std::vector<EpochStats> curve;
};

/// Fraction of rows where the policy's action matches the label.
inline double accuracy(const Policy& policy, const Dataset& d, Inference inference) {
  if (d.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.size(); ++i) hits += policy.act(d.states[i], inference) == d.actions[i];
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

namespace detail {

/// Mean of -log pi(x_i)[a_i] over `rows`; returns the loss value and writes the gradient.
template <class M>
double batch_nll(const M& model, const std::vector<std::vector<double>>& states, const std::vector<int>& actions,
                 std::span<const std::size_t> rows, Tape& tape, std::vector<double>& grad) {
  tape.clear();
  const auto lifted = lift(model, tape);
  const auto prep = prepare(lifted);
  std::vector<Var> terms;
  terms.reserve(rows.size());
  for (std::size_t i : rows) {
    terms.push_back(log(action_probability(lifted, prep, states[i], static_cast<std::size_t>(actions[i]))));
  }
  const Var loss = sum(std::span<const Var>(terms)) * Var(-1.0 / static_cast<double>(rows.size()));
  grad = gradient_of(lifted, tape.backward(loss));
  return loss.value;
}

}  // namespace detail

/// Minimizes the mean negative log mixture probability of the teacher action
/// with Adam over shuffled minibatches. Held-out accuracy is recorded after every epoch.
inline ImitationResult train_imitator(const Dataset& train, const Dataset& holdout, const ImitationConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw std::invalid_argument("train_imitator: empty training set");
  if (cfg.batch_size > train.size()) {
    throw std::invalid_argument("train_imitator: batch size " + std::to_string(cfg.batch_size) +
                                " exceeds training rows " + std::to_string(train.size()));
  }
  const SeedStreams seeds(cfg.seed);
  Policy policy;
  policy.spec = cfg.model;
  if (cfg.normalize) policy.normalizer = fit_normalizer(std::span<const std::vector<double>>(train.states));
  Rng init = seeds.stream("init");
  policy.model = make_model(cfg.model, train.state_dim, train.action_count, init);

  std::vector<std::vector<double>> states;
  states.reserve(train.size());
  for (const auto& s : train.states) states.push_back(policy.normalizer.normalize(s));

  ImitationResult result;
  Rng shuffle = seeds.stream("shuffle");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Tape tape;
  std::vector<double> grad;

  std::visit(
      [&](auto& model) {
        std::vector<double> params = flatten(model);
        AdamState adam(params.size());
        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
          std::shuffle(order.begin(), order.end(), shuffle);
          double loss_sum = 0.0;
          std::size_t batches = 0;
          for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, end - start);
            double loss = 0.0;
            bool ok = true;
            try {
              loss = detail::batch_nll(model, states, train.actions, rows, tape, grad);
            } catch (const NumericDomainError&) {
              ok = false;
            }
            ok = ok && std::isfinite(loss) && std::all_of(grad.begin(), grad.end(), [](double g) {
                   return std::isfinite(g);
                 });
            if (!ok) {
              std::ostringstream msg;
              msg << "imitation loss is not finite at epoch " << epoch << ", batch " << batches
                  << " (parameter norm " << l2_norm(params) << ", seed " << cfg.seed << ")";
              throw NumericFailure(msg.str());
            }
            adam_step(params, grad, adam, cfg.learning_rate);
            assign(model, std::span<const double>(params));
            loss_sum += loss * static_cast<double>(rows.size());
            ++batches;
          }
          EpochStats st;
          st.epoch = epoch;
          st.train_loss = loss_sum / static_cast<double>(order.size());
          st.holdout_accuracy = holdout.size() > 0 ? accuracy(policy, holdout, Inference::soft) : 0.0;
          result.curve.push_back(st);
        }
      },
      policy.model);
  result.policy = std::move(policy);
  return result;
}

struct RewardStats {
  double mean = 0.0;
  double std = 0.0;
};

inline RewardStats mean_std(std::span<const double> xs) {
  RewardStats r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  for (double x : xs) r.std += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(xs.size()));
  return r;
}

/// Episode rewards over `episodes` evaluation episodes; episode e resets with
/// SeedStreams(seed).derive("eval", e).
inline std::vector<double> episode_rewards(const Policy& policy, const std::string& env_name, int episodes,
                                           std::uint64_t seed, Inference inference) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  auto env = make_env(env_name);
  const SeedStreams seeds(seed);
  std::vector<double> out;
  for (int e = 0; e < episodes; ++e) {
    out.push_back(run_episode(policy, *env, seeds.derive("eval", static_cast<std::uint64_t>(e)), inference));
  }
  return out;
}

struct FidelityReport {
  std::string mode;  // soft, greedy, discretized, F, D, F+D
  double accuracy = 0.0;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  std::size_t params = 0;
};

/// Accuracy on `holdout` and reward statistics for one inference mode.
inline FidelityReport evaluate(const Policy& policy, const Dataset& holdout, const std::string& env_name,
                               int episodes, std::uint64_t seed, Inference inference, const std::string& mode) {
  FidelityReport r;
  r.mode = mode;
  r.accuracy = accuracy(policy, holdout, inference);
  const auto rewards = episode_rewards(policy, env_name, episodes, seed, inference);
  const auto st = mean_std(rewards);
  r.reward_mean = st.mean;
  r.reward_std = st.std;
  r.params = policy.parameters();
  return r;
}

/// Discretization modes meaningful for a policy's family.
inline std::vector<DiscretizeMode> discretization_modes(const Policy& p) {
  if (std::holds_alternative<Sdt<double>>(p.model)) return {DiscretizeMode::sdt};
  if (std::holds_alternative<Cdt<double>>(p.model)) {
    return {DiscretizeMode::cdt_f_only, DiscretizeMode::cdt_d_only, DiscretizeMode::cdt_f_and_d};
  }
  return {};
}

/// Rows: soft, greedy, then each discretization (evaluated greedily).
inline std::vector<FidelityReport> fidelity_table(const Policy& policy, const Dataset& holdout,
                                                  const std::string& env_name, int episodes, std::uint64_t seed) {
  std::vector<FidelityReport> rows;
  rows.push_back(evaluate(policy, holdout, env_name, episodes, seed, Inference::soft, "soft"));
  rows.push_back(evaluate(policy, holdout, env_name, episodes, seed, Inference::greedy, "greedy"));
  for (DiscretizeMode m : discretization_modes(policy)) {
    rows.push_back(evaluate(discretized(policy, m), holdout, env_name, episodes, seed, Inference::greedy,
                            to_string(m)));
  }
  return rows;
}

inline void write_fidelity_csv(std::ostream& out, const std::vector<FidelityReport>& rows) {
  out << "mode,accuracy,reward_mean,reward_std,params\n";
  for (const auto& r : rows) {
    out << r.mode << ',' << format_double(r.accuracy) << ',' << format_double(r.reward_mean) << ','
        << format_double(r.reward_std) << ',' << r.params << '\n';
  }
}

}  // namespace cdt
