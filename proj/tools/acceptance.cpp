// cdt-acceptance: runs every acceptance criterion and prints one PASS/FAIL line each.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cdt/experiment.hpp"

using namespace cdt;

namespace {

// ---- pinned tolerances ------------------------------------------------------------

constexpr int kImitationSeeds = 5;
constexpr int kDatasetEpisodes = 1000;
constexpr std::uint64_t kDatasetSeed = 0;
constexpr int kEvalEpisodes = 100;
constexpr double kSoftAccuracyMin = 0.93;
constexpr double kFullReward = 500.0;
constexpr double kRewardEps = 1e-9;
constexpr double kSdtDiscretizedAccLo = 0.45;
constexpr double kSdtDiscretizedAccHi = 0.60;
constexpr double kSdtDiscretizedRewardMax = 100.0;
constexpr double kCdtFOnlyAccuracyMin = 0.92;
constexpr double kCdtFOnlyRewardMin = 495.0;

constexpr int kRlSeeds = 3;
constexpr int kCartPoleEpisodes = 3000;
constexpr double kCartPoleSolved = 475.0;
constexpr double kSdtRlTarget = 400.0;
constexpr int kMountainCarEpisodes = 5000;
constexpr double kMountainCarTarget = -130.0;  // all RL runs use state normalization

constexpr std::size_t kRandomAgents = 10;

constexpr int kGradientExpressions = 200;
constexpr double kGradientRelErr = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr int kNormalizationInputs = 1000;
constexpr double kNormalizationTol = 1e-9;
constexpr double kExactTol = 1e-12;

// ---- reporting -----------------------------------------------------------------------

enum class Verdict { pass, fail, warn };

struct Outcome {
  Verdict verdict = Verdict::fail;
  std::string detail;
};

std::ostream* progress = &std::cerr;

void note(const std::string& s) {
  if (progress) *progress << s << std::endl;
}

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v, const char* spec = "%.4g") {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], spec);
  return s + "]";
}

ModelSpec sdt_spec(int depth) {
  ModelSpec s;
  s.family = Family::sdt;
  s.depth = depth;
  return s;
}

ModelSpec cdt_spec(int d1, int d2, std::size_t k) {
  ModelSpec s;
  s.family = Family::cdt;
  s.feature_depth = d1;
  s.decision_depth = d2;
  s.features = k;
  return s;
}

ModelSpec mlp_spec(std::size_t hidden) {
  ModelSpec s;
  s.family = Family::mlp;
  s.hidden = hidden;
  return s;
}

// ---- criterion 1 ------------------------------------------------------------------------

Outcome param_counts(json& log) {
  struct Cell {
    ArchitectureConfig c;
    std::int64_t expected;
  };
  auto sdt = [](int d, DiscretizeMode m) {
    ArchitectureConfig c;
    c.family = Family::sdt;
    c.depth = d;
    c.mode = m;
    return c;
  };
  auto cdt = [](int d1, int d2, DiscretizeMode m, std::int64_t r = 4, std::int64_t k = 2, std::int64_t o = 2) {
    ArchitectureConfig c;
    c.family = Family::cdt;
    c.inputs = r;
    c.features = k;
    c.outputs = o;
    c.feature_depth = d1;
    c.decision_depth = d2;
    c.mode = m;
    return c;
  };
  using M = DiscretizeMode;
  const std::vector<Cell> cells = {
      {sdt(2, M::none), 23},           {sdt(3, M::none), 51},           {sdt(4, M::none), 107},
      {sdt(2, M::sdt), 14},            {sdt(3, M::sdt), 30},            {sdt(4, M::sdt), 62},
      {cdt(1, 2, M::none), 38},        {cdt(1, 2, M::cdt_f_only), 35},  {cdt(1, 2, M::cdt_d_only), 35},
      {cdt(1, 2, M::cdt_f_and_d), 32}, {cdt(2, 1, M::none), 54},        {cdt(2, 1, M::cdt_f_only), 45},
      {cdt(2, 1, M::cdt_d_only), 53},  {cdt(2, 1, M::cdt_f_and_d), 44}, {cdt(2, 2, M::none), 64},
      {cdt(2, 2, M::cdt_f_only), 55},  {cdt(2, 2, M::cdt_d_only), 61},  {cdt(2, 2, M::cdt_f_and_d), 52},
      {cdt(2, 3, M::none, 8, 4, 4), 222},
  };
  std::size_t wrong = 0;
  std::string first;
  for (const auto& cell : cells) {
    const auto got = param_count(cell.c);
    if (got != cell.expected) {
      if (wrong++ == 0) first = " first mismatch " + std::to_string(got) + " != " + std::to_string(cell.expected);
    }
  }
  log["cells"] = cells.size();
  log["mismatches"] = wrong;
  return {wrong == 0 ? Verdict::pass : Verdict::fail,
          std::to_string(cells.size() - wrong) + "/" + std::to_string(cells.size()) + " cells exact" + first};
}

// ---- imitation runs shared by criteria 2, 3 and 6 -------------------------------------

struct ImitationRun {
  Policy policy;
  std::map<std::string, FidelityReport> rows;
};

struct ImitationSuite {
  std::vector<ImitationRun> sdt;
  std::vector<ImitationRun> cdt;
};

ImitationSuite& imitation_suite() {
  static std::optional<ImitationSuite> suite;
  if (suite) return *suite;
  suite.emplace();
  note("imitation: generating " + std::to_string(kDatasetEpisodes) + "-episode CartPole dataset");
  const auto split = split_holdout(generate_teacher_dataset("cartpole", kDatasetEpisodes, kDatasetSeed), 0.1);
  for (const auto& [spec, out] : {std::pair{sdt_spec(3), &suite->sdt}, std::pair{cdt_spec(1, 2, 2), &suite->cdt}}) {
    for (int s = 0; s < kImitationSeeds; ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      ImitationConfig cfg;
      cfg.model = spec;
      cfg.seed = static_cast<std::uint64_t>(s);
      ImitationRun run;
      run.policy = train_imitator(split.train, split.test, cfg).policy;
      for (auto& r : fidelity_table(run.policy, split.test, "cartpole", kEvalEpisodes, cfg.seed)) {
        run.rows[r.mode] = r;
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      note("imitation " + spec.label() + " seed " + std::to_string(s) + ": soft acc " +
           fmt(run.rows["soft"].accuracy) + ", greedy reward " + fmt(run.rows["greedy"].reward_mean) + " (" +
           fmt(secs, "%.0f") + " s)");
      out->push_back(std::move(run));
    }
  }
  return *suite;
}

std::vector<double> column(const std::vector<ImitationRun>& runs, const std::string& mode, bool reward) {
  std::vector<double> v;
  for (const auto& r : runs) {
    const auto& row = r.rows.at(mode);
    v.push_back(reward ? row.reward_mean : row.accuracy);
  }
  return v;
}

json columns_json(const std::vector<ImitationRun>& runs) {
  json j;
  for (const auto& [mode, row] : runs.front().rows) {
    j[mode] = {{"accuracy", column(runs, mode, false)}, {"reward", column(runs, mode, true)}};
  }
  return j;
}

// ---- criterion 2 ------------------------------------------------------------------------

Outcome imitation_fidelity(json& log) {
  const auto& s = imitation_suite();
  const auto cdt_acc = column(s.cdt, "soft", false);
  const auto cdt_rew = column(s.cdt, "greedy", true);
  const auto sdt_acc = column(s.sdt, "soft", false);
  const auto sdt_rew = column(s.sdt, "greedy", true);
  auto all_full = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double r) { return r >= kFullReward - kRewardEps; });
  };
  const bool ok = mean(cdt_acc) >= kSoftAccuracyMin && all_full(cdt_rew) && mean(sdt_acc) >= kSoftAccuracyMin &&
                  all_full(sdt_rew);
  log["cdt-1+2"] = columns_json(s.cdt);
  log["sdt-3"] = columns_json(s.sdt);
  return {ok ? Verdict::pass : Verdict::fail,
          "CDT 1+2 soft acc " + fmt(mean(cdt_acc)) + " greedy reward " + list(cdt_rew) + "; SDT d3 soft acc " +
              fmt(mean(sdt_acc)) + " greedy reward " + list(sdt_rew)};
}

// ---- criterion 3 ------------------------------------------------------------------------

Outcome discretization_gap(json& log) {
  const auto& s = imitation_suite();
  const double sdt_acc = mean(column(s.sdt, "discretized", false));
  const double sdt_rew = mean(column(s.sdt, "discretized", true));
  const double f_acc = mean(column(s.cdt, "F", false));
  const double f_rew = mean(column(s.cdt, "F", true));
  const bool ok = sdt_acc >= kSdtDiscretizedAccLo && sdt_acc <= kSdtDiscretizedAccHi &&
                  sdt_rew < kSdtDiscretizedRewardMax && f_acc >= kCdtFOnlyAccuracyMin && f_rew >= kCdtFOnlyRewardMin;
  log["sdt_discretized"] = {{"accuracy", sdt_acc}, {"reward", sdt_rew}};
  log["cdt_f_only"] = {{"accuracy", f_acc}, {"reward", f_rew}};
  return {ok ? Verdict::pass : Verdict::fail, "SDT d3 discretized acc " + fmt(sdt_acc) + " reward " + fmt(sdt_rew) +
                                                  "; CDT 1+2 F-only acc " + fmt(f_acc) + " reward " + fmt(f_rew)};
}

// ---- RL runs shared by criteria 4 and 8 -----------------------------------------------

struct RlSummary {
  double best_smoothed = 0.0;
  int episodes_to_475 = -1;
};

RlSummary rl_run(const std::string& env, const ModelSpec& spec, int episodes, std::uint64_t seed) {
  static std::map<std::string, RlSummary> cache;
  const std::string key = env + "/" + spec.label() + "/" + std::to_string(episodes) + "/" + std::to_string(seed);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  PPOConfig cfg = ppo_preset(env);
  cfg.episodes = episodes;
  cfg.normalize = true;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = train_rl(env, spec, cfg, seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RlSummary s{r.best_smoothed, r.episodes_to(kCartPoleSolved)};
  note("rl " + env + " " + spec.label() + " seed " + std::to_string(seed) + ": best trailing mean " +
       fmt(s.best_smoothed) + ", episodes to 475 " + std::to_string(s.episodes_to_475) + " (" + fmt(secs, "%.0f") +
       " s)");
  cache[key] = s;
  return s;
}

std::vector<double> best_means(const std::string& env, const ModelSpec& spec, int episodes,
                               std::uint64_t first_seed = 0) {
  std::vector<double> v;
  for (int s = 0; s < kRlSeeds; ++s) v.push_back(rl_run(env, spec, episodes, first_seed + s).best_smoothed);
  return v;
}

std::size_t count_at_least(const std::vector<double>& v, double t) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [t](double x) { return x >= t; }));
}

// ---- criterion 4 ------------------------------------------------------------------------

Outcome rl_cartpole(json& log) {
  const auto cdt = best_means("cartpole", cdt_spec(2, 2, 2), kCartPoleEpisodes);
  const auto mlp = best_means("cartpole", mlp_spec(mlp_policy_hidden("cartpole")), kCartPoleEpisodes);
  const auto sdt = best_means("cartpole", sdt_spec(3), kCartPoleEpisodes);
  const bool ok = count_at_least(cdt, kCartPoleSolved) >= 2 && count_at_least(mlp, kCartPoleSolved) >= 2 &&
                  count_at_least(sdt, kSdtRlTarget) >= 1;
  log["cdt-2+2"] = cdt;
  log["mlp"] = mlp;
  log["sdt-3"] = sdt;
  return {ok ? Verdict::pass : Verdict::fail,
          "best 100-episode means CDT 2+2 " + list(cdt) + ", MLP " + list(mlp) + ", SDT d3 " + list(sdt)};
}

// ---- criterion 5 ------------------------------------------------------------------------

Outcome rl_mountaincar(json& log) {
  const auto spec = cdt_spec(2, 2, 1);
  auto first = best_means("mountaincar", spec, kMountainCarEpisodes, 0);
  log["seeds_0_2"] = first;
  auto hit = [](const std::vector<double>& v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return x > kMountainCarTarget; });
  };
  if (hit(first)) return {Verdict::pass, "best 100-episode means CDT 2+2 K=1 " + list(first)};
  note("mountaincar: no seed above " + fmt(kMountainCarTarget) + ", retrying with seeds 3-5");
  auto retry = best_means("mountaincar", spec, kMountainCarEpisodes, kRlSeeds);
  log["seeds_3_5"] = retry;
  return {hit(retry) ? Verdict::pass : Verdict::fail,
          "best 100-episode means CDT 2+2 K=1 " + list(first) + ", retry " + list(retry)};
}

// ---- criterion 6 ------------------------------------------------------------------------

Outcome stability_ordering(json& log) {
  const auto& s = imitation_suite();
  std::string detail;
  bool ok = true;
  for (const auto& [name, runs] : {std::pair<std::string, const std::vector<ImitationRun>*>{"SDT d3", &s.sdt},
                                   std::pair<std::string, const std::vector<ImitationRun>*>{"CDT 1+2", &s.cdt}}) {
    std::vector<WeightSet> ls;
    for (const auto& r : *runs) ls.push_back(weight_set(r.policy));
    std::vector<WeightSet> rs;
    for (const auto& p : random_agents(runs->front().policy, kRandomAgents, 0)) rs.push_back(weight_set(p));
    const auto st = stability(ls, rs);
    bool axioms = true;
    for (std::size_t i = 0; i < ls.size(); ++i) {
      axioms = axioms && std::abs(stability_distance(ls[i], ls[i])) <= kExactTol;
      for (std::size_t j = 0; j < ls.size(); ++j) {
        const double a = stability_distance(ls[i], ls[j]);
        axioms = axioms && a >= 0.0 && std::abs(a - stability_distance(ls[j], ls[i])) <= kExactTol;
      }
    }
    const bool ordered = st.learner_pairs.mean < st.random.mean;
    ok = ok && ordered && axioms;
    log[name] = {{"learner_pairs", st.learner_pairs.mean}, {"random_mean", st.random.mean},
                 {"random_std", st.random.std}, {"axioms", axioms}};
    detail += (detail.empty() ? "" : "; ") + name + " D(L,L') " + fmt(st.learner_pairs.mean) + " vs D(L,R) " +
              fmt(st.random.mean) + " +- " + fmt(st.random.std) + (axioms ? "" : " (axioms violated)");
  }
  return {ok ? Verdict::pass : Verdict::fail, detail};
}

// ---- criterion 7 ------------------------------------------------------------------------

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

template <class M>
void spread(M& m, std::mt19937_64& rng, double scale) {
  auto p = flatten(m);
  for (double& v : p) v = std::uniform_real_distribution<double>(-scale, scale)(rng);
  assign(m, std::span<const double>(p));
}

std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double scale) {
  std::vector<double> x(n);
  for (double& v : x) v = std::uniform_real_distribution<double>(-scale, scale)(rng);
  return x;
}

/// Cross-entropy of a random SDT or CDT; worst relative error of the tape gradient
/// against central differences over all parameters.
template <class M>
double tree_loss_gradient_error(M model, std::mt19937_64& rng) {
  spread(model, rng, 1.0);
  const auto x = uniform_vector(rng, input_dim(model), 1.5);
  const std::size_t target = rng() % model.outputs;
  const auto params = flatten(model);
  auto loss_at = [&](const std::vector<double>& p) {
    M m = model;
    assign(m, std::span<const double>(p));
    return -std::log(predict_soft(m, std::span<const double>(x))[target]);
  };
  Tape t;
  const auto lifted = lift(model, t);
  const Var loss = -log(predict_soft(lifted, std::span<const double>(x))[target]);
  const auto grad = gradient_of(lifted, t.backward(loss));
  double worst = std::abs(loss.value - loss_at(params));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto pp = params;
    auto pm = params;
    pp[i] += kFdStep;
    pm[i] -= kFdStep;
    worst = std::max(worst, rel_err(grad[i], (loss_at(pp) - loss_at(pm)) / (2 * kFdStep)));
  }
  return worst;
}

std::vector<double> gae_brute_force(const std::vector<Transition>& t, double gamma, double lambda, double bootstrap) {
  const std::size_t n = t.size();
  std::vector<double> delta(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double next = i + 1 < n ? t[i + 1].value : bootstrap;
    delta[i] = t[i].reward + (t[i].done ? 0.0 : gamma * next) - t[i].value;
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double w = 1.0;
    for (std::size_t j = i; j < n; ++j) {
      adv[i] += w * delta[j];
      if (t[j].done) break;
      w *= gamma * lambda;
    }
  }
  return adv;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome property_suites(json& log) {
  std::mt19937_64 rng(2024);
  std::vector<std::string> failed;

  double grad_worst = 0.0;
  for (int i = 0; i < kGradientExpressions; ++i) {
    Rng init(static_cast<std::uint64_t>(i));
    const std::size_t R = 1 + rng() % 4;
    const std::size_t O = 2 + rng() % 2;
    const double e = i % 2 == 0
                         ? tree_loss_gradient_error(make_sdt(R, O, 1 + static_cast<int>(rng() % 3), init), rng)
                         : tree_loss_gradient_error(make_cdt(R, 1 + rng() % 3, O, 1 + static_cast<int>(rng() % 2),
                                                             1 + static_cast<int>(rng() % 2), init),
                                                    rng);
    grad_worst = std::max(grad_worst, e);
  }
  log["gradient_worst_rel_err"] = grad_worst;
  if (!(grad_worst < kGradientRelErr)) failed.push_back("autodiff");

  double norm_worst = 0.0;
  {
    Rng init(1);
    auto sdt = make_sdt(4, 2, 4, init);
    auto cdt = make_cdt(4, 2, 2, 2, 3, init);
    spread(sdt, rng, 3.0);
    spread(cdt, rng, 3.0);
    for (int i = 0; i < kNormalizationInputs; ++i) {
      const auto x = uniform_vector(rng, 4, 5.0);
      const auto leaves = soft_forward(sdt.tree, std::span<const double>(x)).leaves();
      double s = 0.0;
      for (double p : leaves) s += p;
      norm_worst = std::max(norm_worst, std::abs(s - 1.0));
      const auto outer = soft_forward(cdt.features, std::span<const double>(x)).leaves();
      double joint = 0.0;
      for (std::size_t u1 = 0; u1 < outer.size(); ++u1) {
        const auto f = leaf_features(cdt.features.leaves[u1], std::span<const double>(x));
        for (double p2 : soft_forward(cdt.decisions, std::span<const double>(f)).leaves()) joint += outer[u1] * p2;
      }
      norm_worst = std::max(norm_worst, std::abs(joint - 1.0));
    }
  }
  log["normalization_worst"] = norm_worst;
  if (!(norm_worst <= kNormalizationTol)) failed.push_back("normalization");

  double proj_worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng init(static_cast<std::uint64_t>(500 + trial));
    auto m = make_cdt(5, 3, 2, 2, 3, init);
    spread(m, rng, 2.0);
    const auto x = uniform_vector(rng, 5, 3.0);
    for (std::size_t u1 = 0; u1 < m.features.leaves.size(); ++u1) {
      const auto rows = effective_weights(m, u1);
      const auto f = leaf_features(m.features.leaves[u1], std::span<const double>(x));
      for (std::size_t u = 0; u < rows.size(); ++u) {
        double two_stage = m.decisions.nodes[u].bias;
        for (std::size_t k = 0; k < 3; ++k) two_stage += m.decisions.nodes[u].weights[k] * f[k];
        double direct = rows[u][5];
        for (std::size_t r = 0; r < 5; ++r) direct += rows[u][r] * x[r];
        proj_worst = std::max(proj_worst, std::abs(direct - two_stage));
      }
    }
  }
  log["backprojection_worst"] = proj_worst;
  if (!(proj_worst <= kExactTol)) failed.push_back("back-projection");

  double gae_worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Transition> t(1 + rng() % 12);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (auto& s : t) {
      s.reward = u(rng);
      s.value = u(rng);
      s.done = rng() % 7 == 0;
    }
    const double gamma = 0.5 + 0.5 * std::uniform_real_distribution<double>()(rng);
    const double lambda = 0.5 + 0.5 * std::uniform_real_distribution<double>()(rng);
    const double bootstrap = u(rng);
    const auto a = gae(t, gamma, lambda, bootstrap);
    const auto oracle = gae_brute_force(t, gamma, lambda, bootstrap);
    for (std::size_t i = 0; i < t.size(); ++i) gae_worst = std::max(gae_worst, std::abs(a.advantages[i] - oracle[i]));
  }
  log["gae_worst"] = gae_worst;
  if (!(gae_worst <= kExactTol)) failed.push_back("gae");

  bool idempotent = true;
  for (int trial = 0; trial < 20; ++trial) {
    Rng init(static_cast<std::uint64_t>(900 + trial));
    auto s = make_sdt(4, 2, 3, init);
    auto c = make_cdt(4, 2, 2, 2, 2, init);
    spread(s, rng, 2.0);
    spread(c, rng, 2.0);
    const auto s1 = discretize(s);
    idempotent = idempotent && flatten(discretize(s1)) == flatten(s1);
    for (DiscretizeMode m : {DiscretizeMode::cdt_f_only, DiscretizeMode::cdt_d_only, DiscretizeMode::cdt_f_and_d}) {
      const auto c1 = discretize(c, m);
      const auto c2 = discretize(c1, m);
      idempotent = idempotent && flatten(c2) == flatten(c1);
      for (int i = 0; i < 5 && idempotent; ++i) {
        const auto x = uniform_vector(rng, 4, 2.0);
        idempotent = predict_soft(c1, std::span<const double>(x)) == predict_soft(c2, std::span<const double>(x));
      }
    }
  }
  log["discretization_idempotent"] = idempotent;
  if (!idempotent) failed.push_back("idempotence");

  bool metric = true;
  {
    std::vector<WeightSet> sets;
    for (int i = 0; i < 6; ++i) {
      Rng init(static_cast<std::uint64_t>(1200 + i));
      auto m = make_cdt(4, 2, 2, 1, 2, init);
      spread(m, rng, 2.0);
      Policy p;
      p.spec = cdt_spec(1, 2, 2);
      p.model = m;
      sets.push_back(weight_set(p));
    }
    for (const auto& a : sets) {
      metric = metric && stability_distance(a, a) == 0.0;
      for (const auto& b : sets) metric = metric && stability_distance(a, b) == stability_distance(b, a);
    }
  }
  log["stability_metric"] = metric;
  if (!metric) failed.push_back("stability metric");

  bool deterministic = true;
  {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / ("cdt-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(root);
    const json imitate = {{"command", "imitate"},
                          {"model", {{"family", "cdt"}, {"d1", 1}, {"d2", 2}, {"K", 2}}},
                          {"hyperparameters", {{"episodes", 20}, {"epochs", 3}, {"batch_size", 256}, {"eval_episodes", 3}}},
                          {"seeds", {1, 2}}};
    const json rl = {{"command", "rl"}, {"model", {{"family", "sdt"}, {"depth", 2}}},
                     {"hyperparameters", {{"episodes", 30}}}, {"seeds", {5}}};
    for (const auto& [spec, files] :
         {std::pair{imitate, std::vector<std::string>{"seed-1/report.csv", "seed-2/report.csv", "seed-1/training.csv"}},
          std::pair{rl, std::vector<std::string>{"curve.csv"}}}) {
      std::vector<fs::path> dirs;
      for (const char* run_name : {"a", "b"}) {
        json j = spec;
        j["output"] = (root / (spec["command"].get<std::string>() + "-" + run_name)).string();
        dirs.push_back(run(parse_experiment_spec(j)).output_dir);
      }
      for (const auto& f : files) {
        const auto a = slurp(dirs[0] / f);
        deterministic = deterministic && !a.empty() && a == slurp(dirs[1] / f);
      }
    }
    fs::remove_all(root);
  }
  log["deterministic"] = deterministic;
  if (!deterministic) failed.push_back("determinism");

  std::string detail = "grad rel err " + fmt(grad_worst, "%.2e") + ", normalization " + fmt(norm_worst, "%.1e") +
                       ", back-projection " + fmt(proj_worst, "%.1e") + ", GAE " + fmt(gae_worst, "%.1e") +
                       ", idempotence, metric axioms, byte-identical reports";
  if (!failed.empty()) {
    detail += "; failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty() ? Verdict::pass : Verdict::fail, detail};
}

// ---- criterion 8 ------------------------------------------------------------------------

Outcome depth_trend(json& log) {
  std::vector<double> medians;
  std::string detail;
  for (const auto& [d1, d2] : {std::pair{1, 1}, std::pair{1, 2}, std::pair{2, 2}}) {
    std::vector<double> eps;
    for (int s = 0; s < kRlSeeds; ++s) {
      const int e = rl_run("cartpole", cdt_spec(d1, d2, 2), kCartPoleEpisodes, static_cast<std::uint64_t>(s))
                        .episodes_to_475;
      eps.push_back(e < 0 ? static_cast<double>(kCartPoleEpisodes) : static_cast<double>(e));
    }
    std::sort(eps.begin(), eps.end());
    medians.push_back(eps[eps.size() / 2]);
    const std::string name = std::to_string(d1) + "+" + std::to_string(d2);
    log[name] = eps;
    detail += (detail.empty() ? "" : ", ") + name + " " + fmt(medians.back(), "%.0f");
  }
  const bool ok = std::is_sorted(medians.rbegin(), medians.rend());
  return {ok ? Verdict::pass : Verdict::warn,
          "median episodes to 475 (" + std::to_string(kCartPoleEpisodes) + " = never): " + detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria: one PASS/FAIL line each"};
  std::vector<int> only;
  std::string json_out;
  bool quiet = false;
  app.add_option("--criteria", only, "Run only these criteria (1-8)")->delimiter(',')->check(CLI::Range(1, 8));
  app.add_option("--json", json_out, "Write measured values to this file");
  app.add_flag("-q,--quiet", quiet, "No progress on stderr");
  CLI11_PARSE(app, argc, argv);
  if (quiet) progress = nullptr;

  const std::vector<std::pair<std::string, Outcome (*)(json&)>> criteria = {
      {"parameter counts", param_counts},     {"imitation fidelity", imitation_fidelity},
      {"discretization gap", discretization_gap}, {"RL CartPole", rl_cartpole},
      {"RL MountainCar", rl_mountaincar},     {"stability ordering", stability_ordering},
      {"property suites", property_suites},   {"depth trend", depth_trend},
  };
  const std::set<int> selected(only.begin(), only.end());
  json measured;
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    json log;
    try {
      o = criteria[i].second(log);
    } catch (const std::exception& e) {
      o = {Verdict::fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log["seconds"] = secs;
    measured[std::to_string(id)] = log;
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::warn ? "WARN" : "FAIL";
    failures += o.verdict == Verdict::fail;
    std::cout << tag << " " << id << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    out << measured.dump(2) << '\n';
  }
  return failures == 0 ? 0 : 1;
}
