#pragma once

// Experiment specs (JSON mirroring the CLI flags) and the runner that turns one
// spec into an artifact directory with a replayable manifest.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cdt/dot_export.hpp"
#include "cdt/explain.hpp"
#include "cdt/imitation.hpp"
#include "cdt/params.hpp"
#include "cdt/ppo.hpp"
#include "cdt/serialization.hpp"

namespace cdt {

#ifdef CDT_VERSION
inline constexpr const char* kVersion = CDT_VERSION;
#else
inline constexpr const char* kVersion = "0.1.0";
#endif
inline constexpr const char* kOutputRootVar = "CDT_OUTPUT_ROOT";

struct ExperimentSpec {
  std::string command;
  std::string env = "cartpole";
  ModelSpec model;
  json hyperparameters = json::object();
  std::vector<std::uint64_t> seeds{0};
  std::string output = ".";
  json inputs = json::object();
  json outputs = json::object();
};

namespace detail {

struct CommandShape {
  const char* name;
  std::vector<const char*> hyper;
  std::vector<const char*> inputs;
  std::vector<const char*> outputs;
};

inline const std::vector<CommandShape>& command_shapes() {
  static const std::vector<CommandShape> shapes = {
      {"imitate",
       {"episodes", "epochs", "batch_size", "lr", "holdout", "normalize", "eval_episodes", "dataset_seed"},
       {"dataset"},
       {"model", "report", "curve", "manifest"}},
      {"rl",
       {"episodes", "lr", "gamma", "lambda", "clip", "iterations", "value_hidden", "horizon", "normalize",
        "normalizer_episodes"},
       {},
       {"model", "final_model", "curve", "manifest"}},
      {"evaluate",
       {"episodes", "dataset_seed", "holdout", "eval_episodes"},
       {"model", "dataset"},
       {"report", "manifest"}},
      {"discretize", {"mode"}, {"model"}, {"model", "manifest"}},
      {"explain", {"method"}, {"model", "episode"}, {"importance", "global", "manifest"}},
      {"stability", {"random"}, {"models"}, {"stability", "summary", "manifest"}},
      {"params", {"R", "K", "O", "min_depth", "max_depth"}, {}, {"counts", "sweep", "manifest"}},
      {"export-dot", {}, {"model", "input"}, {"dot", "manifest"}},
      {"dataset", {"episodes"}, {}, {"dataset", "manifest"}},
  };
  return shapes;
}

inline const CommandShape& command_shape(const std::string& name, const std::string& path) {
  for (const auto& s : command_shapes()) {
    if (name == s.name) return s;
  }
  std::string known;
  for (const auto& s : command_shapes()) known += std::string(known.empty() ? "" : ", ") + s.name;
  fields::fail(path, "unknown command '" + name + "' (expected one of " + known + ")");
}

inline void check_names(const json& j, const std::string& path, const std::vector<const char*>& allowed) {
  if (!j.is_object()) fields::fail(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) fields::fail(fields::join(path, it.key()), "unknown field");
  }
}

}  // namespace detail

inline json model_spec_json(const ModelSpec& m) {
  return {{"family", to_string(m.family)}, {"depth", m.depth},     {"d1", m.feature_depth},
          {"d2", m.decision_depth},       {"K", m.features},      {"hidden", m.hidden}};
}

inline ModelSpec parse_model_spec(const json& j, const std::string& path) {
  fields::check_keys(j, path, {}, {"family", "depth", "d1", "d2", "K", "hidden"});
  ModelSpec m;
  if (j.contains("family")) {
    try {
      m.family = parse_family(fields::string(j["family"], fields::join(path, "family")));
    } catch (const std::invalid_argument& e) {
      fields::fail(fields::join(path, "family"), e.what());
    }
  }
  if (j.contains("depth")) m.depth = static_cast<int>(fields::integer_in(j["depth"], fields::join(path, "depth"), 1, 20));
  if (j.contains("d1")) m.feature_depth = static_cast<int>(fields::integer_in(j["d1"], fields::join(path, "d1"), 1, 20));
  if (j.contains("d2")) m.decision_depth = static_cast<int>(fields::integer_in(j["d2"], fields::join(path, "d2"), 1, 20));
  if (j.contains("K")) m.features = static_cast<std::size_t>(fields::integer_in(j["K"], fields::join(path, "K"), 1, 1 << 16));
  if (j.contains("hidden")) {
    m.hidden = static_cast<std::size_t>(fields::integer_in(j["hidden"], fields::join(path, "hidden"), 1, 1 << 16));
  }
  return m;
}

inline json to_json(const ExperimentSpec& s) {
  json seeds = json::array();
  for (auto v : s.seeds) seeds.push_back(v);
  return {{"command", s.command},
          {"env", s.env},
          {"model", model_spec_json(s.model)},
          {"hyperparameters", s.hyperparameters},
          {"seeds", seeds},
          {"output", s.output},
          {"inputs", s.inputs},
          {"outputs", s.outputs}};
}

/// Strict parse; unknown fields anywhere are rejected by path.
inline ExperimentSpec parse_experiment_spec(const json& j) {
  fields::check_keys(j, "", {"command"}, {"env", "model", "hyperparameters", "seeds", "output", "inputs", "outputs"});
  ExperimentSpec s;
  s.command = fields::string(j["command"], "command");
  const auto& shape = detail::command_shape(s.command, "command");
  if (j.contains("env")) {
    s.env = fields::string(j["env"], "env");
    try {
      s.env = canonical_env_name(s.env);
    } catch (const std::invalid_argument& e) {
      fields::fail("env", e.what());
    }
  }
  if (j.contains("model")) s.model = parse_model_spec(j["model"], "model");
  if (j.contains("hyperparameters")) {
    detail::check_names(j["hyperparameters"], "hyperparameters", shape.hyper);
    s.hyperparameters = j["hyperparameters"];
  }
  if (j.contains("seeds")) {
    const json& seeds = j["seeds"];
    if (!seeds.is_array() || seeds.empty()) fields::fail("seeds", "expected a non-empty array of seeds");
    s.seeds.clear();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      s.seeds.push_back(fields::unsigned_integer(seeds[i], fields::join("seeds", i)));
    }
  }
  if (j.contains("output")) s.output = fields::string(j["output"], "output");
  if (j.contains("inputs")) {
    detail::check_names(j["inputs"], "inputs", shape.inputs);
    s.inputs = j["inputs"];
  }
  if (j.contains("outputs")) {
    detail::check_names(j["outputs"], "outputs", shape.outputs);
    for (auto it = j["outputs"].begin(); it != j["outputs"].end(); ++it) {
      fields::string(it.value(), fields::join("outputs", it.key()));
    }
    s.outputs = j["outputs"];
  }
  return s;
}

/// Accepts a spec file or a run manifest (whose "spec" field is replayed).
inline ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError(path + ": cannot open spec file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SpecError(path + ": invalid JSON: " + e.what());
  }
  try {
    if (j.is_object() && j.contains("spec") && j.contains("manifest_version")) return parse_experiment_spec(j["spec"]);
    return parse_experiment_spec(j);
  } catch (const SpecError& e) {
    throw SpecError(path + ": " + e.what());
  }
}

inline std::string spec_hash(const ExperimentSpec& s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(fnv1a(to_json(s).dump())));
  return buf;
}

// ---- artifact staging ---------------------------------------------------------------

/// Files are written under temporary names and renamed on commit; on abort the
/// temporaries and any directories this run created are removed.
class ArtifactStage {
 public:
  ArtifactStage() = default;
  ArtifactStage(const ArtifactStage&) = delete;
  ArtifactStage& operator=(const ArtifactStage&) = delete;
  ~ArtifactStage() {
    if (!committed_) abort();
  }

  /// Temporary path to write for final destination `path`.
  std::string stage(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    for (const auto& f : finals_) {
      if (f == path) throw SpecError("two artifacts would be written to '" + path.string() + "'");
    }
    make_parents(path);
    const fs::path tmp = path.string() + ".partial";
    temps_.push_back(tmp);
    finals_.push_back(path);
    return tmp.string();
  }

  void commit() {
    for (std::size_t i = 0; i < temps_.size(); ++i) std::filesystem::rename(temps_[i], finals_[i]);
    committed_ = true;
  }

  void abort() noexcept {
    std::error_code ec;
    for (const auto& t : temps_) std::filesystem::remove(t, ec);
    for (auto it = created_.rbegin(); it != created_.rend(); ++it) std::filesystem::remove(*it, ec);  // only if empty
    temps_.clear();
    finals_.clear();
    created_.clear();
    committed_ = true;
  }

  const std::vector<std::filesystem::path>& finals() const { return finals_; }

 private:
  void make_parents(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    std::vector<fs::path> missing;
    for (fs::path p = path.parent_path(); !p.empty() && !fs::exists(p); p = p.parent_path()) missing.push_back(p);
    for (auto it = missing.rbegin(); it != missing.rend(); ++it) {
      fs::create_directory(*it);
      created_.push_back(*it);
    }
  }

  std::vector<std::filesystem::path> temps_;
  std::vector<std::filesystem::path> finals_;
  std::vector<std::filesystem::path> created_;
  bool committed_ = false;
};

inline std::filesystem::path resolve_output_dir(const std::string& output) {
  std::filesystem::path p(output.empty() ? "." : output);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutputRootVar); root != nullptr && *root != '\0') {
      p = std::filesystem::path(root) / p;
    }
  }
  return p.lexically_normal();
}

struct RunOptions {
  std::ostream* log = nullptr;  // progress lines; null for quiet
};

struct RunResult {
  std::filesystem::path output_dir;
  std::filesystem::path manifest;
  json summaries = json::array();  // one object per seed
};

namespace detail {

class SpecReader {
 public:
  SpecReader(const ExperimentSpec& s) : spec_(s) {}

  const json* hyper(const char* key) const {
    return spec_.hyperparameters.contains(key) ? &spec_.hyperparameters[key] : nullptr;
  }
  double real(const char* key, double fallback) const {
    const json* j = hyper(key);
    return j ? fields::number(*j, fields::join("hyperparameters", key)) : fallback;
  }
  std::int64_t integer(const char* key, std::int64_t fallback, std::int64_t lo, std::int64_t hi) const {
    const json* j = hyper(key);
    return j ? fields::integer_in(*j, fields::join("hyperparameters", key), lo, hi) : fallback;
  }
  bool flag(const char* key, bool fallback) const {
    const json* j = hyper(key);
    return j ? fields::boolean(*j, fields::join("hyperparameters", key)) : fallback;
  }
  std::string text(const char* key, const std::string& fallback) const {
    const json* j = hyper(key);
    return j ? fields::string(*j, fields::join("hyperparameters", key)) : fallback;
  }
  std::string input_path(const char* key, bool required) const {
    if (!spec_.inputs.contains(key)) {
      if (required) fields::fail(fields::join("inputs", key), "missing required input for '" + spec_.command + "'");
      return {};
    }
    return fields::string(spec_.inputs[key], fields::join("inputs", key));
  }

 private:
  const ExperimentSpec& spec_;
};

struct SeedContext {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  ArtifactStage* stage = nullptr;
  const ExperimentSpec* spec = nullptr;
  json artifacts = json::array();
  std::ostream* log = nullptr;

  std::string path(const char* name, const std::string& fallback) {
    std::filesystem::path p = dir / fallback;
    if (spec->outputs.contains(name)) {
      const std::filesystem::path given(spec->outputs[name].get<std::string>());
      if (given.is_absolute() && spec->seeds.size() > 1) {
        fields::fail(fields::join("outputs", name), "absolute paths are not allowed with several seeds");
      }
      p = given.is_absolute() ? given : dir / given;
    }
    p = p.lexically_normal();
    artifacts.push_back({{"name", name}, {"path", p.string()}});
    return stage->stage(p);
  }

  template <class F>
  void write(const char* name, const std::string& fallback, F&& writer) {
    const std::string tmp = path(name, fallback);
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    writer(out);
    out.flush();
    if (!out) throw std::runtime_error("failed writing '" + tmp + "'");
  }

  ModelMetadata metadata() const { return ModelMetadata{seed, "", spec->env, spec->command}; }
};

inline void check_model_env(const Policy& p, const std::string& env_name) {
  auto env = make_env(env_name);
  if (p.inputs() != env->state_dim() || p.outputs() != env->action_count()) {
    throw SpecError("model has " + std::to_string(p.inputs()) + " inputs and " + std::to_string(p.outputs()) +
                    " outputs but " + env->name() + " has " + std::to_string(env->state_dim()) + " and " +
                    std::to_string(env->action_count()));
  }
}

inline json fidelity_json(const std::vector<FidelityReport>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"mode", r.mode},
                   {"accuracy", r.accuracy},
                   {"reward_mean", r.reward_mean},
                   {"reward_std", r.reward_std},
                   {"params", r.params}});
  }
  return out;
}

inline void write_epoch_csv(std::ostream& out, const std::vector<EpochStats>& curve) {
  out << "epoch,train_loss,holdout_accuracy\n";
  for (const auto& e : curve) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.holdout_accuracy) << '\n';
  }
}

inline Split holdout_split(const SpecReader& r, const ExperimentSpec& spec, int default_episodes) {
  const std::string dataset = r.input_path("dataset", false);
  const double holdout = r.real("holdout", 0.1);
  if (!(holdout > 0.0 && holdout < 1.0)) fields::fail("hyperparameters.holdout", "must lie in (0, 1)");
  Dataset d;
  if (!dataset.empty()) {
    d = read_dataset(dataset);
  } else {
    const int episodes = static_cast<int>(r.integer("episodes", default_episodes, 1, 1000000));
    const auto dseed = static_cast<std::uint64_t>(r.integer("dataset_seed", 0, 0, INT64_MAX));
    d = generate_teacher_dataset(spec.env, episodes, dseed);
  }
  return split_holdout(d, holdout);
}

inline json run_imitate(const ExperimentSpec& spec, SeedContext& ctx) {
  const SpecReader r(spec);
  ImitationConfig cfg;
  cfg.model = spec.model;
  cfg.seed = ctx.seed;
  cfg.dataset_episodes = static_cast<int>(r.integer("episodes", cfg.dataset_episodes, 1, 1000000));
  cfg.epochs = static_cast<int>(r.integer("epochs", cfg.epochs, 1, 1000000));
  cfg.batch_size = static_cast<std::size_t>(r.integer("batch_size", static_cast<std::int64_t>(cfg.batch_size), 1, 1 << 30));
  cfg.learning_rate = r.real("lr", cfg.learning_rate);
  cfg.holdout = r.real("holdout", cfg.holdout);
  cfg.normalize = r.flag("normalize", cfg.normalize);
  const int eval_episodes = static_cast<int>(r.integer("eval_episodes", 100, 1, 1000000));
  cfg.validate();
  const Split split = holdout_split(r, spec, cfg.dataset_episodes);
  if (split.train.state_dim != make_env(spec.env)->state_dim()) {
    throw SpecError("dataset state dimension does not match environment " + spec.env);
  }
  const auto result = train_imitator(split.train, split.test, cfg);
  if (ctx.log) {
    *ctx.log << "seed " << ctx.seed << ": held-out accuracy " << result.curve.back().holdout_accuracy << "\n";
  }
  const auto rows = fidelity_table(result.policy, split.test, spec.env, eval_episodes, ctx.seed);
  ctx.write("model", "model.json", [&](std::ostream& o) { o << model_to_string(result.policy, ctx.metadata()); });
  ctx.write("report", "report.csv", [&](std::ostream& o) { write_fidelity_csv(o, rows); });
  ctx.write("curve", "training.csv", [&](std::ostream& o) { write_epoch_csv(o, result.curve); });
  return {{"fidelity", fidelity_json(rows)}};
}

inline json run_rl(const ExperimentSpec& spec, SeedContext& ctx) {
  const SpecReader r(spec);
  PPOConfig cfg = ppo_preset(spec.env);
  cfg.episodes = static_cast<int>(r.integer("episodes", cfg.episodes, 1, 100000000));
  cfg.learning_rate = r.real("lr", cfg.learning_rate);
  cfg.gamma = r.real("gamma", cfg.gamma);
  cfg.lambda = r.real("lambda", cfg.lambda);
  cfg.clip = r.real("clip", cfg.clip);
  cfg.update_iterations = static_cast<int>(r.integer("iterations", cfg.update_iterations, 1, 100000));
  cfg.value_hidden = static_cast<std::size_t>(r.integer("value_hidden", static_cast<std::int64_t>(cfg.value_hidden), 1, 1 << 16));
  cfg.horizon = static_cast<int>(r.integer("horizon", cfg.horizon, 1, 100000000));
  cfg.normalize = r.flag("normalize", cfg.normalize);
  cfg.normalizer_episodes = static_cast<int>(r.integer("normalizer_episodes", cfg.normalizer_episodes, 1, 1000000));
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw SpecError(std::string("hyperparameters: ") + e.what());
  }
  ModelSpec model = spec.model;
  const int every = std::max(1, cfg.episodes / 20);
  std::function<void(const CurvePoint&)> progress;
  if (ctx.log) {
    progress = [&](const CurvePoint& p) {
      if ((p.episode + 1) % every == 0) {
        *ctx.log << "seed " << ctx.seed << " episode " << p.episode + 1 << ": trailing mean " << p.smoothed << "\n";
      }
    };
  }
  const auto result = train_rl(spec.env, model, cfg, ctx.seed, progress);
  ctx.write("model", "model.json", [&](std::ostream& o) { o << model_to_string(result.best_policy, ctx.metadata()); });
  ctx.write("final_model", "final-model.json",
            [&](std::ostream& o) { o << model_to_string(result.final_policy, ctx.metadata()); });
  ctx.write("curve", "curve.csv", [&](std::ostream& o) { write_curve_csv(o, result.curve); });
  return {{"best_smoothed", result.best_smoothed},
          {"best_episode", result.best_episode},
          {"final_smoothed", result.final_smoothed()},
          {"episodes_to_475", result.episodes_to(475.0)}};
}

inline json run_evaluate(const ExperimentSpec& spec, SeedContext& ctx) {
  const SpecReader r(spec);
  const auto file = load_model(r.input_path("model", true));
  check_model_env(file.policy, spec.env);
  const int eval_episodes = static_cast<int>(r.integer("eval_episodes", 100, 1, 1000000));
  const Split split = holdout_split(r, spec, 1000);
  std::vector<FidelityReport> rows;
  if (file.policy.mode == DiscretizeMode::none) {
    rows = fidelity_table(file.policy, split.test, spec.env, eval_episodes, ctx.seed);
  } else {
    rows.push_back(evaluate(file.policy, split.test, spec.env, eval_episodes, ctx.seed, Inference::greedy,
                            to_string(file.policy.mode)));
  }
  ctx.write("report", "report.csv", [&](std::ostream& o) { write_fidelity_csv(o, rows); });
  return {{"fidelity", fidelity_json(rows)}};
}

inline json run_discretize(const ExperimentSpec& spec, SeedContext& ctx) {
  const SpecReader r(spec);
  const auto file = load_model(r.input_path("model", true));
  const std::string default_mode = std::holds_alternative<Sdt<double>>(file.policy.model) ? "discretized" : "F+D";
  DiscretizeMode mode;
  try {
    mode = parse_discretize_mode(r.text("mode", default_mode));
  } catch (const std::invalid_argument& e) {
    fields::fail("hyperparameters.mode", e.what());
  }
  Policy out;
  try {
    out = discretized(file.policy, mode);
  } catch (const std::invalid_argument& e) {
    throw SpecError(e.what());
  }
  std::string suffix = to_string(mode);
  for (char& c : suffix) c = c == '+' ? '-' : c;
  ModelMetadata meta = file.metadata;
  meta.created.clear();
  meta.command = "discretize";
  ctx.write("model", "model-" + suffix + ".json", [&](std::ostream& o) { o << model_to_string(out, meta); });
  return {{"mode", to_string(mode)}, {"params", out.parameters()}};
}

/// One greedy rollout of the policy when no state file is supplied.
inline std::vector<std::vector<double>> episode_states(const SpecReader& r, const Policy& p,
                                                       const std::string& env_name, std::uint64_t seed) {
  const std::string path = r.input_path("episode", false);
  if (!path.empty()) {
    auto d = read_dataset(path);
    if (d.state_dim != p.inputs()) throw SpecError(path + ": state dimension does not match the model");
    return std::move(d.states);
  }
  check_model_env(p, env_name);
  const auto d = generate_dataset(env_name, [&](std::span<const double> s) { return p.act(s, Inference::greedy); }, 1,
                                  SeedStreams(seed));
  return d.states;
}

inline json run_explain(const ExperimentSpec& spec, SeedContext& ctx) {
  const SpecReader r(spec);
  const auto file = load_model(r.input_path("model", true));
  const Policy& p = file.policy;
  if (std::holds_alternative<Mlp<double>>(p.model)) throw SpecError("explain needs an sdt or cdt model");
  const std::string method = r.text("method", "all");
  std::vector<ImportanceMethod> methods;
  if (method == "all") {
    methods = {ImportanceMethod::path_sum, ImportanceMethod::confidence};
    if (p.mode == DiscretizeMode::none) methods.push_back(ImportanceMethod::gradient);
  } else {
    try {
      methods = {parse_importance_method(method)};
    } catch (const std::invalid_argument& e) {
      fields::fail("hyperparameters.method", e.what());
    }
    if (methods.front() == ImportanceMethod::gradient && p.mode != DiscretizeMode::none) {
      throw SpecError("gradient importance is unsupported for discretized models (mode " + to_string(p.mode) + ")");
    }
  }
  const auto states = episode_states(r, p, spec.env, ctx.seed);
  if (states.empty()) throw SpecError("explain: the episode has no states");
  std::vector<std::vector<std::vector<double>>> local(methods.size());
  for (const auto& s : states) {
    for (std::size_t m = 0; m < methods.size(); ++m) local[m].push_back(importance(p, s, methods[m]));
  }
  auto header = [&](std::ostream& o, const char* first) {
    o << first;
    for (std::size_t k = 0; k < p.inputs(); ++k) o << ",I_" << k;
    o << '\n';
  };
  ctx.write("importance", "importance.csv", [&](std::ostream& o) {
    header(o, "timestep,method");
    for (std::size_t t = 0; t < states.size(); ++t) {
      for (std::size_t m = 0; m < methods.size(); ++m) {
        o << t << ',' << to_string(methods[m]);
        for (double v : local[m][t]) o << ',' << format_double(v);
        o << '\n';
      }
    }
  });
  json global = json::object();
  ctx.write("global", "importance-global.csv", [&](std::ostream& o) {
    header(o, "method");
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto g = importance_global(local[m]);
      global[to_string(methods[m])] = g;
      o << to_string(methods[m]);
      for (double v : g) o << ',' << format_double(v);
      o << '\n';
    }
  });
  return {{"timesteps", states.size()}, {"global", global}};
}

inline json run_stability(const ExperimentSpec& spec, SeedContext& ctx) {
  const SpecReader r(spec);
  if (!spec.inputs.contains("models")) fields::fail("inputs.models", "missing required input for 'stability'");
  const json& list = spec.inputs["models"];
  if (!list.is_array() || list.size() < 2) fields::fail("inputs.models", "expected at least two model paths");
  std::vector<Policy> learners;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < list.size(); ++i) {
    names.push_back(fields::string(list[i], fields::join("inputs.models", i)));
    learners.push_back(load_model(names.back()).policy);
    if (learners.back().spec.label() != learners.front().spec.label() ||
        learners.back().inputs() != learners.front().inputs()) {
      throw SpecError(names.back() + ": architecture differs from " + names.front());
    }
  }
  if (std::holds_alternative<Mlp<double>>(learners.front().model)) throw SpecError("stability needs tree models");
  const auto count = static_cast<std::size_t>(r.integer("random", 10, 1, 100000));
  const auto randoms = random_agents(learners.front(), count, ctx.seed);
  std::vector<WeightSet> ls;
  std::vector<WeightSet> rs;
  for (const auto& p : learners) ls.push_back(weight_set(p));
  for (const auto& p : randoms) rs.push_back(weight_set(p));
  const auto result = stability(ls, rs);
  ctx.write("stability", "stability.csv", [&](std::ostream& o) {
    o << "kind,a,b,distance\n";
    std::size_t k = 0;
    for (std::size_t i = 0; i < ls.size(); ++i) {
      for (std::size_t j = i + 1; j < ls.size(); ++j) {
        o << "learner," << names[i] << ',' << names[j] << ',' << format_double(result.pair_distances[k++]) << '\n';
      }
    }
    k = 0;
    for (std::size_t i = 0; i < ls.size(); ++i) {
      for (std::size_t j = 0; j < rs.size(); ++j) {
        o << "random," << names[i] << ",random-" << j << ',' << format_double(result.random_distances[k++]) << '\n';
      }
    }
  });
  ctx.write("summary", "stability-summary.csv", [&](std::ostream& o) {
    o << "metric,mean,std,count\n";
    o << "D(L;L')," << format_double(result.learner_pairs.mean) << ',' << format_double(result.learner_pairs.std)
      << ',' << result.pair_distances.size() << '\n';
    o << "D(L;R)," << format_double(result.random.mean) << ',' << format_double(result.random.std) << ','
      << result.random_distances.size() << '\n';
  });
  return {{"learner_pairs_mean", result.learner_pairs.mean},
          {"random_mean", result.random.mean},
          {"random_std", result.random.std}};
}

inline json run_params(const ExperimentSpec& spec, SeedContext& ctx) {
  const SpecReader r(spec);
  const auto R = r.integer("R", 8, 1, 1 << 20);
  const auto K = r.integer("K", 4, 1, 1 << 20);
  const auto O = r.integer("O", 4, 1, 1 << 20);
  const int lo = static_cast<int>(r.integer("min_depth", 2, 2, 20));
  const int hi = static_cast<int>(r.integer("max_depth", 20, 2, 20));
  if (lo > hi) fields::fail("hyperparameters.min_depth", "must not exceed max_depth");
  ArchitectureConfig c;
  c.family = spec.model.family;
  if (c.family == Family::mlp) throw SpecError("params: model.family must be sdt or cdt");
  c.inputs = R;
  c.features = K;
  c.outputs = O;
  c.depth = spec.model.depth;
  c.feature_depth = spec.model.feature_depth;
  c.decision_depth = spec.model.decision_depth;
  const std::vector<DiscretizeMode> modes =
      c.family == Family::sdt
          ? std::vector<DiscretizeMode>{DiscretizeMode::none, DiscretizeMode::sdt}
          : std::vector<DiscretizeMode>{DiscretizeMode::none, DiscretizeMode::cdt_f_only, DiscretizeMode::cdt_d_only,
                                        DiscretizeMode::cdt_f_and_d};
  json counts = json::object();
  ctx.write("counts", "params.csv", [&](std::ostream& o) {
    o << "model,mode,params\n";
    for (DiscretizeMode m : modes) {
      c.mode = m;
      const auto n = param_count(c);
      counts[to_string(m)] = n;
      o << spec.model.label() << ',' << to_string(m) << ',' << n << '\n';
    }
  });
  ctx.write("sweep", "params-sweep.csv", [&](std::ostream& o) {
    o << "depth,d1,d2,cdt_params,sdt_params,ratio\n";
    for (const auto& row : param_ratio_sweep(R, K, O, lo, hi)) {
      o << row.depth << ',' << row.feature_depth << ',' << row.decision_depth << ',' << row.cdt_params << ','
        << row.sdt_params << ',' << format_double(row.ratio) << '\n';
    }
  });
  return {{"counts", counts}};
}

inline json run_export_dot(const ExperimentSpec& spec, SeedContext& ctx) {
  const SpecReader r(spec);
  const auto file = load_model(r.input_path("model", true));
  std::optional<std::vector<double>> input;
  if (spec.inputs.contains("input")) input = fields::vector(spec.inputs["input"], "inputs.input", file.policy.inputs());
  std::vector<DotGraph> graphs;
  try {
    graphs = export_dot(file.policy, input);
  } catch (const std::invalid_argument& e) {
    throw SpecError(e.what());
  }
  ctx.write("dot", "model.dot", [&](std::ostream& o) { o << dot_text(graphs); });
  return {{"graphs", graphs.size()}};
}

inline json run_dataset(const ExperimentSpec& spec, SeedContext& ctx) {
  const SpecReader r(spec);
  const int episodes = static_cast<int>(r.integer("episodes", 1000, 1, 1000000));
  const auto d = generate_teacher_dataset(spec.env, episodes, ctx.seed);
  ctx.write("dataset", "dataset.csv", [&](std::ostream& o) { write_dataset(o, d); });
  return {{"rows", d.size()}};
}

inline json run_command(const ExperimentSpec& spec, SeedContext& ctx) {
  const std::string& c = spec.command;
  if (c == "imitate") return run_imitate(spec, ctx);
  if (c == "rl") return run_rl(spec, ctx);
  if (c == "evaluate") return run_evaluate(spec, ctx);
  if (c == "discretize") return run_discretize(spec, ctx);
  if (c == "explain") return run_explain(spec, ctx);
  if (c == "stability") return run_stability(spec, ctx);
  if (c == "params") return run_params(spec, ctx);
  if (c == "export-dot") return run_export_dot(spec, ctx);
  if (c == "dataset") return run_dataset(spec, ctx);
  fields::fail("command", "unknown command '" + c + "'");
}

}  // namespace detail

/// Executes every seed of `spec`. Outputs appear only if all seeds succeed.
/// Several seeds write to <output>/seed-<n>/; one seed writes to <output>/.
inline RunResult run(const ExperimentSpec& spec, const RunOptions& opts = {}) {
  const auto started = std::chrono::steady_clock::now();
  const std::string created = creation_timestamp();
  RunResult result;
  result.output_dir = resolve_output_dir(spec.output);
  ArtifactStage stage;
  json artifacts = json::array();
  for (std::uint64_t seed : spec.seeds) {
    detail::SeedContext ctx;
    ctx.seed = seed;
    ctx.spec = &spec;
    ctx.stage = &stage;
    ctx.log = opts.log;
    ctx.dir = spec.seeds.size() > 1 ? result.output_dir / ("seed-" + std::to_string(seed)) : result.output_dir;
    json summary = detail::run_command(spec, ctx);
    summary["seed"] = seed;
    result.summaries.push_back(std::move(summary));
    for (auto& a : ctx.artifacts) {
      a["seed"] = seed;
      artifacts.push_back(std::move(a));
    }
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json seeds = json::array();
  for (auto s : spec.seeds) seeds.push_back(s);
  const json manifest = {{"manifest_version", 1},
                         {"version", kVersion},
                         {"spec", to_json(spec)},
                         {"spec_hash", spec_hash(spec)},
                         {"seeds", seeds},
                         {"created", created},
                         {"wall_time_seconds", wall},
                         {"artifacts", artifacts},
                         {"results", result.summaries}};
  std::filesystem::path mpath = result.output_dir / "manifest.json";
  if (spec.outputs.contains("manifest")) {
    const std::filesystem::path given(spec.outputs["manifest"].get<std::string>());
    mpath = given.is_absolute() ? given : result.output_dir / given;
  }
  result.manifest = mpath.lexically_normal();
  {
    std::ofstream out(stage.stage(result.manifest), std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing manifest '" + result.manifest.string() + "'");
  }
  stage.commit();
  return result;
}

}  // namespace cdt
