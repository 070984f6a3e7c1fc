// cdt: command-line front end. Every subcommand builds an experiment spec from
// its flags and executes it, so each invocation leaves a replayable manifest.

#include <CLI11.hpp>

#include <iostream>
#include <memory>

#include "cdt/experiment.hpp"

using namespace cdt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitSpec = 2;
constexpr int kExitNumeric = 3;

class Binder {
 public:
  explicit Binder(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& flags, const std::string& section, const std::string& key,
                      const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* o = app_->add_option(flags, *value, help);
    apply_.push_back([o, value, section, key](json& j) {
      if (o->count() > 0) target(j, section)[key] = *value;
    });
    return o;
  }

  CLI::Option* flag(const std::string& flags, const std::string& section, const std::string& key,
                    const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* o = app_->add_flag(flags, *value, help);
    apply_.push_back([o, value, section, key](json& j) {
      if (o->count() > 0) target(j, section)[key] = *value;
    });
    return o;
  }

  void seeds() {
    auto value = std::make_shared<std::vector<std::uint64_t>>();
    CLI::Option* o = app_->add_option("--seed", *value, "Seed; repeat or list several for a multi-seed run")
                         ->delimiter(',');
    apply_.push_back([o, value](json& j) {
      if (o->count() > 0) j["seeds"] = *value;
    });
  }

  void model_flags(const std::string& family_flag) {
    option<std::string>(family_flag, "model", "family", "Model family: sdt, cdt or mlp");
    option<int>("--depth", "model", "depth", "SDT depth");
    option<int>("--d1", "model", "d1", "CDT feature-tree depth");
    option<int>("--d2", "model", "d2", "CDT decision-tree depth");
    option<int>("--K", "model", "K", "CDT intermediate feature count");
    option<int>("--hidden", "model", "hidden", "MLP hidden width");
  }

  void common(bool with_env) {
    if (with_env) option<std::string>("--env", "", "env", "cartpole or mountaincar");
    option<std::string>("--output-dir", "", "output", "Directory for outputs (relative to $CDT_OUTPUT_ROOT when set)");
    option<std::string>("--manifest", "outputs", "manifest", "Manifest path");
  }

  void fill(json& j) const {
    for (const auto& f : apply_) f(j);
  }

 private:
  static json& target(json& j, const std::string& section) { return section.empty() ? j : j[section]; }

  CLI::App* app_;
  std::vector<std::function<void(json&)>> apply_;
};

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Binder> binder;
  std::string primary;  // output key whose path names the default manifest
  std::shared_ptr<std::string> base = std::make_shared<std::string>();
};

Command& add_command(std::vector<Command>& cmds, CLI::App& root, const std::string& name, const std::string& help,
                     const std::string& primary) {
  Command c;
  c.app = root.add_subcommand(name, help);
  c.binder = std::make_unique<Binder>(c.app);
  c.primary = primary;
  c.app->add_option("--spec", *c.base, "Base spec or manifest JSON; flags override its fields");
  cmds.push_back(std::move(c));
  return cmds.back();
}

void print_summary(const RunResult& r) {
  for (const auto& s : r.summaries) std::cout << s.dump() << '\n';
  std::cout << "manifest: " << r.manifest.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft and cascading decision tree policies: imitation, PPO, discretization and explanation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  std::vector<Command> cmds;
  cmds.reserve(16);

  {
    auto& c = add_command(cmds, app, "imitate", "Train an SDT/CDT imitator of the heuristic teacher", "model");
    auto& b = *c.binder;
    b.common(true);
    b.model_flags("--family");
    b.seeds();
    b.option<int>("--episodes", "hyperparameters", "episodes", "Teacher episodes in the dataset");
    b.option<int>("--epochs", "hyperparameters", "epochs", "Training epochs");
    b.option<int>("--batch-size", "hyperparameters", "batch_size", "Minibatch size");
    b.option<double>("--lr", "hyperparameters", "lr", "Adam learning rate");
    b.option<double>("--holdout", "hyperparameters", "holdout", "Held-out fraction");
    b.flag("--normalize", "hyperparameters", "normalize", "z-score states with training-split statistics");
    b.option<int>("--eval-episodes", "hyperparameters", "eval_episodes", "Episodes per reward estimate");
    b.option<int>("--dataset-seed", "hyperparameters", "dataset_seed", "Seed of the generated teacher dataset");
    b.option<std::string>("--dataset", "inputs", "dataset", "Existing dataset CSV instead of generating one");
    b.option<std::string>("--out", "outputs", "model", "Model JSON");
    b.option<std::string>("--report", "outputs", "report", "Fidelity report CSV");
    b.option<std::string>("--curve", "outputs", "curve", "Per-epoch training CSV");
  }
  {
    auto& c = add_command(cmds, app, "rl", "Train a policy with PPO", "model");
    auto& b = *c.binder;
    b.common(true);
    b.model_flags("--policy,--family");
    b.seeds();
    b.option<int>("--episodes", "hyperparameters", "episodes", "Training episodes");
    b.option<double>("--lr", "hyperparameters", "lr", "Adam learning rate");
    b.option<double>("--gamma", "hyperparameters", "gamma", "Discount factor");
    b.option<double>("--lambda", "hyperparameters", "lambda", "GAE lambda");
    b.option<double>("--clip", "hyperparameters", "clip", "PPO clip epsilon");
    b.option<int>("--iterations", "hyperparameters", "iterations", "Update passes per batch");
    b.option<int>("--value-hidden", "hyperparameters", "value_hidden", "Value network hidden width");
    b.option<int>("--horizon", "hyperparameters", "horizon", "Maximum steps per update batch");
    b.flag("--normalize", "hyperparameters", "normalize", "z-score states with teacher-rollout statistics");
    b.option<int>("--normalizer-episodes", "hyperparameters", "normalizer_episodes", "Rollouts for the normalizer");
    b.option<std::string>("--out", "outputs", "model", "Best-checkpoint model JSON");
    b.option<std::string>("--final-out", "outputs", "final_model", "Final model JSON");
    b.option<std::string>("--curve", "outputs", "curve", "Learning curve CSV");
  }
  {
    auto& c = add_command(cmds, app, "discretize", "Harden the soft nodes of a model", "model");
    auto& b = *c.binder;
    b.common(false);
    b.option<std::string>("--model", "inputs", "model", "Model JSON")->required();
    b.option<std::string>("--mode", "hyperparameters", "mode", "discretized (SDT) or F, D, F+D (CDT)");
    b.option<std::string>("--out", "outputs", "model", "Output model JSON");
  }
  {
    auto& c = add_command(cmds, app, "evaluate", "Accuracy and reward of a saved model", "report");
    auto& b = *c.binder;
    b.common(true);
    b.seeds();
    b.option<std::string>("--model", "inputs", "model", "Model JSON")->required();
    b.option<std::string>("--dataset", "inputs", "dataset", "Dataset CSV; its last 10% is scored");
    b.option<int>("--episodes", "hyperparameters", "episodes", "Teacher episodes when generating the dataset");
    b.option<int>("--dataset-seed", "hyperparameters", "dataset_seed", "Seed of the generated dataset");
    b.option<double>("--holdout", "hyperparameters", "holdout", "Held-out fraction");
    b.option<int>("--eval-episodes", "hyperparameters", "eval_episodes", "Episodes per reward estimate");
    b.option<std::string>("--report", "outputs", "report", "Report CSV");
  }
  {
    auto& c = add_command(cmds, app, "explain", "Per-step feature importance along an episode", "importance");
    auto& b = *c.binder;
    b.common(true);
    b.seeds();
    b.option<std::string>("--model", "inputs", "model", "Model JSON")->required();
    b.option<std::string>("--episode", "inputs", "episode", "States CSV (dataset layout); default: one greedy rollout");
    b.option<std::string>("--method", "hyperparameters", "method", "path-sum, confidence, gradient or all");
    b.option<std::string>("--out", "outputs", "importance", "Importance CSV");
    b.option<std::string>("--global", "outputs", "global", "Episode-mean importance CSV");
  }
  {
    auto& c = add_command(cmds, app, "stability", "Weight-set distances between trained models", "stability");
    auto& b = *c.binder;
    b.common(false);
    b.seeds();
    b.option<std::vector<std::string>>("--models", "inputs", "models", "Two or more model JSON files")->required();
    b.option<int>("--random", "hyperparameters", "random", "Random agents for D(L,R)");
    b.option<std::string>("--out", "outputs", "stability", "Pairwise distances CSV");
    b.option<std::string>("--summary", "outputs", "summary", "Mean/std summary CSV");
  }
  {
    auto& c = add_command(cmds, app, "params", "Parameter counts and the CDT/SDT ratio sweep", "counts");
    auto& b = *c.binder;
    b.common(false);
    b.model_flags("--family");
    b.option<int>("--R", "hyperparameters", "R", "Raw input dimension");
    b.option<int>("--O", "hyperparameters", "O", "Output dimension");
    b.option<int>("--features", "hyperparameters", "K", "Intermediate feature count for the sweep");
    b.option<int>("--min-depth", "hyperparameters", "min_depth", "Sweep start depth");
    b.option<int>("--max-depth", "hyperparameters", "max_depth", "Sweep end depth");
    b.option<std::string>("--out", "outputs", "counts", "Counts CSV");
    b.option<std::string>("--sweep", "outputs", "sweep", "Sweep CSV");
  }
  {
    auto& c = add_command(cmds, app, "export-dot", "Graphviz rendering of a tree model", "dot");
    auto& b = *c.binder;
    b.common(false);
    b.option<std::string>("--model", "inputs", "model", "Model JSON")->required();
    b.option<std::vector<double>>("--input", "inputs", "input", "Raw state, comma separated")->delimiter(',');
    b.option<std::string>("--out", "outputs", "dot", "DOT file");
  }
  {
    auto& c = add_command(cmds, app, "dataset", "Write a heuristic-teacher dataset", "dataset");
    auto& b = *c.binder;
    b.common(true);
    b.seeds();
    b.option<int>("--episodes", "hyperparameters", "episodes", "Teacher episodes");
    b.option<std::string>("--out", "outputs", "dataset", "Dataset CSV");
  }

  CLI::App* run_cmd = app.add_subcommand("run", "Execute an experiment spec or replay a manifest");
  std::string spec_path;
  std::string run_output;
  std::vector<std::uint64_t> run_seeds;
  run_cmd->add_option("spec", spec_path, "Spec or manifest JSON")->required();
  run_cmd->add_option("--output-dir", run_output, "Override the spec's output directory");
  run_cmd->add_option("--seed", run_seeds, "Override the spec's seeds")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitSpec;
  }

  RunOptions opts;
  if (!quiet) opts.log = &std::cerr;
  try {
    ExperimentSpec spec;
    if (run_cmd->parsed()) {
      spec = load_experiment_spec(spec_path);
      if (!run_output.empty()) spec.output = run_output;
      if (!run_seeds.empty()) spec.seeds = run_seeds;
    } else {
      for (const auto& c : cmds) {
        if (!c.app->parsed()) continue;
        json j = {{"command", c.app->get_name()}};
        if (!c.base->empty()) {
          j = to_json(load_experiment_spec(*c.base));
          if (j["command"] != c.app->get_name()) {
            throw SpecError("command: spec '" + *c.base + "' is for '" + j["command"].get<std::string>() + "'");
          }
        }
        c.binder->fill(j);
        if (!j.contains("outputs") || !j["outputs"].contains("manifest")) {
          if (j.contains("outputs") && j["outputs"].contains(c.primary)) {
            j["outputs"]["manifest"] = j["outputs"][c.primary].get<std::string>() + ".manifest.json";
          }
        }
        spec = parse_experiment_spec(j);
      }
    }
    print_summary(run(spec, opts));
    return kExitOk;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSpec;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSpec;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DegenerateNodeError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
