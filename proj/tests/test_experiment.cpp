#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cdt/experiment.hpp"

using namespace cdt;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("cdt-exp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t file_count(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

json small_imitation(const fs::path& out) {
  return {{"command", "imitate"},
          {"env", "cartpole"},
          {"model", {{"family", "cdt"}, {"d1", 1}, {"d2", 2}, {"K", 2}}},
          {"hyperparameters", {{"episodes", 8}, {"epochs", 2}, {"batch_size", 128}, {"eval_episodes", 2}}},
          {"seeds", {3}},
          {"output", out.string()}};
}

std::string spec_error(const json& j) {
  try {
    parse_experiment_spec(j);
  } catch (const SpecError& e) {
    return e.what();
  }
  return "";
}

int cli(const std::string& args) {
  const std::string cmd = std::string(CDT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Spec, UnknownFieldIsRejectedByName) {
  EXPECT_NE(spec_error({{"command", "params"}, {"colour", 1}}).find("colour"), std::string::npos);
  EXPECT_NE(spec_error({{"command", "imitate"}, {"hyperparameters", {{"epoch", 3}}}}).find("hyperparameters.epoch"),
            std::string::npos);
  EXPECT_NE(spec_error({{"command", "imitate"}, {"model", {{"family", "cdt"}, {"d3", 1}}}}).find("model.d3"),
            std::string::npos);
  EXPECT_NE(spec_error({{"command", "params"}, {"outputs", {{"model", "m.json"}}}}).find("outputs.model"),
            std::string::npos);
  EXPECT_NE(spec_error({{"command", "train"}}).find("command"), std::string::npos);
  EXPECT_NE(spec_error({{"command", "rl"}, {"seeds", {1, -2}}}).find("seeds[1]"), std::string::npos);
  EXPECT_NE(spec_error({{"env", "cartpole"}}).find("command"), std::string::npos);
}

TEST(Spec, JsonRoundTripAndHash) {
  const auto spec = parse_experiment_spec(small_imitation("/tmp/x"));
  const auto back = parse_experiment_spec(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));
  EXPECT_EQ(spec_hash(back), spec_hash(spec));
  EXPECT_EQ(spec_hash(spec).rfind("fnv1a64:", 0), 0u);
  auto other = spec;
  other.hyperparameters["epochs"] = 3;
  EXPECT_NE(spec_hash(other), spec_hash(spec));
}

TEST(Run, IdenticalSpecAndSeedGiveByteIdenticalReports) {
  TempDir tmp;
  const auto a = run(parse_experiment_spec(small_imitation(tmp.path() / "a")));
  const auto b = run(parse_experiment_spec(small_imitation(tmp.path() / "b")));
  for (const char* f : {"report.csv", "training.csv"}) {
    const auto x = slurp(a.output_dir / f);
    ASSERT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b.output_dir / f)) << f;
  }
  const auto report = slurp(a.output_dir / "report.csv");
  EXPECT_EQ(report.substr(0, report.find('\n')), "mode,accuracy,reward_mean,reward_std,params");
  for (const char* mode : {"\nsoft,", "\nF,", "\nD,", "\nF+D,"}) EXPECT_NE(report.find(mode), std::string::npos);
}

TEST(Run, ManifestRecordsRunAndReplays) {
  TempDir tmp;
  const auto first = run(parse_experiment_spec(small_imitation(tmp.path() / "first")));
  ASSERT_TRUE(fs::exists(first.manifest));
  const json m = json::parse(slurp(first.manifest));
  EXPECT_EQ(m["version"], kVersion);
  EXPECT_EQ(m["seeds"], json::array({3}));
  EXPECT_EQ(m["spec_hash"], spec_hash(parse_experiment_spec(small_imitation(tmp.path() / "first"))));
  EXPECT_GE(m["wall_time_seconds"].get<double>(), 0.0);
  EXPECT_EQ(m["artifacts"].size(), 3u);

  auto replay = load_experiment_spec(first.manifest.string());
  replay.output = (tmp.path() / "replay").string();
  const auto second = run(replay);
  EXPECT_EQ(slurp(second.output_dir / "report.csv"), slurp(first.output_dir / "report.csv"));
  EXPECT_EQ(slurp(second.output_dir / "training.csv"), slurp(first.output_dir / "training.csv"));
}

TEST(Run, SeveralSeedsGetOwnDirectories) {
  TempDir tmp;
  json j = {{"command", "dataset"}, {"hyperparameters", {{"episodes", 2}}}, {"seeds", {1, 2}},
            {"output", (tmp.path() / "d").string()}};
  const auto r = run(parse_experiment_spec(j));
  EXPECT_TRUE(fs::exists(tmp.path() / "d" / "seed-1" / "dataset.csv"));
  EXPECT_TRUE(fs::exists(tmp.path() / "d" / "seed-2" / "dataset.csv"));
  EXPECT_NE(slurp(tmp.path() / "d" / "seed-1" / "dataset.csv"), slurp(tmp.path() / "d" / "seed-2" / "dataset.csv"));
  EXPECT_EQ(r.summaries.size(), 2u);
}

TEST(Run, FailedRunLeavesNoPartialOutputs) {
  TempDir tmp;
  // Second artifact collides with the first after the model has been staged.
  json j = small_imitation(tmp.path() / "nested" / "deeper");
  j["outputs"] = {{"model", "same.out"}, {"report", "same.out"}};
  EXPECT_THROW(run(parse_experiment_spec(j)), SpecError);
  EXPECT_FALSE(fs::exists(tmp.path() / "nested"));
  EXPECT_EQ(file_count(tmp.path()), 0u);

  json missing = {{"command", "evaluate"}, {"inputs", {{"model", (tmp.path() / "none.json").string()}}},
                  {"output", (tmp.path() / "eval").string()}};
  EXPECT_THROW(run(parse_experiment_spec(missing)), SpecError);
  EXPECT_FALSE(fs::exists(tmp.path() / "eval"));
}

TEST(Stage, AbortRemovesTemporariesAndCreatedDirectories) {
  TempDir tmp;
  {
    ArtifactStage stage;
    std::ofstream(stage.stage(tmp.path() / "a" / "b" / "x.csv")) << "1\n";
    std::ofstream(stage.stage(tmp.path() / "y.csv")) << "2\n";
    EXPECT_THROW(stage.stage(tmp.path() / "y.csv"), SpecError);
  }
  EXPECT_FALSE(fs::exists(tmp.path() / "a"));
  EXPECT_EQ(file_count(tmp.path()), 0u);

  ArtifactStage stage;
  std::ofstream(stage.stage(tmp.path() / "z.csv")) << "3\n";
  EXPECT_FALSE(fs::exists(tmp.path() / "z.csv"));
  stage.commit();
  EXPECT_EQ(slurp(tmp.path() / "z.csv"), "3\n");
  EXPECT_EQ(file_count(tmp.path()), 1u);
}

TEST(Run, RelativeOutputIsResolvedUnderOutputRoot) {
  TempDir tmp;
  ::setenv(kOutputRootVar, tmp.path().c_str(), 1);
  json j = {{"command", "params"},
            {"model", {{"family", "cdt"}, {"d1", 2}, {"d2", 3}, {"K", 4}}},
            {"hyperparameters", {{"R", 8}, {"O", 4}}},
            {"output", "counts"}};
  const auto r = run(parse_experiment_spec(j));
  ::unsetenv(kOutputRootVar);
  EXPECT_EQ(r.output_dir, (tmp.path() / "counts").lexically_normal());
  const auto counts = slurp(tmp.path() / "counts" / "params.csv");
  EXPECT_NE(counts.find("cdt-2+3-k4,soft,222\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(tmp.path() / "counts" / "manifest.json"));
  EXPECT_EQ(resolve_output_dir((tmp.path() / "abs").string()), tmp.path() / "abs");
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  const std::string dir = tmp.path().string();
  EXPECT_EQ(cli("--version"), 0);
  EXPECT_EQ(cli("params -q --output-dir " + dir + "/p"), 0);
  EXPECT_TRUE(fs::exists(tmp.path() / "p" / "params.csv"));
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("params --colour red"), 2);

  {
    std::ofstream bad(tmp.path() / "bad.json");
    bad << R"({"command": "params", "colour": 1})";
  }
  EXPECT_EQ(cli("run " + dir + "/bad.json"), 2);
  EXPECT_EQ(cli("evaluate -q --model " + dir + "/missing.json --output-dir " + dir + "/e"), 2);
  EXPECT_FALSE(fs::exists(tmp.path() / "e"));

  {
    std::ofstream nan(tmp.path() / "nan.json");
    nan << json{{"command", "imitate"},
                {"model", {{"family", "sdt"}, {"depth", 2}}},
                {"hyperparameters", {{"episodes", 2}, {"epochs", 1}, {"batch_size", 64}, {"lr", 1e308}, {"eval_episodes", 1}}},
                {"output", dir + "/nan"}}
               .dump();
  }
  EXPECT_EQ(cli("run -q " + dir + "/nan.json"), 3);
  EXPECT_FALSE(fs::exists(tmp.path() / "nan"));
}

TEST(Cli, FlagsOverrideSpecFieldsAndManifestReplays) {
  TempDir tmp;
  const std::string dir = tmp.path().string();
  {
    std::ofstream base(tmp.path() / "base.json");
    base << json{{"command", "dataset"}, {"hyperparameters", {{"episodes", 5}}}, {"seeds", {4}}}.dump();
  }
  ASSERT_EQ(cli("dataset -q --spec " + dir + "/base.json --episodes 2 --output-dir " + dir + "/a"), 0);
  const json m = json::parse(slurp(tmp.path() / "a" / "manifest.json"));
  EXPECT_EQ(m["spec"]["hyperparameters"]["episodes"], 2);
  EXPECT_EQ(m["spec"]["seeds"], json::array({4}));
  ASSERT_EQ(cli("run -q " + dir + "/a/manifest.json --output-dir " + dir + "/b"), 0);
  EXPECT_EQ(slurp(tmp.path() / "a" / "dataset.csv"), slurp(tmp.path() / "b" / "dataset.csv"));
  EXPECT_EQ(cli("params -q --spec " + dir + "/base.json"), 2);
}
