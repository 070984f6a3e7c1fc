#include <gtest/gtest.h>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/graphviz.hpp>
#include <cstdlib>

#include "cdt/dot_export.hpp"
#include "cdt/parameters.hpp"
#include "cdt/serialization.hpp"

using namespace cdt;

namespace {

struct ParsedDot {
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::vector<std::string> labels;
  std::vector<std::string> edge_labels;
  std::vector<std::string> edge_styles;
};

ParsedDot parse_dot(const std::string& text) {
  using Graph = boost::adjacency_list<boost::vecS, boost::vecS, boost::directedS,
                                      boost::property<boost::vertex_name_t, std::string,
                                                      boost::property<boost::vertex_color_t, std::string>>,
                                      boost::property<boost::edge_name_t, std::string,
                                                      boost::property<boost::edge_color_t, std::string>>>;
  Graph g;
  boost::dynamic_properties dp(boost::ignore_other_properties);
  dp.property("node_id", get(boost::vertex_name, g));
  dp.property("label", get(boost::vertex_color, g));
  dp.property("label", get(boost::edge_name, g));
  dp.property("style", get(boost::edge_color, g));
  if (!boost::read_graphviz(text, g, dp, "node_id")) throw std::runtime_error("graphviz parse failed");
  ParsedDot out;
  out.vertices = num_vertices(g);
  out.edges = num_edges(g);
  for (auto v : boost::make_iterator_range(vertices(g))) out.labels.push_back(get(boost::vertex_color, g, v));
  for (auto e : boost::make_iterator_range(boost::edges(g))) {
    out.edge_labels.push_back(get(boost::edge_name, g, e));
    out.edge_styles.push_back(get(boost::edge_color, g, e));
  }
  return out;
}

Policy policy_of(ModelVariant m, ModelSpec spec) {
  Policy p;
  p.spec = spec;
  p.model = std::move(m);
  return p;
}

Policy sample_cdt(std::uint64_t seed) {
  Rng rng(seed);
  ModelSpec spec;
  spec.family = Family::cdt;
  return policy_of(make_cdt(4, 2, 2, 1, 2, rng), spec);
}

Policy sample_sdt(std::uint64_t seed, int depth = 3) {
  Rng rng(seed);
  ModelSpec spec;
  spec.family = Family::sdt;
  spec.depth = depth;
  return policy_of(make_sdt(4, 2, depth, rng), spec);
}

const ModelMetadata kMeta{7, "2020-01-01T00:00:00Z", "cartpole", "imitate"};

void expect_same_outputs(const Policy& a, const Policy& b) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x(a.inputs());
    for (double& v : x) v = u(g);
    EXPECT_EQ(a.distribution(x, Inference::soft), b.distribution(x, Inference::soft));
    EXPECT_EQ(a.distribution(x, Inference::greedy), b.distribution(x, Inference::greedy));
  }
}

json mutate(const Policy& p, const std::function<void(json&)>& f) {
  json j = model_to_json(p, kMeta);
  f(j);
  return j;
}

std::string spec_error(const json& j) {
  try {
    model_from_json(j);
  } catch (const SpecError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ModelJson, CdtRoundTripIsExact) {
  auto p = sample_cdt(1);
  p.normalizer.mean = {0.1, -0.2, 0.3, 1e-17};
  p.normalizer.stdev = {1.5, 0.25, 3.0, 0.1};
  const auto text = model_to_string(p, kMeta);
  const auto back = parse_model(text);
  EXPECT_EQ(flatten(std::get<Cdt<double>>(back.policy.model)), flatten(std::get<Cdt<double>>(p.model)));
  EXPECT_EQ(back.policy.normalizer.mean, p.normalizer.mean);
  EXPECT_EQ(back.policy.normalizer.stdev, p.normalizer.stdev);
  EXPECT_EQ(back.policy.spec.label(), p.spec.label());
  EXPECT_EQ(back.metadata.seed, 7u);
  EXPECT_EQ(back.metadata.env, "cartpole");
  EXPECT_EQ(model_to_string(back.policy, back.metadata), text);
  expect_same_outputs(p, back.policy);
}

TEST(ModelJson, DiscretizedAndMlpRoundTrip) {
  for (DiscretizeMode m : {DiscretizeMode::cdt_f_only, DiscretizeMode::cdt_d_only, DiscretizeMode::cdt_f_and_d}) {
    const auto p = discretized(sample_cdt(2), m);
    const auto back = parse_model(model_to_string(p, kMeta));
    EXPECT_EQ(back.policy.mode, m);
    EXPECT_EQ(back.policy.parameters(), p.parameters());
    expect_same_outputs(p, back.policy);
  }
  const auto hard = discretized(sample_sdt(3), DiscretizeMode::sdt);
  expect_same_outputs(hard, parse_model(model_to_string(hard, kMeta)).policy);

  Rng rng(4);
  ModelSpec spec;
  spec.family = Family::mlp;
  spec.hidden = 8;
  const auto mlp = policy_of(make_policy_mlp(4, 8, 2, rng), spec);
  const auto back = parse_model(model_to_string(mlp, kMeta));
  EXPECT_EQ(flatten(std::get<Mlp<double>>(back.policy.model)), flatten(std::get<Mlp<double>>(mlp.model)));
  EXPECT_EQ(back.policy.spec.hidden, 8u);
}

TEST(ModelJson, LayoutUsesLayerAndIndex) {
  const json j = model_to_json(sample_sdt(5, 2), kMeta);
  ASSERT_EQ(j["nodes"].size(), 3u);
  EXPECT_EQ(j["nodes"][2]["layer"], 1);
  EXPECT_EQ(j["nodes"][2]["index"], 1);
  EXPECT_EQ(j["leaves"].size(), 4u);
  EXPECT_TRUE(j["normalization"].is_null());
  EXPECT_EQ(j["dims"]["R"], 4);
  EXPECT_EQ(j["depths"]["d"], 2);

  const json h = model_to_json(discretized(sample_sdt(5, 2), DiscretizeMode::sdt), kMeta);
  EXPECT_TRUE(h["nodes"][0].contains("feature_index"));
  EXPECT_TRUE(h["nodes"][0].contains("direction"));
  EXPECT_FALSE(h["nodes"][0].contains("weights"));
}

TEST(ModelJson, CreatedHonoursSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
  EXPECT_EQ(creation_timestamp(), "1970-01-02T00:00:00Z");
  const json j = model_to_json(sample_sdt(1), ModelMetadata{3, "", "", ""});
  EXPECT_EQ(j["metadata"]["created"], "1970-01-02T00:00:00Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
}

TEST(ModelJson, RejectsMalformedDocumentsNamingTheField) {
  const auto p = sample_cdt(6);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j["colour"] = 1; })).find("colour: unknown field"), std::string::npos);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j.erase("dims"); })).find("dims"), std::string::npos);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j["nodes"][1]["weights"].push_back(1.0); })).find("nodes[1].weights"),
            std::string::npos);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j["nodes"].erase(2); })).find("missing D node"), std::string::npos);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j["leaves"][0]["transform"][0][0] = "x"; })).find("transform[0][0]"),
            std::string::npos);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j["nodes"][0]["tree"] = "sdt"; })).find("nodes[0].tree"),
            std::string::npos);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j["mode"] = "discretized"; })).find("mode"), std::string::npos);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j["normalization"] = {{"mean", {0, 0, 0, 0}}, {"std", {1, 0, 1, 1}}}; }))
                .find("normalization.std[1]"),
            std::string::npos);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j["metadata"]["seed"] = -1; })).find("metadata.seed"),
            std::string::npos);
  EXPECT_NE(spec_error(mutate(p, [](json& j) { j["dims"]["K"] = 3; })).find(".weights: expected 3 entries"), std::string::npos);
  EXPECT_THROW(parse_model("{not json"), SpecError);
  EXPECT_THROW(load_model("/nonexistent/model.json"), SpecError);

  auto nan = sample_sdt(7);
  std::get<Sdt<double>>(nan.model).tree.node(1).bias = std::nan("");
  EXPECT_THROW(model_to_json(nan, kMeta), NumericFailure);
}

TEST(Dot, Depth1SdtHasThreeNodesTwoEdges) {
  const auto g = export_dot(sample_sdt(1, 1));
  ASSERT_EQ(g.size(), 1u);
  const auto parsed = parse_dot(g[0].text);
  EXPECT_EQ(parsed.vertices, 3u);
  EXPECT_EQ(parsed.edges, 2u);
}

TEST(Dot, CdtHasTwoParsableGraphs) {
  const auto p = sample_cdt(2);
  const auto g = export_dot(p, std::vector<double>{0.1, 0.2, -0.1, 0.3});
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].name, "F");
  EXPECT_EQ(g[1].name, "D");
  const auto f = parse_dot(g[0].text);
  const auto d = parse_dot(g[1].text);
  EXPECT_EQ(f.vertices, 3u);
  EXPECT_EQ(d.vertices, 7u);
  EXPECT_EQ(d.edges, 6u);
  // Solid edges trace exactly one root-to-leaf path.
  std::size_t solid = 0;
  for (const auto& s : d.edge_styles) solid += s == "solid";
  EXPECT_EQ(solid, 2u);
  for (const auto& l : d.edge_labels) {
    const double v = std::stod(l);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(export_dot(p, std::vector<double>{0.1}), std::invalid_argument);
}

TEST(Dot, HardNodeLabel) {
  Sdt<double> m;
  m.outputs = 2;
  m.tree.depth = 1;
  m.tree.input_dim = 3;
  m.tree.nodes.push_back(SplitNode<double>{{0.0, -0.9, 0.1}, 0.3, std::nullopt});
  m.tree.leaves = {DistributionLeaf<double>{{0.0, 1.0}}, DistributionLeaf<double>{{1.0, 0.0}}};
  ModelSpec spec;
  spec.family = Family::sdt;
  spec.depth = 1;
  const auto hard = discretized(policy_of(m, spec), DiscretizeMode::sdt);
  const auto parsed = parse_dot(export_dot(hard)[0].text);
  EXPECT_NE(std::find(parsed.labels.begin(), parsed.labels.end(), "x[1] < 0.333"), parsed.labels.end());
}

TEST(Dot, RecordLabelsSurviveParsing) {
  const auto p = sample_sdt(9, 2);
  const auto text = dot_text(export_dot(p));
  EXPECT_NE(text.find("shape=record"), std::string::npos);
  EXPECT_NE(text.find("action"), std::string::npos);
  const auto parsed = parse_dot(text);
  EXPECT_EQ(parsed.vertices, 7u);
  Rng rng(1);
  ModelSpec spec;
  spec.family = Family::mlp;
  EXPECT_THROW(export_dot(policy_of(make_policy_mlp(4, 4, 2, rng), spec)), std::invalid_argument);
}
