#pragma once

// Model files: one JSON document per policy, layout in schema/model.schema.json.

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "cdt/json_fields.hpp"
#include "cdt/policy.hpp"

namespace cdt {

using nlohmann::json;

struct ModelMetadata {
  std::uint64_t seed = 0;
  std::string created;
  std::string env;
  std::string command;
};

struct ModelFile {
  Policy policy;
  ModelMetadata metadata;
};

/// UTC timestamp from SOURCE_DATE_EPOCH when set, else the wall clock.
inline std::string creation_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != nullptr && *end == '\0' && v >= 0) t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline std::size_t node_id(std::size_t layer, std::size_t index) { return (std::size_t{1} << layer) + index; }

template <template <class> class Leaf>
void write_nodes(const SoftTree<double, Leaf>& tree, const char* role, json& out) {
  for (std::size_t u = 1; u <= tree.nodes.size(); ++u) {
    const auto& n = tree.node(u);
    const std::size_t layer = layer_of(u) - 1;  // root is layer 0
    json j;
    j["tree"] = role;
    j["layer"] = layer;
    j["index"] = u - (std::size_t{1} << layer);
    if (n.hard) {
      j["feature_index"] = n.hard->feature;
      j["threshold"] = n.hard->threshold;
      j["direction"] = n.hard->left_if_greater ? ">" : "<";
      if (!std::isfinite(n.hard->threshold)) throw NumericFailure("cannot serialize non-finite threshold");
    } else {
      j["weights"] = fields::number_array(n.weights, std::string(role) + " node weights");
      j["bias"] = fields::number_array({n.bias}, "node bias")[0];
    }
    out.push_back(std::move(j));
  }
}

inline void write_leaves(const SoftTree<double, DistributionLeaf>& tree, const char* role, json& out) {
  for (std::size_t i = 0; i < tree.leaves.size(); ++i) {
    out.push_back(json{{"tree", role}, {"index", i}, {"logits", fields::number_array(tree.leaves[i].logits, "logits")}});
  }
}

inline void write_leaves(const SoftTree<double, FeatureLeaf>& tree, const char* role, json& out) {
  for (std::size_t i = 0; i < tree.leaves.size(); ++i) {
    const auto& l = tree.leaves[i];
    out.push_back(json{{"tree", role}, {"index", i}, {"transform", fields::matrix_array(l.transform, l.rows, l.cols, "transform")}});
  }
}

inline SplitNode<double> read_node(const json& j, const std::string& path, std::size_t dim) {
  SplitNode<double> n;
  if (j.contains("direction")) {
    fields::check_keys(j, path, {"tree", "layer", "index", "feature_index", "threshold", "direction"});
    HardSplit h;
    h.feature = static_cast<std::size_t>(
        fields::integer_in(j["feature_index"], fields::join(path, "feature_index"), 0, static_cast<std::int64_t>(dim) - 1));
    h.threshold = fields::number(j["threshold"], fields::join(path, "threshold"));
    const std::string dir = fields::string(j["direction"], fields::join(path, "direction"));
    if (dir != ">" && dir != "<") fields::fail(fields::join(path, "direction"), "expected \">\" or \"<\"");
    h.left_if_greater = dir == ">";
    n.hard = h;
  } else {
    fields::check_keys(j, path, {"tree", "layer", "index", "weights", "bias"});
    n.weights = fields::vector(j["weights"], fields::join(path, "weights"), dim);
    n.bias = fields::number(j["bias"], fields::join(path, "bias"));
  }
  return n;
}

template <template <class> class Leaf>
SoftTree<double, Leaf> read_tree_nodes(const json& nodes, const std::string& role, int depth, std::size_t dim) {
  SoftTree<double, Leaf> tree;
  tree.depth = depth;
  tree.input_dim = dim;
  const std::size_t count = (std::size_t{1} << depth) - 1;
  std::vector<std::optional<SplitNode<double>>> slots(count);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const json& j = nodes[i];
    const std::string path = fields::join("nodes", i);
    if (fields::string(fields::at(j, path, "tree"), fields::join(path, "tree")) != role) continue;
    const auto layer = static_cast<std::size_t>(fields::integer_in(fields::at(j, path, "layer"), fields::join(path, "layer"), 0, depth - 1));
    const auto index = static_cast<std::size_t>(
        fields::integer_in(fields::at(j, path, "index"), fields::join(path, "index"), 0,
                           (std::int64_t{1} << layer) - 1));
    const std::size_t u = node_id(layer, index);
    if (slots[u - 1]) fields::fail(path, "duplicate " + role + " node at layer " + std::to_string(layer) + " index " + std::to_string(index));
    slots[u - 1] = read_node(j, path, dim);
  }
  for (std::size_t u = 1; u <= count; ++u) {
    if (!slots[u - 1]) fields::fail("nodes", "missing " + role + " node " + std::to_string(u));
    tree.nodes.push_back(std::move(*slots[u - 1]));
  }
  return tree;
}

template <class MakeLeaf>
auto read_tree_leaves(const json& leaves, const std::string& role, int depth, MakeLeaf&& make) {
  using L = decltype(make(json{}, std::string{}));
  const std::size_t count = std::size_t{1} << depth;
  std::vector<std::optional<L>> slots(count);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const json& j = leaves[i];
    const std::string path = fields::join("leaves", i);
    if (fields::string(fields::at(j, path, "tree"), fields::join(path, "tree")) != role) continue;
    const auto index = static_cast<std::size_t>(
        fields::integer_in(fields::at(j, path, "index"), fields::join(path, "index"), 0,
                           static_cast<std::int64_t>(count) - 1));
    if (slots[index]) fields::fail(path, "duplicate " + role + " leaf " + std::to_string(index));
    slots[index] = make(j, path);
  }
  std::vector<L> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (!slots[i]) fields::fail("leaves", "missing " + role + " leaf " + std::to_string(i));
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

inline auto class_leaf_reader(std::size_t outputs) {
  return [outputs](const json& j, const std::string& path) {
    fields::check_keys(j, path, {"tree", "index", "logits"});
    return DistributionLeaf<double>{fields::vector(j["logits"], fields::join(path, "logits"), outputs)};
  };
}

inline void check_roles(const json& arr, const std::string& name, std::initializer_list<const char*> roles) {
  if (!arr.is_array()) fields::fail(name, "expected an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = fields::join(name, i);
    const std::string role = fields::string(fields::at(arr[i], path, "tree"), fields::join(path, "tree"));
    bool ok = false;
    for (const char* r : roles) ok = ok || role == r;
    if (!ok) fields::fail(fields::join(path, "tree"), "tree '" + role + "' does not belong to this model family");
  }
}

}  // namespace detail

inline json model_to_json(const Policy& p, const ModelMetadata& meta) {
  json j;
  j["format"] = "cdt-model";
  j["version"] = 1;
  j["family"] = to_string(p.spec.family);
  j["mode"] = to_string(p.mode);
  json nodes = json::array();
  json leaves = json::array();
  json layers = json::array();
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Sdt<double>>) {
          j["family"] = "sdt";
          j["dims"] = {{"R", m.inputs()}, {"O", m.outputs}};
          j["depths"] = {{"d", m.tree.depth}};
          detail::write_nodes(m.tree, "sdt", nodes);
          detail::write_leaves(m.tree, "sdt", leaves);
        } else if constexpr (std::is_same_v<M, Cdt<double>>) {
          j["family"] = "cdt";
          j["dims"] = {{"R", m.inputs}, {"K", m.features_dim}, {"O", m.outputs}};
          j["depths"] = {{"d1", m.features.depth}, {"d2", m.decisions.depth}};
          detail::write_nodes(m.features, "F", nodes);
          detail::write_nodes(m.decisions, "D", nodes);
          detail::write_leaves(m.features, "F", leaves);
          detail::write_leaves(m.decisions, "D", leaves);
        } else {
          j["family"] = "mlp";
          j["dims"] = {{"R", m.inputs()}, {"O", m.outputs()}, {"H", m.layers.front().outputs}};
          j["depths"] = json::object();
          for (const auto& l : m.layers) {
            layers.push_back({{"weights", fields::matrix_array(l.weights, l.outputs, l.inputs, "layer weights")},
                              {"bias", fields::number_array(l.bias, "layer bias")}});
          }
        }
      },
      p.model);
  j["nodes"] = std::move(nodes);
  j["leaves"] = std::move(leaves);
  j["layers"] = std::move(layers);
  if (p.normalizer.empty()) {
    j["normalization"] = nullptr;
  } else {
    j["normalization"] = {{"mean", fields::number_array(p.normalizer.mean, "normalizer mean")},
                          {"std", fields::number_array(p.normalizer.stdev, "normalizer std")}};
  }
  json md = {{"seed", meta.seed}, {"created", meta.created.empty() ? creation_timestamp() : meta.created}};
  if (!meta.env.empty()) md["env"] = meta.env;
  if (!meta.command.empty()) md["command"] = meta.command;
  j["metadata"] = std::move(md);
  return j;
}

inline ModelFile model_from_json(const json& j) {
  fields::check_keys(j, "", {"format", "version", "family", "mode", "dims", "depths", "nodes", "leaves", "layers",
                             "normalization", "metadata"});
  if (fields::string(j["format"], "format") != "cdt-model") fields::fail("format", "expected \"cdt-model\"");
  if (fields::integer(j["version"], "version") != 1) fields::fail("version", "unsupported version");
  ModelFile out;
  Policy& p = out.policy;
  try {
    p.spec.family = parse_family(fields::string(j["family"], "family"));
    p.mode = parse_discretize_mode(fields::string(j["mode"], "mode"));
  } catch (const std::invalid_argument& e) {
    fields::fail("family/mode", e.what());
  }
  constexpr std::int64_t kMaxDim = 1 << 16;
  constexpr int kMaxDepth = 20;
  const json& dims = j["dims"];
  const json& depths = j["depths"];
  const json& nodes = j["nodes"];
  const json& leaves = j["leaves"];
  const json& layers = j["layers"];
  if (!layers.is_array()) fields::fail("layers", "expected an array");
  switch (p.spec.family) {
    case Family::sdt: {
      fields::check_keys(dims, "dims", {"R", "O"});
      fields::check_keys(depths, "depths", {"d"});
      const auto R = static_cast<std::size_t>(fields::integer_in(dims["R"], "dims.R", 1, kMaxDim));
      const auto O = static_cast<std::size_t>(fields::integer_in(dims["O"], "dims.O", 2, kMaxDim));
      const int d = static_cast<int>(fields::integer_in(depths["d"], "depths.d", 1, kMaxDepth));
      detail::check_roles(nodes, "nodes", {"sdt"});
      detail::check_roles(leaves, "leaves", {"sdt"});
      if (!layers.empty()) fields::fail("layers", "tree models have no dense layers");
      Sdt<double> m;
      m.outputs = O;
      m.tree = detail::read_tree_nodes<DistributionLeaf>(nodes, "sdt", d, R);
      m.tree.leaves = detail::read_tree_leaves(leaves, "sdt", d, detail::class_leaf_reader(O));
      p.spec.depth = d;
      p.model = std::move(m);
      break;
    }
    case Family::cdt: {
      fields::check_keys(dims, "dims", {"R", "K", "O"});
      fields::check_keys(depths, "depths", {"d1", "d2"});
      const auto R = static_cast<std::size_t>(fields::integer_in(dims["R"], "dims.R", 1, kMaxDim));
      const auto K = static_cast<std::size_t>(fields::integer_in(dims["K"], "dims.K", 1, kMaxDim));
      const auto O = static_cast<std::size_t>(fields::integer_in(dims["O"], "dims.O", 2, kMaxDim));
      const int d1 = static_cast<int>(fields::integer_in(depths["d1"], "depths.d1", 1, kMaxDepth));
      const int d2 = static_cast<int>(fields::integer_in(depths["d2"], "depths.d2", 1, kMaxDepth));
      detail::check_roles(nodes, "nodes", {"F", "D"});
      detail::check_roles(leaves, "leaves", {"F", "D"});
      if (!layers.empty()) fields::fail("layers", "tree models have no dense layers");
      Cdt<double> m;
      m.inputs = R;
      m.features_dim = K;
      m.outputs = O;
      m.features = detail::read_tree_nodes<FeatureLeaf>(nodes, "F", d1, R);
      m.decisions = detail::read_tree_nodes<DistributionLeaf>(nodes, "D", d2, K);
      m.features.leaves = detail::read_tree_leaves(leaves, "F", d1, [&](const json& l, const std::string& path) {
        fields::check_keys(l, path, {"tree", "index", "transform"});
        return FeatureLeaf<double>{K, R, fields::matrix(l["transform"], fields::join(path, "transform"), K, R)};
      });
      m.decisions.leaves = detail::read_tree_leaves(leaves, "D", d2, detail::class_leaf_reader(O));
      p.spec.feature_depth = d1;
      p.spec.decision_depth = d2;
      p.spec.features = K;
      p.model = std::move(m);
      break;
    }
    case Family::mlp: {
      fields::check_keys(dims, "dims", {"R", "O", "H"});
      fields::check_keys(depths, "depths", {});
      const auto R = static_cast<std::size_t>(fields::integer_in(dims["R"], "dims.R", 1, kMaxDim));
      const auto O = static_cast<std::size_t>(fields::integer_in(dims["O"], "dims.O", 2, kMaxDim));
      const auto H = static_cast<std::size_t>(fields::integer_in(dims["H"], "dims.H", 1, kMaxDim));
      if (!nodes.is_array() || !nodes.empty()) fields::fail("nodes", "mlp models have no tree nodes");
      if (!leaves.is_array() || !leaves.empty()) fields::fail("leaves", "mlp models have no tree leaves");
      if (layers.size() < 2) fields::fail("layers", "mlp needs at least two layers");
      Mlp<double> m;
      std::size_t in = R;
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string path = fields::join("layers", i);
        fields::check_keys(layers[i], path, {"weights", "bias"});
        const std::size_t out_dim = i + 1 == layers.size() ? O : H;
        DenseLayer<double> l;
        l.inputs = in;
        l.outputs = out_dim;
        l.weights = fields::matrix(layers[i]["weights"], fields::join(path, "weights"), out_dim, in);
        l.bias = fields::vector(layers[i]["bias"], fields::join(path, "bias"), out_dim);
        m.layers.push_back(std::move(l));
        in = out_dim;
      }
      if (p.mode != DiscretizeMode::none) fields::fail("mode", "mlp models cannot be discretized");
      p.spec.hidden = H;
      p.model = std::move(m);
      break;
    }
  }
  const bool sdt_mode_ok = p.spec.family != Family::sdt ||
                           p.mode == DiscretizeMode::none || p.mode == DiscretizeMode::sdt;
  const bool cdt_mode_ok = p.spec.family != Family::cdt || p.mode != DiscretizeMode::sdt;
  if (!sdt_mode_ok || !cdt_mode_ok) fields::fail("mode", "mode does not apply to family " + to_string(p.spec.family));

  const json& norm = j["normalization"];
  if (!norm.is_null()) {
    fields::check_keys(norm, "normalization", {"mean", "std"});
    p.normalizer.mean = fields::vector(norm["mean"], "normalization.mean", p.inputs());
    p.normalizer.stdev = fields::vector(norm["std"], "normalization.std", p.inputs());
    for (std::size_t i = 0; i < p.normalizer.stdev.size(); ++i) {
      if (!(p.normalizer.stdev[i] > 0.0)) fields::fail(fields::join("normalization.std", i), "must be positive");
    }
  }
  const json& md = j["metadata"];
  fields::check_keys(md, "metadata", {"seed", "created"}, {"env", "command"});
  out.metadata.seed = fields::unsigned_integer(md["seed"], "metadata.seed");
  out.metadata.created = fields::string(md["created"], "metadata.created");
  if (md.contains("env")) out.metadata.env = fields::string(md["env"], "metadata.env");
  if (md.contains("command")) out.metadata.command = fields::string(md["command"], "metadata.command");
  return out;
}

inline std::string model_to_string(const Policy& p, const ModelMetadata& meta) {
  return model_to_json(p, meta).dump(2) + "\n";
}

inline ModelFile parse_model(const std::string& text, const std::string& source = "model") {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError(source + ": invalid JSON: " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const SpecError& e) {
    throw SpecError(source + ": " + e.what());
  }
}

inline void save_model(const std::string& path, const Policy& p, const ModelMetadata& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << model_to_string(p, meta);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError(path + ": cannot open model file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str(), path);
}

}  // namespace cdt
