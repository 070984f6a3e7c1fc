#pragma once

// Graphviz DOT rendering of SDT/CDT policies, one digraph per tree.

#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cdt/policy.hpp"

namespace cdt {

struct DotGraph {
  std::string name;  // SDT, F or D
  std::string text;
};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

// Record cells need |, {, }, <, > escaped.
inline std::string record_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|' || c == '{' || c == '}' || c == '<' || c == '>') out += '\\';
    out += c;
  }
  return out;
}

/// Red for negative, blue for positive weights, saturation by |w| / max|w|.
inline std::string heat_color(double w, double scale) {
  const double a = scale > 0.0 ? std::min(1.0, std::abs(w) / scale) : 0.0;
  const int fade = static_cast<int>(std::lround(255.0 * (1.0 - a)));
  char buf[16];
  if (w < 0.0) {
    std::snprintf(buf, sizeof buf, "#ff%02x%02x", fade, fade);
  } else {
    std::snprintf(buf, sizeof buf, "#%02x%02xff", fade, fade);
  }
  return buf;
}

inline std::string split_label(const SplitNode<double>& n, const char* var) {
  if (n.hard) {
    return std::string(var) + "[" + std::to_string(n.hard->feature) + "] " + (n.hard->left_if_greater ? ">" : "<") +
           " " + fmt(n.hard->threshold);
  }
  std::string cells;
  for (std::size_t k = 0; k < n.weights.size(); ++k) {
    cells += record_escape(std::string(var) + std::to_string(k) + " " + fmt(n.weights[k])) + "|";
  }
  return "{" + cells + record_escape("b " + fmt(n.bias)) + "}";
}

inline std::string leaf_label(const DistributionLeaf<double>& leaf) {
  const auto p = softmax(std::span<const double>(leaf.logits));
  std::string s = "p = [";
  for (std::size_t c = 0; c < p.size(); ++c) s += (c ? ", " : "") + fmt(p[c]);
  return s + "]\\naction " + std::to_string(argmax(std::span<const double>(p)));
}

inline std::string leaf_label(const FeatureLeaf<double>& leaf) {
  std::string s;
  for (std::size_t r = 0; r < leaf.rows; ++r) {
    s += "f" + std::to_string(r) + " =";
    for (std::size_t k = 0; k < leaf.cols; ++k) {
      const double w = leaf.transform[r * leaf.cols + k];
      s += std::string(k == 0 ? " " : (w < 0 ? " - " : " + ")) + fmt(k == 0 ? w : std::abs(w)) + " x" +
           std::to_string(k);
    }
    if (r + 1 < leaf.rows) s += "\\n";
  }
  return s;
}

template <template <class> class Leaf, class X>
std::string tree_dot(const SoftTree<double, Leaf>& tree, const std::string& name, const char* var,
                     std::optional<std::span<const X>> input) {
  std::optional<Routing<double>> routing;
  std::vector<bool> on_path(2 * tree.first_leaf(), false);
  if (input) {
    routing = soft_forward(tree, *input);
    for (std::size_t u : ancestors_path(tree.first_leaf() + argmax_leaf(routing->leaves()))) on_path[u] = true;
  }
  std::ostringstream out;
  out << "digraph " << dot_quote(name) << " {\n";
  out << "  node [fontname=\"Helvetica\"];\n";
  for (std::size_t u = 1; u < tree.first_leaf(); ++u) {
    const auto& n = tree.node(u);
    out << "  n" << u << " [label=" << dot_quote(split_label(n, var));
    if (n.hard) {
      out << ", shape=box";
    } else {
      double scale = 0.0;
      for (double w : n.weights) scale = std::max(scale, std::abs(w));
      std::size_t top = 0;
      for (std::size_t k = 1; k < n.weights.size(); ++k) {
        if (std::abs(n.weights[k]) > std::abs(n.weights[top])) top = k;
      }
      out << ", shape=record, style=filled, fillcolor="
          << dot_quote(n.weights.empty() ? "#ffffff" : heat_color(n.weights[top], scale));
    }
    out << "];\n";
  }
  for (std::size_t i = 0; i < tree.leaves.size(); ++i) {
    out << "  n" << tree.first_leaf() + i << " [label=" << dot_quote(leaf_label(tree.leaves[i]))
        << ", shape=ellipse];\n";
  }
  for (std::size_t u = 2; u < 2 * tree.first_leaf(); ++u) {
    out << "  n" << u / 2 << " -> n" << u;
    std::vector<std::string> attrs;
    if (routing) {
      const double left = routing->left[u / 2 - 1];
      attrs.push_back("label=" + dot_quote(fmt(u % 2 == 0 ? left : 1.0 - left)));
      attrs.push_back(std::string("style=") + (on_path[u] ? "solid" : "dashed"));
    } else {
      attrs.push_back(std::string("label=") + (u % 2 == 0 ? "\"L\"" : "\"R\""));
    }
    out << " [";
    for (std::size_t a = 0; a < attrs.size(); ++a) out << (a ? ", " : "") << attrs[a];
    out << "];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace detail

/// With an input, edges carry branch probabilities and the greedy path is solid.
/// The input is a raw state; the policy's normalizer is applied first.
inline std::vector<DotGraph> export_dot(const Policy& p, std::optional<std::vector<double>> raw = std::nullopt) {
  std::optional<std::vector<double>> x;
  if (raw) {
    if (raw->size() != p.inputs()) {
      throw std::invalid_argument("export_dot: input has dimension " + std::to_string(raw->size()) +
                                  ", model expects " + std::to_string(p.inputs()));
    }
    x = p.normalizer.normalize(*raw);
  }
  auto span_of = [](const std::optional<std::vector<double>>& v) -> std::optional<std::span<const double>> {
    if (!v) return std::nullopt;
    return std::span<const double>(*v);
  };
  return std::visit(
      [&](const auto& m) -> std::vector<DotGraph> {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Sdt<double>>) {
          return {DotGraph{"SDT", detail::tree_dot<DistributionLeaf, double>(m.tree, "SDT", "x", span_of(x))}};
        } else if constexpr (std::is_same_v<M, Cdt<double>>) {
          std::optional<std::vector<double>> f;
          if (x) f = greedy_infer(m, *x).features;
          return {DotGraph{"F", detail::tree_dot<FeatureLeaf, double>(m.features, "F", "x", span_of(x))},
                  DotGraph{"D", detail::tree_dot<DistributionLeaf, double>(m.decisions, "D", "f", span_of(f))}};
        } else {
          throw std::invalid_argument("DOT export needs a tree model");
        }
      },
      p.model);
}

inline std::string dot_text(const std::vector<DotGraph>& graphs) {
  std::string out;
  for (const auto& g : graphs) out += g.text;
  return out;
}

}  // namespace cdt
