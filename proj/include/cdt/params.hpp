#pragma once

// Closed-form parameter counts for SDT and CDT architectures.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdt/models.hpp"

namespace cdt {

enum class Family { sdt, cdt, mlp };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::sdt: return "sdt";
    case Family::cdt: return "cdt";
    case Family::mlp: return "mlp";
  }
  return "sdt";
}

inline Family parse_family(const std::string& s) {
  if (s == "sdt") return Family::sdt;
  if (s == "cdt") return Family::cdt;
  if (s == "mlp") return Family::mlp;
  throw std::invalid_argument("unknown model family '" + s + "'");
}

struct ArchitectureConfig {
  Family family = Family::sdt;
  std::int64_t inputs = 4;    // R
  std::int64_t features = 2;  // K, CDT only
  std::int64_t outputs = 2;   // O
  int depth = 3;              // SDT
  int feature_depth = 1;      // d1, CDT
  int decision_depth = 2;     // d2, CDT
  DiscretizeMode mode = DiscretizeMode::none;
};

namespace detail {
inline std::int64_t pow2(int d) { return std::int64_t{1} << d; }
}  // namespace detail

/// N(SDT) = (R+1)(2^d - 1) + O 2^d
/// N(CDT) = (R+1)(2^d1 - 1) + K R 2^d1 + (K+1)(2^d2 - 1) + O 2^d2
/// A discretized internal node counts as 2 parameters.
inline std::int64_t param_count(const ArchitectureConfig& c) {
  if (c.inputs < 1 || c.outputs < 1) throw std::invalid_argument("param_count: dimensions must be >= 1");
  using detail::pow2;
  if (c.family == Family::sdt) {
    if (c.depth < 1) throw std::invalid_argument("param_count: depth must be >= 1");
    const bool hard = c.mode == DiscretizeMode::sdt;
    return (hard ? 2 : c.inputs + 1) * (pow2(c.depth) - 1) + c.outputs * pow2(c.depth);
  }
  if (c.family != Family::cdt) throw std::invalid_argument("param_count: only SDT and CDT are tree families");
  if (c.features < 1 || c.feature_depth < 1 || c.decision_depth < 1) {
    throw std::invalid_argument("param_count: CDT dimensions and depths must be >= 1");
  }
  const bool hard_f = c.mode == DiscretizeMode::cdt_f_only || c.mode == DiscretizeMode::cdt_f_and_d;
  const bool hard_d = c.mode == DiscretizeMode::cdt_d_only || c.mode == DiscretizeMode::cdt_f_and_d;
  const std::int64_t f_nodes = (hard_f ? 2 : c.inputs + 1) * (pow2(c.feature_depth) - 1);
  const std::int64_t f_leaves = c.features * c.inputs * pow2(c.feature_depth);
  const std::int64_t d_nodes = (hard_d ? 2 : c.features + 1) * (pow2(c.decision_depth) - 1);
  const std::int64_t d_leaves = c.outputs * pow2(c.decision_depth);
  return f_nodes + f_leaves + d_nodes + d_leaves;
}

struct ParamRatioRow {
  int depth = 0;
  int feature_depth = 0;
  int decision_depth = 0;
  std::int64_t cdt_params = 0;
  std::int64_t sdt_params = 0;
  double ratio = 0.0;  // N(CDT) / N(SDT)
};

/// One row per total depth d: CDT with d1 = floor(d/2), d2 = ceil(d/2)
/// against an SDT of depth d.
inline std::vector<ParamRatioRow> param_ratio_sweep(std::int64_t inputs, std::int64_t features,
                                                    std::int64_t outputs, int min_depth, int max_depth) {
  if (min_depth < 2 || max_depth > 20 || min_depth > max_depth) {
    throw std::invalid_argument("param_ratio_sweep: depth range must lie within [2, 20]");
  }
  std::vector<ParamRatioRow> rows;
  for (int d = min_depth; d <= max_depth; ++d) {
    ParamRatioRow row;
    row.depth = d;
    row.feature_depth = d / 2;
    row.decision_depth = d - d / 2;
    row.cdt_params = param_count(ArchitectureConfig{Family::cdt, inputs, features, outputs, 0,
                                                    row.feature_depth, row.decision_depth});
    row.sdt_params = param_count(ArchitectureConfig{Family::sdt, inputs, features, outputs, d});
    row.ratio = static_cast<double>(row.cdt_params) / static_cast<double>(row.sdt_params);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cdt
