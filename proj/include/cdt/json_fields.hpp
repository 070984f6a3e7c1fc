#pragma once

// Strict field access for JSON documents; every error names the field path.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdt/errors.hpp"

namespace cdt::fields {

using json = nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline std::string join(const std::string& path, std::size_t index) {
  return path + "[" + std::to_string(index) + "]";
}

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw SpecError((path.empty() ? std::string("document") : path) + ": " + what);
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

/// Rejects unknown keys and reports the first missing required key.
inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional = {}) {
  require_object(j, path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : required) known = known || it.key() == k;
    for (const char* k : optional) known = known || it.key() == k;
    if (!known) fail(join(path, it.key()), "unknown field");
  }
  for (const char* k : required) {
    if (!j.contains(k)) fail(join(path, k), "missing required field");
  }
}

inline const json& at(const json& j, const std::string& path, const char* key) {
  require_object(j, path);
  if (!j.contains(key)) fail(join(path, key), "missing required field");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

inline std::int64_t integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<std::int64_t>();
}

inline std::int64_t integer_in(const json& j, const std::string& path, std::int64_t lo, std::int64_t hi) {
  const std::int64_t v = integer(j, path);
  if (v < lo || v > hi) {
    fail(path, "value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return v;
}

inline std::uint64_t unsigned_integer(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    fail(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

inline bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

inline std::vector<double> vector(const json& j, const std::string& path, std::size_t expected_size) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  if (j.size() != expected_size) {
    fail(path, "expected " + std::to_string(expected_size) + " entries, got " + std::to_string(j.size()));
  }
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], join(path, i)));
  return out;
}

/// Row-major flattening of a rows x cols nested array.
inline std::vector<double> matrix(const json& j, const std::string& path, std::size_t rows, std::size_t cols) {
  if (!j.is_array()) fail(path, "expected an array of rows");
  if (j.size() != rows) fail(path, "expected " + std::to_string(rows) + " rows, got " + std::to_string(j.size()));
  std::vector<double> out;
  out.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = vector(j[r], join(path, r), cols);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

/// Finite doubles only; JSON has no encoding for NaN or infinity.
inline json number_array(const std::vector<double>& v, const std::string& what) {
  json a = json::array();
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericFailure("cannot serialize non-finite value in " + what);
    a.push_back(x);
  }
  return a;
}

inline json matrix_array(const std::vector<double>& flat, std::size_t rows, std::size_t cols, const std::string& what) {
  json a = json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    a.push_back(number_array(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(r * cols),
                                                 flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)),
                             what));
  }
  return a;
}

}  // namespace cdt::fields
