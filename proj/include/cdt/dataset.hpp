#pragma once

// Teacher state-action datasets: generation, held-out split and CSV I/O.
//
// File layout: a header line "R,O,count" followed by `count` rows
// "s_0,...,s_{R-1},action". States are stored unnormalized.

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdt/environments.hpp"
#include "cdt/errors.hpp"

namespace cdt {

struct Dataset {
  std::size_t state_dim = 0;
  std::size_t action_count = 0;
  std::vector<std::vector<double>> states;
  std::vector<int> actions;
  // Row index where each episode starts; empty when episode structure is unknown.
  std::vector<std::size_t> episode_starts;

  std::size_t size() const { return states.size(); }

  void add(std::vector<double> s, int a) {
    states.push_back(std::move(s));
    actions.push_back(a);
  }
};

using Teacher = std::function<int(std::span<const double>)>;

/// One row per step of each teacher rollout. Episode e resets with seeds.derive("env", e).
inline Dataset generate_dataset(const std::string& env_name, const Teacher& teacher, int episodes,
                                const SeedStreams& seeds) {
  if (episodes < 1) throw std::invalid_argument("generate_dataset: episodes must be >= 1");
  auto env = make_env(env_name);
  Dataset d;
  d.state_dim = env->state_dim();
  d.action_count = env->action_count();
  for (int e = 0; e < episodes; ++e) {
    d.episode_starts.push_back(d.size());
    auto s = env->reset(seeds.derive("env", static_cast<std::uint64_t>(e)));
    while (!env->done()) {
      const int a = teacher(s);
      auto r = env->step(a);
      d.add(std::move(s), a);
      s = std::move(r.state);
    }
  }
  return d;
}

inline Dataset generate_teacher_dataset(const std::string& env_name, int episodes, std::uint64_t seed) {
  const auto name = canonical_env_name(env_name);
  return generate_dataset(
      name, [&](std::span<const double> s) { return scripted_teacher(name, s); }, episodes, SeedStreams{seed});
}

struct Split {
  Dataset train;
  Dataset test;
};

/// Holds out the last `fraction` of episodes (or rows, without episode structure).
inline Split split_holdout(const Dataset& d, double fraction = 0.1) {
  if (d.size() < 2) throw std::invalid_argument("split_holdout: need at least 2 rows");
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split_holdout: fraction must be in (0, 1)");
  std::size_t cut;
  if (d.episode_starts.size() >= 2) {
    const std::size_t n = d.episode_starts.size();
    std::size_t held = static_cast<std::size_t>(static_cast<double>(n) * fraction);
    held = std::clamp<std::size_t>(held, 1, n - 1);
    cut = d.episode_starts[n - held];
  } else {
    std::size_t held = static_cast<std::size_t>(static_cast<double>(d.size()) * fraction);
    held = std::clamp<std::size_t>(held, 1, d.size() - 1);
    cut = d.size() - held;
  }
  Split s;
  for (Dataset* part : {&s.train, &s.test}) {
    part->state_dim = d.state_dim;
    part->action_count = d.action_count;
  }
  for (std::size_t i = 0; i < d.size(); ++i) (i < cut ? s.train : s.test).add(d.states[i], d.actions[i]);
  for (std::size_t e : d.episode_starts) {
    if (e < cut) {
      s.train.episode_starts.push_back(e);
    } else {
      s.test.episode_starts.push_back(e - cut);
    }
  }
  return s;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_dataset(std::ostream& out, const Dataset& d) {
  out << d.state_dim << ',' << d.action_count << ',' << d.size() << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.states[i]) out << format_double(v) << ',';
    out << d.actions[i] << '\n';
  }
}

inline void write_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset '" + path + "'");
  write_dataset(out, d);
}

inline Dataset read_dataset(std::istream& in, const std::string& source = "dataset") {
  auto fail = [&](std::size_t line, const std::string& what) {
    throw SpecError(source + ":" + std::to_string(line) + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line)) fail(1, "missing header 'R,O,count'");
  Dataset d;
  std::size_t count = 0;
  {
    std::istringstream h(line);
    char c1 = 0;
    char c2 = 0;
    if (!(h >> d.state_dim >> c1 >> d.action_count >> c2 >> count) || c1 != ',' || c2 != ',') {
      fail(1, "malformed header, expected 'R,O,count'");
    }
    if (d.state_dim == 0 || d.action_count < 2) fail(1, "header needs R >= 1 and O >= 2");
  }
  d.states.reserve(count);
  d.actions.reserve(count);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> s;
    std::size_t pos = 0;
    for (std::size_t k = 0; k <= d.state_dim; ++k) {
      const std::size_t end = line.find(',', pos);
      const std::string field = line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
      if (field.empty()) fail(lineno, "expected " + std::to_string(d.state_dim + 1) + " fields");
      if ((k < d.state_dim) == (end == std::string::npos)) {
        fail(lineno, "expected " + std::to_string(d.state_dim + 1) + " fields");
      }
      try {
        std::size_t used = 0;
        if (k < d.state_dim) {
          s.push_back(std::stod(field, &used));
        } else {
          const int a = std::stoi(field, &used);
          if (a < 0 || static_cast<std::size_t>(a) >= d.action_count) fail(lineno, "action out of range");
          d.add(std::move(s), a);
        }
        if (used != field.size()) fail(lineno, "bad number '" + field + "'");
      } catch (const std::logic_error&) {
        fail(lineno, "bad number '" + field + "'");
      }
      pos = end + 1;
    }
  }
  if (d.size() != count) {
    fail(lineno, "header declares " + std::to_string(count) + " rows, found " + std::to_string(d.size()));
  }
  return d;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot read dataset '" + path + "'");
  return read_dataset(in, path);
}

}  // namespace cdt
