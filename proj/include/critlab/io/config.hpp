#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "critlab/domain.hpp"
#include "critlab/errors.hpp"
#include "critlab/operator.hpp"

namespace critlab::io {

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {
      "classify",      "lambda0",      "heat",       "green",   "theorem_limit", "resolvent_limit",
      "time_shift",    "davies_ratio", "conjecture", "perturb", "coupling",      "three_k"};
  return kinds;
}

/// Everything an experiment needs. Filled from a config file or CLI flags.
struct ScenarioConfig {
  // [fixture]
  std::string fixture = "lat1";
  int ambient = 0;
  // [operator]
  std::string potential = "none";
  double shift = 0.0;
  // [perturbation]
  std::string perturbation = "none";
  double alpha = 1.0;  // coupling or eps, depending on the experiment
  double lo = 0.0, hi = 10.0;
  int level = -1;  // finite level for perturbation experiments; -1 = largest with <= 64 vertices
  // [experiment]
  std::vector<std::string> experiments;
  std::optional<Vertex> x, y, x0, y0, y1;
  std::vector<Vertex> compact;
  double tau = -1.0;
  std::vector<double> t_grid;       // empty = experiment default
  std::vector<double> lambda_grid;  // empty = default below lambda0
  double tol = 1e-8;
  std::uint64_t seed = 1;
  int samples = 200;
  // [output]
  std::string out_dir;
  std::string prefix;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": not a number: '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": not an integer: '" + s + "'");
  }
}

/// `geometric:a:b:n`, `linear:a:b:n` or an explicit comma list. The result
/// must be positive and strictly increasing.
inline std::vector<double> parse_grid(const std::string& spec, const std::string& what) {
  const std::string s = trim(spec);
  if (s.empty()) throw ValidationError(what + " is empty");
  std::vector<double> g;
  auto ranged = [&](const std::string& kind) -> bool {
    if (s.rfind(kind + ":", 0) != 0) return false;
    auto parts = split(s.substr(kind.size() + 1), ':');
    if (parts.size() != 3) throw ValidationError(what + ": expected " + kind + ":a:b:n");
    const double a = parse_double(parts[0], what), b = parse_double(parts[1], what);
    const long long n = parse_int(parts[2], what);
    if (n < 1 || !(b >= a) || (n > 1 && !(b > a))) throw ValidationError(what + ": need a < b and n >= 1");
    if (kind == "geometric" && !(a > 0.0)) throw ValidationError(what + ": geometric grid needs a > 0");
    for (long long i = 0; i < n; ++i) {
      const double f = n == 1 ? 0.0 : double(i) / double(n - 1);
      g.push_back(kind == "geometric" ? a * std::pow(b / a, f) : a + (b - a) * f);
    }
    return true;
  };
  if (!ranged("geometric") && !ranged("linear"))
    for (const auto& item : split(s, ',')) g.push_back(parse_double(item, what));
  if (g.empty()) throw ValidationError(what + " is empty");
  return g;
}

/// `none`, `constant:c`, `indicator:v[:h]`, `file:<path>`, or a bare path.
inline Potential parse_potential(const std::string& spec, const WeightedDomain& d) {
  const std::string s = trim(spec);
  if (s.empty() || s == "none" || s == "0") return Potential::zero(d.size());
  if (s.rfind("constant:", 0) == 0) return Potential::constant(d.size(), parse_double(s.substr(9), "potential"));
  if (s.rfind("indicator:", 0) == 0) {
    auto parts = split(s.substr(10), ':');
    if (parts.empty() || parts.size() > 2) throw ValidationError("potential: expected indicator:v[:h]");
    const Vertex v = parse_int(parts[0], "potential vertex");
    if (!d.find(v)) throw ValidationError("potential: vertex " + parts[0] + " is not in the domain");
    return Potential::indicator(d, v, parts.size() == 2 ? parse_double(parts[1], "potential height") : 1.0);
  }
  if (s.rfind("file:", 0) == 0) return read_potential_file(d, s.substr(5));
  return read_potential_file(d, s);
}

namespace detail {

/// section.key -> line number, for diagnostics.
inline std::map<std::string, int> key_lines(const std::string& path) {
  std::map<std::string, int> out;
  std::ifstream in(path);
  std::string line, section;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq != std::string::npos) out.emplace(section + "." + trim(t.substr(0, eq)), n);
  }
  return out;
}

}  // namespace detail

/// Reads an INI scenario file. Errors carry `path:line` and the offending key.
inline ScenarioConfig load_config(const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(path + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  const auto lines = detail::key_lines(path);
  auto where = [&](const std::string& section, const std::string& key) {
    auto it = lines.find(section + "." + key);
    return path + ":" + (it == lines.end() ? std::string("?") : std::to_string(it->second)) + ": [" +
           section + "] " + key;
  };
  const std::map<std::string, std::set<std::string>> allowed = {
      {"fixture", {"name", "ambient"}},
      {"operator", {"potential", "shift"}},
      {"perturbation", {"potential", "alpha", "eps", "lo", "hi", "level"}},
      {"experiment",
       {"kind", "x", "y", "x0", "y0", "y1", "compact", "tau", "t_grid", "lambda_grid", "tol", "seed", "samples"}},
      {"output", {"dir", "prefix"}}};
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ValidationError(path + ": key '" + section + "' outside any section");
    auto sec = allowed.find(section);
    if (sec == allowed.end()) throw ValidationError(path + ": unknown section [" + section + "]");
    for (const auto& [key, value] : body)
      if (!sec->second.count(key)) throw ValidationError(where(section, key) + ": unknown key");
  }

  ScenarioConfig c;
  auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    auto v = tree.get_optional<std::string>(pt::ptree::path_type(section + "." + key, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  };
  auto number = [&](const std::string& section, const std::string& key, double& dst) {
    if (auto v = get(section, key)) dst = parse_double(*v, where(section, key));
  };
  auto integer = [&](const std::string& section, const std::string& key, auto& dst) {
    if (auto v = get(section, key)) dst = static_cast<std::remove_reference_t<decltype(dst)>>(parse_int(*v, where(section, key)));
  };
  auto vertex = [&](const std::string& key, std::optional<Vertex>& dst) {
    if (auto v = get("experiment", key)) dst = parse_int(*v, where("experiment", key));
  };

  if (auto v = get("fixture", "name")) c.fixture = *v;
  else throw ValidationError(path + ": [fixture] name is required");
  integer("fixture", "ambient", c.ambient);
  if (auto v = get("operator", "potential")) c.potential = *v;
  number("operator", "shift", c.shift);
  if (auto v = get("perturbation", "potential")) c.perturbation = *v;
  number("perturbation", "alpha", c.alpha);
  number("perturbation", "eps", c.alpha);
  number("perturbation", "lo", c.lo);
  number("perturbation", "hi", c.hi);
  integer("perturbation", "level", c.level);

  auto kinds = get("experiment", "kind");
  if (!kinds || kinds->empty()) throw ValidationError(path + ": [experiment] kind is required");
  for (const auto& k : split(*kinds, ',')) {
    if (std::find(experiment_kinds().begin(), experiment_kinds().end(), k) == experiment_kinds().end())
      throw ValidationError(where("experiment", "kind") + ": unknown experiment '" + k + "'");
    c.experiments.push_back(k);
  }
  vertex("x", c.x);
  vertex("y", c.y);
  vertex("x0", c.x0);
  vertex("y0", c.y0);
  vertex("y1", c.y1);
  if (auto v = get("experiment", "compact"))
    for (const auto& item : split(*v, ',')) c.compact.push_back(parse_int(item, where("experiment", "compact")));
  number("experiment", "tau", c.tau);
  if (auto v = get("experiment", "t_grid")) {
    c.t_grid = parse_grid(*v, where("experiment", "t_grid"));
    for (std::size_t i = 0; i < c.t_grid.size(); ++i)
      if (!(c.t_grid[i] > 0.0) || (i && !(c.t_grid[i] > c.t_grid[i - 1])))
        throw ValidationError(where("experiment", "t_grid") + ": must be positive and strictly increasing");
  }
  if (auto v = get("experiment", "lambda_grid")) c.lambda_grid = parse_grid(*v, where("experiment", "lambda_grid"));
  number("experiment", "tol", c.tol);
  integer("experiment", "seed", c.seed);
  integer("experiment", "samples", c.samples);
  if (!(c.tol > 0.0)) throw ValidationError(where("experiment", "tol") + ": must be positive");
  if (auto v = get("output", "dir")) c.out_dir = *v;
  if (auto v = get("output", "prefix")) c.prefix = *v;
  return c;
}

}  // namespace critlab::io
