#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "critlab/errors.hpp"

namespace critlab {

/// Integer label of a vertex as seen by users, files and the CLI.
using Vertex = std::int64_t;

struct Edge {
  int to;
  double weight;
};

struct WeightedEdge {
  Vertex from;
  Vertex to;
  double weight;
};

/// Discrete weighted domain: vertices with positive measure and nonnegative
/// directed conductances. The symmetric part of w plays the role of m*A,
/// the antisymmetric part carries first-order drift terms.
///
/// Vertices are stored densely (index 0..size-1); labels map to indices.
/// Immutable after construction.
class WeightedDomain {
 public:
  WeightedDomain(std::vector<Vertex> labels, std::vector<double> measure,
                 const std::vector<WeightedEdge>& edges)
      : labels_(std::move(labels)), measure_(std::move(measure)) {
    const int n = static_cast<int>(labels_.size());
    if (n == 0) throw ValidationError("domain has no vertices");
    if (measure_.size() != labels_.size())
      throw ValidationError("measure size does not match vertex count");
    for (int i = 0; i < n; ++i) {
      if (!index_.emplace(labels_[i], i).second)
        throw ValidationError("duplicate vertex label " + std::to_string(labels_[i]));
      if (!(measure_[i] > 0.0) || !std::isfinite(measure_[i]))
        throw ValidationError("measure must be positive and finite at vertex " +
                              std::to_string(labels_[i]));
    }
    out_.resize(n);
    for (const auto& e : edges) {
      const int a = index_of(e.from);
      const int b = index_of(e.to);
      if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
        throw ValidationError("edge weight must be nonnegative and finite");
      if (a == b) {
        if (e.weight != 0.0) throw ValidationError("self-loop with nonzero weight");
        continue;
      }
      if (e.weight == 0.0) continue;
      for (const auto& existing : out_[a])
        if (existing.to == b)
          throw ValidationError("duplicate directed edge " + std::to_string(e.from) + " -> " +
                                std::to_string(e.to));
      out_[a].push_back({b, e.weight});
    }
    out_sum_.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      std::sort(out_[i].begin(), out_[i].end(),
                [](const Edge& l, const Edge& r) { return l.to < r.to; });
      for (const auto& e : out_[i]) out_sum_[i] += e.weight;
    }
    symmetric_ = true;
    for (int i = 0; i < n && symmetric_; ++i)
      for (const auto& e : out_[i])
        if (weight(e.to, i) != e.weight) {
          symmetric_ = false;
          break;
        }
    if (!connected())
      throw ValidationError("undirected support graph of the domain is not connected");
  }

  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<Vertex>& labels() const { return labels_; }
  Vertex label(int i) const { return labels_[i]; }
  double measure(int i) const { return measure_[i]; }
  const std::vector<double>& measures() const { return measure_; }
  std::span<const Edge> out_edges(int i) const { return out_[i]; }
  /// Sum over y of w(x, y).
  double out_weight(int i) const { return out_sum_[i]; }
  bool symmetric() const { return symmetric_; }

  std::optional<int> find(Vertex v) const {
    auto it = index_.find(v);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  int index_of(Vertex v) const {
    auto i = find(v);
    if (!i) throw ValidationError("unknown vertex " + std::to_string(v));
    return *i;
  }

  double weight(int from, int to) const {
    for (const auto& e : out_[from])
      if (e.to == to) return e.weight;
    return 0.0;
  }

  double total_measure() const { return std::accumulate(measure_.begin(), measure_.end(), 0.0); }

  std::vector<WeightedEdge> edge_list() const {
    std::vector<WeightedEdge> edges;
    for (int i = 0; i < size(); ++i)
      for (const auto& e : out_[i]) edges.push_back({labels_[i], labels_[e.to], e.weight});
    return edges;
  }

  /// Same vertices and measure, w*(x, y) = w(y, x).
  WeightedDomain transposed() const {
    auto edges = edge_list();
    for (auto& e : edges) std::swap(e.from, e.to);
    return WeightedDomain(labels_, measure_, edges);
  }

  /// Undirected neighbours (edges in either direction).
  std::vector<int> neighbours(int i) const {
    if (undirected_.empty()) build_undirected();
    return undirected_[i];
  }

  /// Connectivity of the undirected support graph induced on `members`.
  bool induced_connected(std::span<const int> members) const {
    if (members.empty()) return false;
    if (undirected_.empty()) build_undirected();
    std::vector<char> in(size(), 0), seen(size(), 0);
    for (int m : members) in[m] = 1;
    std::queue<int> q;
    q.push(members.front());
    seen[members.front()] = 1;
    std::size_t count = 1;
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int u : undirected_[v])
        if (in[u] && !seen[u]) {
          seen[u] = 1;
          ++count;
          q.push(u);
        }
    }
    return count == members.size();
  }

 private:
  bool connected() const {
    std::vector<int> all(size());
    std::iota(all.begin(), all.end(), 0);
    return induced_connected(all);
  }

  void build_undirected() const {
    undirected_.assign(size(), {});
    for (int i = 0; i < size(); ++i)
      for (const auto& e : out_[i]) {
        undirected_[i].push_back(e.to);
        undirected_[e.to].push_back(i);
      }
    for (auto& nb : undirected_) {
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
  }

  std::vector<Vertex> labels_;
  std::vector<double> measure_;
  std::vector<std::vector<Edge>> out_;
  std::vector<double> out_sum_;
  std::unordered_map<Vertex, int> index_;
  bool symmetric_ = true;
  // Built in the constructor (via connected()), read-only afterwards.
  mutable std::vector<std::vector<int>> undirected_;
};

using DomainPtr = std::shared_ptr<const WeightedDomain>;

/// A finite connected vertex subset with its own local indexing (ascending
/// ambient index). Operators restricted to it are killed outside.
class IndexedSubdomain {
 public:
  IndexedSubdomain(const WeightedDomain& domain, std::vector<int> members)
      : members_(std::move(members)), local_(domain.size(), -1) {
    if (members_.empty()) throw ValidationError("empty subdomain");
    std::sort(members_.begin(), members_.end());
    if (std::adjacent_find(members_.begin(), members_.end()) != members_.end())
      throw ValidationError("subdomain lists a vertex twice");
    for (std::size_t k = 0; k < members_.size(); ++k) {
      if (members_[k] < 0 || members_[k] >= domain.size())
        throw ValidationError("subdomain vertex outside the domain");
      local_[members_[k]] = static_cast<int>(k);
    }
    if (!domain.induced_connected(members_)) throw ValidationError("subdomain is not connected");
    full_ = static_cast<int>(members_.size()) == domain.size();
  }

  int size() const { return static_cast<int>(members_.size()); }
  const std::vector<int>& members() const { return members_; }
  int ambient(int local) const { return members_[local]; }
  /// Local index of an ambient index, or -1.
  int local(int ambient) const { return local_[ambient]; }
  bool contains(int ambient) const { return local_[ambient] >= 0; }
  /// True when the subset is the whole ambient domain (no Dirichlet exterior).
  bool is_full() const { return full_; }

 private:
  std::vector<int> members_;
  std::vector<int> local_;
  bool full_ = false;
};

/// Restriction to a subset given by labels.
inline IndexedSubdomain restrict(const WeightedDomain& domain, const std::vector<Vertex>& subset) {
  std::vector<int> idx;
  idx.reserve(subset.size());
  for (Vertex v : subset) idx.push_back(domain.index_of(v));
  return IndexedSubdomain(domain, std::move(idx));
}

/// Nested sequence S_1 c S_2 c ... of finite connected subsets (ambient
/// indices). `closed` marks a genuinely finite domain whose last level is the
/// whole vertex set, so the last level is exact rather than a truncation.
class Exhaustion {
 public:
  Exhaustion(const WeightedDomain& domain, std::vector<std::vector<int>> levels, int root,
             bool closed = false)
      : closed_(closed), root_(root) {
    if (levels.empty()) throw ValidationError("exhaustion has no levels");
    for (auto& lvl : levels) levels_.emplace_back(domain, std::move(lvl));
    for (std::size_t j = 1; j < levels_.size(); ++j) {
      const auto& a = levels_[j - 1];
      const auto& b = levels_[j];
      if (b.size() <= a.size()) throw ValidationError("exhaustion levels must grow strictly");
      for (int v : a.members())
        if (!b.contains(v)) throw ValidationError("exhaustion levels are not nested");
    }
    if (!levels_.front().contains(root)) throw ValidationError("exhaustion root not in S_1");
    if (closed_ && !levels_.back().is_full())
      throw ValidationError("closed exhaustion must end with the full vertex set");
  }

  int level_count() const { return static_cast<int>(levels_.size()); }
  const IndexedSubdomain& level(int j) const { return levels_.at(j); }
  const std::vector<IndexedSubdomain>& levels() const { return levels_; }
  /// Reference vertex (ambient index): the centre the levels grow from.
  int root() const { return root_; }
  bool closed() const { return closed_; }

  /// First level containing every listed ambient index, or -1.
  int first_level_containing(std::initializer_list<int> vertices) const {
    for (int j = 0; j < level_count(); ++j) {
      bool all = true;
      for (int v : vertices) all = all && levels_[j].contains(v);
      if (all) return j;
    }
    return -1;
  }

 private:
  std::vector<IndexedSubdomain> levels_;
  bool closed_;
  int root_;
};

enum class Growth { Doubling, Linear };

struct MeasureRule {
  enum class Kind { Unit, Geometric } kind = Kind::Unit;
  double q = 1.0;
  static MeasureRule unit() { return {}; }
  static MeasureRule geometric(double q) { return {Kind::Geometric, q}; }
};

struct DomainFixture {
  std::string name;
  DomainPtr domain;
  Exhaustion exhaustion;
  std::string documented_facts;
};

/// Path graph on {-n_half..n_half} with constant conductance. Levels are the
/// symmetric windows {-r..r}, r = 1, 3, 7, ... (Doubling, r + 1 doubles) or
/// r = 1, 2, 3, ... (Linear), all strictly inside the ambient path.
inline DomainFixture build_lattice_1d(int n_half, MeasureRule rule, double conductance,
                                      Growth growth = Growth::Doubling) {
  if (n_half < 2) throw ValidationError("build_lattice_1d: n_half must be at least 2");
  if (!(conductance > 0.0)) throw ValidationError("build_lattice_1d: conductance must be positive");
  if (rule.kind == MeasureRule::Kind::Geometric && !(rule.q > 0.0 && rule.q < 1.0))
    throw ValidationError("build_lattice_1d: geometric ratio must lie in (0, 1)");
  std::vector<Vertex> labels;
  std::vector<double> mu;
  std::vector<WeightedEdge> edges;
  for (int n = -n_half; n <= n_half; ++n) {
    labels.push_back(n);
    const double m = rule.kind == MeasureRule::Kind::Unit ? 1.0 : std::pow(rule.q, std::abs(n));
    if (!(m > 1e-300)) throw ValidationError("build_lattice_1d: measure underflows; reduce n_half");
    mu.push_back(m);
    if (n < n_half) {
      edges.push_back({n, n + 1, conductance});
      edges.push_back({n + 1, n, conductance});
    }
  }
  auto domain = std::make_shared<const WeightedDomain>(labels, mu, edges);
  std::vector<std::vector<int>> levels;
  auto window = [&](int r) {
    std::vector<int> lvl;
    for (int n = -r; n <= r; ++n) lvl.push_back(n + n_half);
    return lvl;
  };
  if (growth == Growth::Doubling) {
    for (int r = 1; r <= n_half - 1; r = 2 * r + 1) levels.push_back(window(r));
  } else {
    for (int r = 1; r <= n_half - 1; ++r) levels.push_back(window(r));
  }
  std::string facts;
  if (rule.kind == MeasureRule::Kind::Unit) {
    facts = "lat1: constants harmonic, sum of measure infinite (null-critical); "
            "k(0,0,t) = exp(-2t) I0(2t) for unit conductance";
  } else {
    facts = "lat1_geo: constants harmonic, total measure (1+q)/(1-q) (positive-critical)";
  }
  Exhaustion ex(*domain, std::move(levels), n_half);
  std::string name = rule.kind == MeasureRule::Kind::Unit ? "lat1" : "lat1_geo";
  return {std::move(name), std::move(domain), std::move(ex), std::move(facts)};
}

/// Radial reduction of the Laplacian on R^d: vertices r_i = i*h, i = 1..n,
/// mu(i) = r_i^(d-1) h, w(i, i+1) = ((r_i + r_{i+1})/2)^(d-1) / h. The origin
/// carries no conductance (it has zero capacity for d >= 2); the outer end is
/// absorbing for every exhaustion level. Levels are {1..m} with m = 2, 4, 8, ...
/// (Doubling) or m = ceil((n-1) j / J) (Linear, J = `linear_levels`).
inline DomainFixture build_radial(int dimension, int n_points, double step,
                                  Growth growth = Growth::Doubling, int linear_levels = 16) {
  if (dimension < 2) throw ValidationError("build_radial: dimension must be at least 2");
  if (!(step > 0.0)) throw ValidationError("build_radial: step must be positive");
  if (n_points < 10) throw ValidationError("build_radial: need at least 10 points");
  std::vector<Vertex> labels;
  std::vector<double> mu;
  std::vector<WeightedEdge> edges;
  for (int i = 1; i <= n_points; ++i) {
    labels.push_back(i);
    const double r = i * step;
    mu.push_back(std::pow(r, dimension - 1) * step);
    if (i < n_points) {
      const double mid = (r + (i + 1) * step) / 2.0;
      const double w = std::pow(mid, dimension - 1) / step;
      edges.push_back({i, i + 1, w});
      edges.push_back({i + 1, i, w});
    }
  }
  auto domain = std::make_shared<const WeightedDomain>(labels, mu, edges);
  std::vector<int> sizes;
  if (growth == Growth::Doubling) {
    for (int m = 2; m <= n_points - 1; m *= 2) sizes.push_back(m);
  } else {
    for (int j = 1; j <= linear_levels; ++j) {
      int m = static_cast<int>(std::ceil(double(n_points - 1) * j / linear_levels));
      if (sizes.empty() || m > sizes.back()) sizes.push_back(m);
    }
  }
  std::vector<std::vector<int>> levels;
  for (int m : sizes) {
    std::vector<int> lvl(m);
    std::iota(lvl.begin(), lvl.end(), 0);
    levels.push_back(std::move(lvl));
  }
  std::string facts = dimension >= 3 ? "rad(d>=3): transient, Green function finite"
                                     : "rad(2): recurrent, Green function diverges logarithmically";
  Exhaustion ex(*domain, std::move(levels), 0);
  return {"rad(" + std::to_string(dimension) + ")", std::move(domain), std::move(ex),
          std::move(facts)};
}

/// Exhaustion by graph balls around `root` with radius 1, 2, 4, ...; the last
/// level is the whole (finite) domain.
inline Exhaustion ball_exhaustion(const WeightedDomain& domain, int root) {
  std::vector<int> dist(domain.size(), -1);
  std::queue<int> q;
  dist[root] = 0;
  q.push(root);
  int max_dist = 0;
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    max_dist = std::max(max_dist, dist[v]);
    for (int u : domain.neighbours(v))
      if (dist[u] < 0) {
        dist[u] = dist[v] + 1;
        q.push(u);
      }
  }
  std::vector<std::vector<int>> levels;
  for (int radius = 1; radius < max_dist; radius *= 2) {
    std::vector<int> lvl;
    for (int v = 0; v < domain.size(); ++v)
      if (dist[v] <= radius) lvl.push_back(v);
    levels.push_back(std::move(lvl));
  }
  std::vector<int> all(domain.size());
  std::iota(all.begin(), all.end(), 0);
  levels.push_back(std::move(all));
  return Exhaustion(domain, std::move(levels), root, true);
}

/// Single closed level holding every vertex: a finite domain with no exterior.
inline Exhaustion closed_exhaustion(const WeightedDomain& domain, int root = 0) {
  std::vector<int> all(domain.size());
  std::iota(all.begin(), all.end(), 0);
  return Exhaustion(domain, {all}, root, true);
}

/// Edge-list text: `x y w` per directed edge, `x mu` per vertex, `#` comments.
inline DomainFixture read_domain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open domain file " + path);
  std::vector<Vertex> labels;
  std::vector<double> mu;
  std::vector<WeightedEdge> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string s; ls >> s;) tok.push_back(s);
    if (tok.empty()) continue;
    try {
      if (tok.size() == 2) {
        labels.push_back(std::stoll(tok[0]));
        mu.push_back(std::stod(tok[1]));
      } else if (tok.size() == 3) {
        edges.push_back({std::stoll(tok[0]), std::stoll(tok[1]), std::stod(tok[2])});
      } else {
        throw ValidationError("expected 2 or 3 fields");
      }
    } catch (const std::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  auto domain = std::make_shared<const WeightedDomain>(labels, mu, edges);
  int root = static_cast<int>(std::min_element(labels.begin(), labels.end()) - labels.begin());
  Exhaustion ex = ball_exhaustion(*domain, root);
  return {"file:" + path, std::move(domain), std::move(ex), "finite domain read from " + path};
}

/// Resolves a fixture name: `lat1`, `lat1_geo(q)`, `rad(d)` or `file:<path>`.
/// `ambient` is n_half for lattices and the point count for radial fixtures;
/// 0 selects the default (2000 resp. 1000). Geometric lattices are capped so
/// that the measure stays representable.
inline DomainFixture make_fixture(const std::string& name, int ambient = 0) {
  auto argument = [&](const std::string& prefix) -> std::optional<double> {
    if (name.rfind(prefix + "(", 0) != 0 || name.back() != ')') return std::nullopt;
    const std::string inner = name.substr(prefix.size() + 1, name.size() - prefix.size() - 2);
    try {
      std::size_t used = 0;
      double v = std::stod(inner, &used);
      if (used != inner.size()) throw std::invalid_argument(inner);
      return v;
    } catch (const std::exception&) {
      throw ValidationError("bad fixture argument in '" + name + "'");
    }
  };
  if (name == "lat1") {
    auto f = build_lattice_1d(ambient > 0 ? ambient : 2000, MeasureRule::unit(), 1.0);
    return f;
  }
  if (auto q = argument("lat1_geo")) {
    if (!(*q > 0.0 && *q < 1.0)) throw ValidationError("lat1_geo ratio must lie in (0, 1)");
    const int cap = static_cast<int>(std::floor(std::log(1e-290) / std::log(*q)));
    int n_half = ambient > 0 ? ambient : 2000;
    n_half = std::min(n_half, cap);
    auto f = build_lattice_1d(n_half, MeasureRule::geometric(*q), 1.0);
    f.name = name;
    return f;
  }
  if (auto d = argument("rad")) {
    if (*d != std::floor(*d)) throw ValidationError("rad(d) needs an integer dimension");
    return build_radial(static_cast<int>(*d), ambient > 0 ? ambient : 1000, 1.0);
  }
  if (name.rfind("file:", 0) == 0) return read_domain_file(name.substr(5));
  throw ValidationError("unknown fixture '" + name + "'");
}

}  // namespace critlab
