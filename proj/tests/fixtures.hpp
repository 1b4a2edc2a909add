#pragma once

// Small hand-built domains used by the tests next to the named fixtures.

#include <memory>
#include <vector>

#include "critlab/domain.hpp"

namespace fixtures {

using critlab::DomainPtr;
using critlab::Vertex;
using critlab::WeightedDomain;
using critlab::WeightedEdge;

inline DomainPtr single_vertex(double mu = 1.0) {
  return std::make_shared<const WeightedDomain>(std::vector<Vertex>{0}, std::vector<double>{mu},
                                                std::vector<WeightedEdge>{});
}

/// Two unit-measure vertices joined by a unit conductance.
inline DomainPtr two_vertex() {
  return std::make_shared<const WeightedDomain>(std::vector<Vertex>{0, 1}, std::vector<double>{1.0, 1.0},
                                                std::vector<WeightedEdge>{{0, 1, 1.0}, {1, 0, 1.0}});
}

/// Path -n..n with w(i, i+1) = right, w(i+1, i) = left and a measure that
/// varies along the path: a nonsymmetric operator with drift.
inline critlab::DomainFixture drift_path(int n = 127, double right = 1.5, double left = 0.5) {
  std::vector<Vertex> labels;
  std::vector<double> mu;
  std::vector<WeightedEdge> edges;
  for (int i = -n; i <= n; ++i) {
    labels.push_back(i);
    mu.push_back(1.0 + 0.5 * std::sin(0.7 * i));
    if (i < n) {
      edges.push_back({i, i + 1, right});
      edges.push_back({i + 1, i, left});
    }
  }
  auto d = std::make_shared<const WeightedDomain>(labels, mu, edges);
  std::vector<std::vector<int>> levels;
  for (int r = 1; r < n; r = 2 * r + 1) {
    std::vector<int> lvl;
    for (int i = -r; i <= r; ++i) lvl.push_back(d->index_of(i));
    levels.push_back(lvl);
  }
  critlab::Exhaustion e(*d, levels, d->index_of(0));
  return critlab::DomainFixture{"drift_path", d, e, "nonsymmetric path with drift"};
}

}  // namespace fixtures
