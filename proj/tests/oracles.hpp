#pragma once

// Independent reference values used by the tests. Nothing here calls into
// the library.

#include <cmath>

namespace oracle {

/// e^{-2t} I_0(2t) by its power series, summed in the log domain:
/// e^{-2t} sum_m t^{2m} / (m!)^2.
inline double lattice_heat_diagonal(double t) {
  double acc = 0.0;
  for (int m = 0; m < 2000; ++m) {
    const double lt = 2.0 * m * std::log(t) - 2.0 * std::lgamma(m + 1.0) - 2.0 * t;
    const double term = std::exp(lt);
    acc += term;
    if (m > t && term < 1e-20 * acc) break;
  }
  return acc;
}

/// Single vertex with killing c: e^{-ct}.
inline double single_vertex_kernel(double c, double t) { return std::exp(-c * t); }

/// Two unit vertices, unit conductance: k(1, 1, t) = (1 + e^{-2t}) / 2.
inline double two_vertex_diagonal(double t) { return 0.5 * (1.0 + std::exp(-2.0 * t)); }

/// j-th iterated kernel of V = 1 on a single vertex with killing 1: e^{-t} t^j / j!.
inline double poisson_weight(int j, double t) {
  return std::exp(-t + j * std::log(t) - std::lgamma(j + 1.0));
}

/// Smallest Dirichlet eigenvalue of the path with n interior vertices.
inline double path_dirichlet_lambda0(int n) { return 2.0 * (1.0 - std::cos(M_PI / (n + 1))); }

/// G(0, 0) of the lattice Laplacian plus constant killing c:
/// int_0^inf e^{-(c+2)t} I_0(2t) dt = 1 / sqrt((c+2)^2 - 4).
inline double lattice_killed_green(double c) { return 1.0 / std::sqrt((c + 2.0) * (c + 2.0) - 4.0); }

/// G(0, 0) of the three-dimensional radial fixture: pi^2/2 - 4.
inline double radial3_green_origin() { return M_PI * M_PI / 2.0 - 4.0; }

}  // namespace oracle
