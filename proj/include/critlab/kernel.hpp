#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "critlab/domain.hpp"
#include "critlab/errors.hpp"
#include "critlab/limits.hpp"
#include "critlab/linalg.hpp"
#include "critlab/operator.hpp"

namespace critlab {

namespace detail {

inline int local_or_throw(const IndexedSubdomain& s, int ambient, const WeightedDomain& d) {
  const int a = s.local(ambient);
  if (a < 0)
    throw ValidationError("vertex " + std::to_string(d.label(ambient)) + " is outside the subset");
  return a;
}

enum class Route { Uniformized, Extended, Spectral };

/// How to exponentiate -t K_S. Uniformization shifts by the largest rate, so
/// slow modes carry a relative error of about t * max_rate * eps: fine in
/// double up to t * max_rate ~ 1e4, in long double up to ~1e6 (small subsets
/// only, it is slow). Past that, symmetric operators use the spectral route,
/// which is accurate relative to the largest entries; nonsymmetric ones stay
/// with extended uniformization.
inline Route route(const EllipticOperator& p, const IndexedSubdomain& s, double t) {
  double stiff = 0.0;
  for (int x : s.members()) stiff = std::max(stiff, std::abs(p.action_diagonal(x)));
  const double work = t * stiff;
  if (p.symmetric() && s.size() > 400) return Route::Spectral;
  if (work <= 1e4) return Route::Uniformized;
  if (work <= 1e6 && s.size() <= 128) return Route::Extended;
  return p.symmetric() ? Route::Spectral : Route::Extended;
}

inline Eigen::MatrixXd transition(const EllipticOperator& p, const IndexedSubdomain& s, double t, Route r) {
  switch (r) {
    case Route::Spectral: {
      const Eigen::VectorXd mu = p.measure_on(s);
      return linalg::symmetric_spectrum(p.flux_matrix(s), mu).heat(t) * mu.asDiagonal();
    }
    case Route::Extended:
      return linalg::expm_metzler_extended(-t * p.action_matrix(s));
    case Route::Uniformized:
      break;
  }
  return linalg::expm_metzler(-t * p.action_matrix(s));
}

}  // namespace detail

/// Density kernel matrix k^S(x, y, t) = exp(-t K_S)(x, y) / mu(y), subset order.
inline Eigen::MatrixXd heat_matrix_finite(const EllipticOperator& p, const IndexedSubdomain& s,
                                          double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("time must be finite and >= 0");
  const Eigen::VectorXd mu = p.measure_on(s);
  if (t == 0.0) return mu.cwiseInverse().asDiagonal();
  const auto r = detail::route(p, s, t);
  if (r == detail::Route::Spectral) return linalg::symmetric_spectrum(p.flux_matrix(s), mu).heat(t);
  return detail::transition(p, s, t, r) * mu.cwiseInverse().asDiagonal();
}

/// Transition matrix exp(-h K_S), subset order: the time step of the
/// quadrature-based kernels. Steps accumulate error over the whole horizon,
/// so the route is chosen for the horizon rather than for h.
inline Eigen::MatrixXd step_matrix(const EllipticOperator& p, const IndexedSubdomain& s, double h,
                                   double horizon) {
  return detail::transition(p, s, h, detail::route(p, s, horizon));
}

inline double heat_kernel_finite(const EllipticOperator& p, const IndexedSubdomain& s, Vertex x,
                                 Vertex y, double t) {
  const auto& d = p.domain();
  const int a = detail::local_or_throw(s, d.index_of(x), d);
  const int b = detail::local_or_throw(s, d.index_of(y), d);
  if (t == 0.0) return a == b ? 1.0 / d.measure(s.ambient(b)) : 0.0;
  return heat_matrix_finite(p, s, t)(a, b);
}

/// A Green column of a positive restriction is positive; far entries may
/// underflow to zero, but a genuine sign change means lambda0(S) <= 0.
inline bool positive_green_column(const Eigen::VectorXd& g, int b) {
  if (!g.allFinite() || !(g[b] > 0.0)) return false;
  return g.minCoeff() >= -1e-12 * g.maxCoeff();
}

/// G^S(., y) = L_S^-1 e_y, i.e. [K_S^-1](x, y) / mu(y). Throws NumericalError
/// when L_S is singular or its inverse is not positive (lambda0(S) <= 0).
inline Eigen::VectorXd green_column(const Eigen::SparseLU<Eigen::SparseMatrix<double>>& lu,
                                    int n, int b) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  e[b] = 1.0;
  Eigen::VectorXd g = lu.solve(e);
  if (!positive_green_column(g, b)) throw NumericalError("restricted operator is singular or not positive");
  return g;
}

inline double green_finite(const EllipticOperator& p, const IndexedSubdomain& s, Vertex x, Vertex y) {
  const auto& d = p.domain();
  const int a = detail::local_or_throw(s, d.index_of(x), d);
  const int b = detail::local_or_throw(s, d.index_of(y), d);
  Eigen::SparseMatrix<double> L = p.flux_matrix(s);
  L.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(L);
  if (lu.info() != Eigen::Success) throw NumericalError("restricted operator is singular");
  return green_column(lu, s.size(), b)[a];
}

struct KernelOptions {
  LimitOptions heat{1e-9, 1e12, 0.75, 1e-6, true, false};
  LimitOptions green{1e-8, 1e12, 0.75, 1e-6, true};
};

/// Exhaustion-limit evaluator with a per-level factorization cache.
///
/// Symmetric levels keep a spectral decomposition (reused for every t and
/// vertex pair); nonsymmetric levels cache exponentials per t. Green values
/// come from a sparse LU per level. All caches fill at most once per key and
/// are safe for concurrent readers.
class HeatKernelEvaluator {
 public:
  HeatKernelEvaluator(EllipticOperator p, Exhaustion e, KernelOptions opt = {})
      : op_(std::move(p)), exh_(std::move(e)), opt_(opt) {
    for (int j = 0; j < exh_.level_count(); ++j) levels_.push_back(std::make_unique<Level>());
  }
  HeatKernelEvaluator(const HeatKernelEvaluator&) = delete;
  HeatKernelEvaluator& operator=(const HeatKernelEvaluator&) = delete;

  const EllipticOperator& op() const { return op_; }
  const Exhaustion& exhaustion() const { return exh_; }
  const KernelOptions& options() const { return opt_; }
  int level_count() const { return exh_.level_count(); }

  /// Finite-level kernel; x, y are ambient indices.
  double level_heat(int j, int x, int y, double t) const {
    const auto& s = exh_.level(j);
    const int a = detail::local_or_throw(s, x, op_.domain());
    const int b = detail::local_or_throw(s, y, op_.domain());
    if (t == 0.0) return a == b ? 1.0 / op_.domain().measure(y) : 0.0;
    if (op_.symmetric()) return spectrum(j).kernel(a, b, t);
    return (*exponential(j, t))(a, b);
  }

  Eigen::MatrixXd level_heat_matrix(int j, double t) const {
    if (op_.symmetric() && t > 0.0) return spectrum(j).heat(t);
    if (t == 0.0) return heat_matrix_finite(op_, exh_.level(j), 0.0);
    return *exponential(j, t);
  }

  /// G^{S_j}(., y) in local indexing of level j.
  Eigen::VectorXd level_green_column(int j, int y) const {
    const auto& s = exh_.level(j);
    const int b = detail::local_or_throw(s, y, op_.domain());
    return green_column(factor(j), s.size(), b);
  }

  double level_green(int j, int x, int y) const {
    const auto& s = exh_.level(j);
    return level_green_column(j, y)[detail::local_or_throw(s, x, op_.domain())];
  }

  const linalg::SymmetricSpectrum& spectrum(int j) const {
    Level& lv = *levels_.at(j);
    std::call_once(lv.spectrum_once, [&] {
      const auto& s = exh_.level(j);
      lv.spectrum = std::make_unique<linalg::SymmetricSpectrum>(
          linalg::symmetric_spectrum(op_.flux_matrix(s), op_.measure_on(s)));
    });
    return *lv.spectrum;
  }

  LimitResult heat_kernel(Vertex x, Vertex y, double t) const {
    return heat_kernel_at(op_.domain().index_of(x), op_.domain().index_of(y), t);
  }
  LimitResult green(Vertex x, Vertex y) const {
    return green_at(op_.domain().index_of(x), op_.domain().index_of(y));
  }

  LimitResult heat_kernel_at(int x, int y, double t) const {
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("time must be finite and >= 0");
    LimitOptions o = opt_.heat;
    return drive(x, y, o, [&](int j) { return level_heat(j, x, y, t); }, false);
  }

  LimitResult green_at(int x, int y) const {
    return drive(x, y, opt_.green, [&](int j) { return level_green(j, x, y); }, true);
  }

 private:
  struct Level {
    std::once_flag spectrum_once;
    std::unique_ptr<linalg::SymmetricSpectrum> spectrum;
    std::once_flag lu_once;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu;
    bool lu_ok = false;
    std::mutex expm_mutex;
    std::map<double, std::shared_ptr<const Eigen::MatrixXd>> expm;
  };

  const Eigen::SparseLU<Eigen::SparseMatrix<double>>& factor(int j) const {
    Level& lv = *levels_.at(j);
    std::call_once(lv.lu_once, [&] {
      Eigen::SparseMatrix<double> L = op_.flux_matrix(exh_.level(j));
      L.makeCompressed();
      lv.lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      lv.lu->compute(L);
      lv.lu_ok = lv.lu->info() == Eigen::Success;
    });
    if (!lv.lu_ok) throw NumericalError("restricted operator is singular");
    return *lv.lu;
  }

  std::shared_ptr<const Eigen::MatrixXd> exponential(int j, double t) const {
    Level& lv = *levels_.at(j);
    {
      std::lock_guard<std::mutex> lock(lv.expm_mutex);
      if (auto it = lv.expm.find(t); it != lv.expm.end()) return it->second;
    }
    auto m = std::make_shared<const Eigen::MatrixXd>(heat_matrix_finite(op_, exh_.level(j), t));
    std::lock_guard<std::mutex> lock(lv.expm_mutex);
    if (lv.expm.size() > 64) lv.expm.clear();
    return lv.expm.emplace(t, std::move(m)).first->second;
  }

  template <class F>
  LimitResult drive(int x, int y, const LimitOptions& o, F&& value_at, bool green) const {
    const int j0 = exh_.first_level_containing({x, y});
    if (j0 < 0) throw ValidationError("vertices are not covered by the exhaustion");
    std::vector<double> hist, steps;
    std::vector<int> lv;
    LimitResult r, prev;
    bool have_prev = false;
    for (int j = j0; j < exh_.level_count(); ++j) {
      const bool final_level = j + 1 == exh_.level_count();
      double v;
      try {
        v = value_at(j);
      } catch (const NumericalError& e) {
        if (!green) throw;
        // Singular or sign-changing Dirichlet restriction: lambda0(S_j) <= 0,
        // so no Green function exists on any larger set either.
        hist.push_back(std::numeric_limits<double>::infinity());
        lv.push_back(j);
        r.history = hist;
        r.levels = lv;
        r.level = j;
        r.status = LimitStatus::Diverging;
        r.evidence = std::string("level ") + std::to_string(j) + ": " + e.what();
        return r;
      }
      hist.push_back(v);
      lv.push_back(j);
      steps.push_back(level_step(exh_.level(j)));
      if (final_level && exh_.closed()) {
        r = assess_limit(hist, lv, o, true);
        r.status = LimitStatus::Converged;
        r.extrapolated = false;
        r.value = v;
        r.error = 0.0;
        r.evidence = "closed domain: final level is exact";
        return r;
      }
      r = assess_limit(hist, lv, o, final_level, steps);
      if (r.converged() && !r.extrapolated) return r;
      if (r.diverging()) return r;
      if (r.converged()) {
        if (have_prev && std::abs(r.value - prev.value) <= o.extrap_tol * std::abs(r.value)) return r;
        prev = r;
        have_prev = true;
      } else {
        have_prev = false;
      }
    }
    if (!r.converged()) r.evidence = "ambient truncation exhausted before convergence";
    return r;
  }

  EllipticOperator op_;
  Exhaustion exh_;
  KernelOptions opt_;
  std::vector<std::unique_ptr<Level>> levels_;
};

}  // namespace critlab
