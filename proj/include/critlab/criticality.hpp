#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "critlab/domain.hpp"
#include "critlab/errors.hpp"
#include "critlab/kernel.hpp"
#include "critlab/limits.hpp"
#include "critlab/linalg.hpp"
#include "critlab/operator.hpp"

namespace critlab {

enum class Classification { Subcritical, NullCritical, PositiveCritical };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::Subcritical: return "Subcritical";
    case Classification::NullCritical: return "NullCritical";
    case Classification::PositiveCritical: return "PositiveCritical";
  }
  return "?";
}

inline bool is_critical(Classification c) { return c != Classification::Subcritical; }

struct Lambda0Result {
  double value = 0.0;
  double error = 0.0;           // extrapolation gap, or the last increment when not extrapolated
  double last_increment = 0.0;
  bool extrapolated = false;
  std::vector<double> history;  // lambda0(S_j)
  std::vector<int> levels;
};

/// Principal Dirichlet eigenvalue of one level.
inline linalg::PrincipalPair level_principal_pair(const EllipticOperator& p, const IndexedSubdomain& s) {
  return linalg::principal_pair(p.flux_matrix(s), p.measure_on(s));
}

/// lim_j lambda0(S_j). The sequence must be nonincreasing (checked); the
/// limit is Richardson-extrapolated in h_j = 1/(|S_j| + 1) from the tail of
/// shrinking increments.
inline Lambda0Result lambda0(const EllipticOperator& p, const Exhaustion& e, double tol = 1e-9) {
  Lambda0Result out;
  for (int j = 0; j < e.level_count(); ++j) {
    const double lam = level_principal_pair(p, e.level(j)).lambda;
    if (!out.history.empty()) {
      const double prev = out.history.back();
      if (lam > prev + 1e-12 * std::max(1.0, std::abs(prev)))
        throw NumericalError("lambda0(S_j) increased from level " + std::to_string(j - 1) + " to " +
                             std::to_string(j));
    }
    out.history.push_back(lam);
    out.levels.push_back(j);
  }
  const auto& h = out.history;
  const std::size_t m = h.size();
  out.value = h.back();
  if (m == 1 || e.closed()) {
    out.error = 0.0;
    if (m == 1 && !e.closed()) out.error = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.last_increment = std::abs(h[m - 1] - h[m - 2]);
  out.error = out.last_increment;
  const double scale = std::max(1.0, std::abs(out.value));
  if (out.last_increment <= tol * scale) return out;
  // Tail of strictly shrinking increments.
  std::size_t start = m - 2;
  while (start > 0 && m - start < 8) {
    const double a = h[start] - h[start - 1], b = h[start + 1] - h[start];
    if (!(std::abs(b) < std::abs(a))) break;
    --start;
  }
  if (m - start < 3) throw InconclusiveError("lambda0: increments do not shrink along the exhaustion");
  std::vector<double> steps;
  for (int j : out.levels) steps.push_back(level_step(e.level(j)));
  auto ex = richardson(std::span<const double>(steps).subspan(start),
                       std::span<const double>(h).subspan(start));
  out.value = ex.value;
  out.error = std::max(ex.error, 1e-16 * scale);
  out.extrapolated = true;
  return out;
}

struct CriticalityOptions {
  double tol = 1e-8;            // slack on the standing assumption lambda0 >= 0
  int x0 = -1;                  // ambient index of the normalization point; -1 = exhaustion root
  KernelOptions kernel{};
  LimitOptions mass{1e-9, 1e12, 0.75, 1e-6, true};
};

struct LevelDiagnostic {
  int level = 0;
  double lambda0 = 0.0;
  double green = std::numeric_limits<double>::quiet_NaN();
  double mass = std::numeric_limits<double>::quiet_NaN();
};

struct CriticalityReport {
  Classification classification = Classification::Subcritical;
  Lambda0Result lambda0;
  int x0 = 0;
  /// Ground states on the deepest level used, normalized at x0; NaN outside.
  VertexFunction ground_state;
  VertexFunction adjoint_ground_state;
  LimitResult mass;
  LimitResult green;
  std::vector<LevelDiagnostic> diagnostics;
  /// max |phi(x) - G_J(x, y*)/G_J(x0, y*)| over S_1, with y* on the outer rim
  /// of the deepest level; a cross-check of the eigenfunction route.
  double green_ratio_gap = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/// phi_j and phi*_j on level j, normalized at x0, ambient-sized (NaN outside).
inline std::pair<VertexFunction, VertexFunction> level_ground_states(const EllipticOperator& p,
                                                                     const EllipticOperator& padj,
                                                                     const IndexedSubdomain& s,
                                                                     int x0) {
  const int a0 = s.local(x0);
  auto spread = [&](const Eigen::VectorXd& v) {
    VertexFunction f(p.size(), std::numeric_limits<double>::quiet_NaN());
    for (int a = 0; a < s.size(); ++a) f[s.ambient(a)] = v[a] / v[a0];
    return f;
  };
  auto phi = level_principal_pair(p, s);
  if (p.symmetric()) {
    auto f = spread(phi.vector);
    return {f, f};
  }
  auto phis = level_principal_pair(padj, s);
  return {spread(phi.vector), spread(phis.vector)};
}

inline double level_mass(const WeightedDomain& d, const IndexedSubdomain& s, const VertexFunction& f,
                         const VertexFunction& g) {
  double acc = 0.0;
  for (int x : s.members()) acc += f[x] * g[x] * d.measure(x);
  return acc;
}

}  // namespace detail

/// Subcritical iff the Green limit at (x0, x0) converges; otherwise critical,
/// and positive- vs null-critical by the exhaustion limit of sum phi phi* mu.
inline CriticalityReport classify(const EllipticOperator& p, const Exhaustion& e,
                                  const CriticalityOptions& opt = {}) {
  CriticalityReport rep;
  rep.x0 = opt.x0 >= 0 ? opt.x0 : e.root();
  if (!e.level(0).contains(rep.x0)) throw ValidationError("reference point is not in S_1");
  rep.lambda0 = lambda0(p, e);
  if (rep.lambda0.value + rep.lambda0.error < -opt.tol)
    throw NegativeLambda0("lambda0 = " + std::to_string(rep.lambda0.value) +
                          " < 0; shift the operator first");
  for (std::size_t k = 0; k < rep.lambda0.history.size(); ++k)
    rep.diagnostics.push_back({rep.lambda0.levels[k], rep.lambda0.history[k]});

  HeatKernelEvaluator ev(p, e, opt.kernel);
  rep.green = ev.green_at(rep.x0, rep.x0);
  for (std::size_t k = 0; k < rep.green.history.size(); ++k)
    rep.diagnostics[rep.green.levels[k]].green = rep.green.history[k];
  if (rep.green.converged()) {
    rep.classification = Classification::Subcritical;
    return rep;
  }
  if (!rep.green.diverging())
    throw InconclusiveError("Green limit undecided: " + rep.green.evidence);

  const EllipticOperator padj = adjoint(p);
  std::vector<double> hist, steps;
  std::vector<int> lv;
  LimitResult prev;
  bool have_prev = false;
  for (int j = 0; j < e.level_count(); ++j) {
    const auto& s = e.level(j);
    steps.push_back(level_step(s));
    auto [phi, phis] = detail::level_ground_states(p, padj, s, rep.x0);
    const double m = detail::level_mass(p.domain(), s, phi, phis);
    rep.diagnostics[j].mass = m;
    hist.push_back(m);
    lv.push_back(j);
    rep.ground_state = std::move(phi);
    rep.adjoint_ground_state = std::move(phis);
    const bool final_level = j + 1 == e.level_count();
    if (final_level && e.closed()) {
      rep.mass = assess_limit(hist, lv, opt.mass, true);
      rep.mass.status = LimitStatus::Converged;
      rep.mass.value = m;
      rep.mass.error = 0.0;
      rep.mass.extrapolated = false;
      rep.mass.evidence = "closed domain: final level is exact";
      break;
    }
    rep.mass = assess_limit(hist, lv, opt.mass, final_level, steps);
    if (rep.mass.diverging() || (rep.mass.converged() && !rep.mass.extrapolated)) break;
    if (rep.mass.converged()) {
      if (have_prev && std::abs(rep.mass.value - prev.value) <= opt.mass.extrap_tol * std::abs(rep.mass.value))
        break;
      prev = rep.mass;
      have_prev = true;
    } else {
      have_prev = false;
    }
  }
  if (rep.mass.converged())
    rep.classification = Classification::PositiveCritical;
  else if (rep.mass.diverging())
    rep.classification = Classification::NullCritical;
  else
    throw InconclusiveError("ground-state mass undecided: " + rep.mass.evidence);

  // Green-ratio cross-check on the deepest level reached.
  const int J = rep.mass.level;
  if (J >= 1 && !(e.closed() && J + 1 == e.level_count())) {
    const auto& s = e.level(J);
    int rim = s.members().back();
    try {
      Eigen::VectorXd g = ev.level_green_column(J, rim);
      const double g0 = g[s.local(rep.x0)];
      double gap = 0.0;
      for (int x : e.level(0).members()) gap = std::max(gap, std::abs(rep.ground_state[x] - g[s.local(x)] / g0));
      rep.green_ratio_gap = gap;
    } catch (const NumericalError&) {
    }
  }
  return rep;
}

struct LogEstimate {
  std::vector<double> t;
  std::vector<double> value;  // -log k(x, y, t) / t
  std::vector<int> level;
  double limit = std::numeric_limits<double>::quiet_NaN();
  double stderr_ = std::numeric_limits<double>::quiet_NaN();
};

/// -log k(x,y,t)/t over a time grid and the constant a of the fit
/// a + b log(t)/t + c/t, which estimates lambda0.
inline LogEstimate lambda0_log_estimate(const HeatKernelEvaluator& ev, Vertex x, Vertex y,
                                        const std::vector<double>& t_grid) {
  if (t_grid.empty()) throw ValidationError("empty time grid");
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    if (!(t_grid[i] > 0.0) || (i > 0 && !(t_grid[i] > t_grid[i - 1])))
      throw ValidationError("time grid must be positive and strictly increasing");
  LogEstimate out;
  for (double t : t_grid) {
    auto r = ev.heat_kernel(x, y, t);
    if (!r.converged())
      throw InconclusiveError("heat kernel not exhaustion-converged at t = " + std::to_string(t));
    if (!(r.value > 0.0)) throw NumericalError("heat kernel underflow at t = " + std::to_string(t));
    out.t.push_back(t);
    out.value.push_back(-std::log(r.value) / t);
    out.level.push_back(r.level);
  }
  const int n = static_cast<int>(out.t.size());
  if (n == 1) {
    out.limit = out.value[0];
    return out;
  }
  bool constant = true;
  for (double v : out.value) constant = constant && std::abs(v - out.value[0]) <= 1e-13 * std::max(1.0, std::abs(v));
  if (constant) {
    out.limit = out.value.back();
    out.stderr_ = 0.0;
    return out;
  }
  const int cols = n >= 4 ? 3 : (n >= 2 ? 2 : 1);
  Eigen::MatrixXd X(n, cols);
  Eigen::VectorXd yv(n);
  for (int i = 0; i < n; ++i) {
    const double t = out.t[i];
    X(i, 0) = 1.0;
    if (cols > 1) X(i, 1) = cols == 3 ? std::log(t) / t : 1.0 / t;
    if (cols > 2) X(i, 2) = 1.0 / t;
    yv[i] = out.value[i];
  }
  auto fit = linalg::least_squares(X, yv);
  out.limit = fit.coef[0];
  out.stderr_ = fit.stderr_[0];
  return out;
}

struct CouplingResult {
  double alpha0 = std::numeric_limits<double>::quiet_NaN();
  double error = std::numeric_limits<double>::quiet_NaN();
  LimitResult levels;  // alpha0(S_j) along the exhaustion
  double oracle = std::numeric_limits<double>::quiet_NaN();
  double oracle_rel_diff = std::numeric_limits<double>::quiet_NaN();
  bool oracle_agrees = false;
  std::string finding;
};

namespace detail {

/// lambda0(S) > 0 for P + alpha V on S: the restricted Z-matrix has a
/// positive Green column (for an irreducible Z-matrix that is equivalent).
inline bool level_subcritical(const EllipticOperator& p, const IndexedSubdomain& s, int probe) {
  Eigen::SparseMatrix<double> L = p.flux_matrix(s);
  L.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(L);
  if (lu.info() != Eigen::Success) return false;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(s.size());
  e[s.local(probe)] = 1.0;
  return positive_green_column(lu.solve(e), s.local(probe));
}

}  // namespace detail

/// Critical coupling of P + alpha V, V with a nonzero attractive part.
///
/// On each level, bisection locates alpha0(S_j), the coupling where the
/// restricted operator stops being positive; alpha0 is the exhaustion limit of
/// that sequence (the levels of a finite truncation cannot resolve couplings
/// between alpha0 and alpha0(S_J) directly). For V <= 0 the result is
/// compared with the Birman-Schwinger value 1/rho(W^1/2 G W^1/2).
inline CouplingResult critical_coupling(const EllipticOperator& p, const Potential& v,
                                        const Exhaustion& e, double lo, double hi,
                                        double width = 1e-9, const KernelOptions& kopt = {}) {
  if (v.size() != p.size()) throw ValidationError("potential size does not match the operator");
  if (!(lo < hi)) throw ValidationError("coupling bracket must satisfy lo < hi");
  const auto attractive = v.negative_part().support();
  if (attractive.empty()) throw ValidationError("potential has no attractive part (V_- = 0)");
  const int probe = attractive.front();
  const int j0 = [&] {
    for (int j = 0; j < e.level_count(); ++j) {
      bool all = true;
      for (int x : attractive) all = all && e.level(j).contains(x);
      if (all) return j;
    }
    throw ValidationError("support of the attractive part is not inside the exhaustion");
  }();
  CouplingResult out;
  std::vector<double> hist, steps;
  std::vector<int> lv;
  for (int j = j0; j < e.level_count(); ++j) {
    const auto& s = e.level(j);
    auto sub = [&](double a) { return detail::level_subcritical(perturb(p, v, a), s, probe); };
    if (!sub(lo))
      throw NoSignChange("P + alpha V is already not subcritical at the lower end of the bracket");
    if (sub(hi)) {
      if (j + 1 == e.level_count())
        throw NoSignChange("P + alpha V stays subcritical over the whole bracket");
      continue;  // alpha0(S_j) lies above the bracket; deeper levels come down
    }
    double a = lo, b = hi;
    while (b - a > width * std::max(1.0, std::abs(a))) {
      const double mid = 0.5 * (a + b);
      (sub(mid) ? a : b) = mid;
    }
    hist.push_back(0.5 * (a + b));
    lv.push_back(j);
    steps.push_back(level_step(s));
  }
  if (hist.empty()) throw NoSignChange("no level changes sign inside the bracket");
  LimitOptions lopt{std::max(1e-8, 20 * width), 1e12, 0.75, 1e-6, true};
  out.levels = assess_limit(hist, lv, lopt, true, steps);
  if (e.closed()) {
    out.levels.status = LimitStatus::Converged;
    out.levels.value = hist.back();
    out.levels.error = width;
  }
  if (!out.levels.converged())
    throw InconclusiveError("alpha0(S_j) does not settle along the exhaustion: " + out.levels.evidence);
  out.alpha0 = out.levels.value;
  out.error = std::max(out.levels.error, width * std::max(1.0, std::abs(out.alpha0)));

  if (v.positive_part().is_zero()) {
    HeatKernelEvaluator ev(p, e, kopt);
    const int n = static_cast<int>(attractive.size());
    Eigen::MatrixXd B(n, n);
    bool ok = true;
    for (int a = 0; a < n && ok; ++a)
      for (int b = 0; b < n && ok; ++b) {
        auto g = ev.green_at(attractive[a], attractive[b]);
        if (!g.converged()) {
          ok = false;
          break;
        }
        const int xa = attractive[a], xb = attractive[b];
        B(a, b) = std::sqrt(-v[xa] * p.domain().measure(xa)) * g.value *
                  std::sqrt(-v[xb] * p.domain().measure(xb));
      }
    if (ok) {
      out.oracle = 1.0 / linalg::spectral_radius(B);
      out.oracle_rel_diff = std::abs(out.alpha0 - out.oracle) / std::abs(out.oracle);
      out.oracle_agrees = out.oracle_rel_diff <= 1e-3;
      if (!out.oracle_agrees)
        out.finding = "bisection and Birman-Schwinger values differ by " +
                      std::to_string(out.oracle_rel_diff) + " (relative)";
    } else {
      out.finding = "Birman-Schwinger oracle unavailable: Green limit of P did not converge";
    }
  } else {
    out.finding = "Birman-Schwinger oracle skipped: V has a repulsive part";
  }
  return out;
}

enum class PerturbationKind { Small, Semismall };

struct PerturbationIntegralSeries {
  PerturbationKind kind = PerturbationKind::Semismall;
  std::vector<int> levels;
  std::vector<double> values;
  bool decreasing_to_zero = false;
  double fitted_decay = std::numeric_limits<double>::quiet_NaN();  // log-log slope in |S_j|
};

/// s_j = sup_y sum_{z in M_j*} G(x0,z)|V(z)|G(z,y)mu(z) / G(x0,y) over the
/// exterior M_j* = S_J \ S_j of the deepest level (Small: sup over x as well).
/// G is the Green function of the deepest level, which stands in for the
/// ambient truncation.
inline PerturbationIntegralSeries perturbation_integrals(const EllipticOperator& p, const Potential& v,
                                                         const Exhaustion& e, int x0,
                                                         PerturbationKind kind, double zero_tol = 1e-3) {
  if (v.size() != p.size()) throw ValidationError("potential size does not match the operator");
  const int J = e.level_count() - 1;
  if (J < 1) throw ValidationError("perturbation integrals need at least two levels");
  if (!e.level(0).contains(x0)) throw ValidationError("x0 must lie in S_1");
  const auto& SJ = e.level(J);
  const int n = SJ.size();
  Eigen::SparseMatrix<double> L = p.flux_matrix(SJ);
  L.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(L);
  if (lu.info() != Eigen::Success) throw NumericalError("Green function of the truncation is singular");
  Eigen::MatrixXd G = lu.solve(Eigen::MatrixXd::Identity(n, n));
  if (!G.allFinite() || G.minCoeff() < 0.0 || !(G.diagonal().minCoeff() > 0.0))
    throw ValidationError("operator is not subcritical on the ambient truncation");
  const int a0 = SJ.local(x0);
  PerturbationIntegralSeries out;
  out.kind = kind;
  for (int j = 0; j < J; ++j) {
    std::vector<int> ext;
    for (int a = 0; a < n; ++a)
      if (!e.level(j).contains(SJ.ambient(a))) ext.push_back(a);
    std::vector<int> zs;
    for (int a : ext)
      if (v[SJ.ambient(a)] != 0.0) zs.push_back(a);
    double s = 0.0;
    if (!zs.empty()) {
      if (kind == PerturbationKind::Semismall) {
        for (int y : ext) {
          double acc = 0.0;
          for (int z : zs) {
            const int zz = SJ.ambient(z);
            acc += G(a0, z) * std::abs(v[zz]) * G(z, y) * p.domain().measure(zz);
          }
          s = std::max(s, acc / G(a0, y));
        }
      } else {
        const int ne = static_cast<int>(ext.size()), nz = static_cast<int>(zs.size());
        Eigen::MatrixXd left(ne, nz), right(nz, ne);
        for (int i = 0; i < ne; ++i)
          for (int k = 0; k < nz; ++k) {
            const int zz = SJ.ambient(zs[k]);
            left(i, k) = G(ext[i], zs[k]) * std::abs(v[zz]) * p.domain().measure(zz);
            right(k, i) = G(zs[k], ext[i]);
          }
        Eigen::MatrixXd num = left * right;
        for (int i = 0; i < ne; ++i)
          for (int k = 0; k < ne; ++k) s = std::max(s, num(i, k) / G(ext[i], ext[k]));
      }
    }
    out.levels.push_back(j);
    out.values.push_back(s);
  }
  bool nonincreasing = true;
  for (std::size_t k = 1; k < out.values.size(); ++k)
    nonincreasing = nonincreasing && out.values[k] <= out.values[k - 1] * (1 + 1e-12);
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < out.values.size(); ++k)
    if (out.values[k] > 0.0) {
      lx.push_back(std::log(double(e.level(out.levels[k]).size())));
      ly.push_back(std::log(out.values[k]));
    }
  const std::size_t tail = std::min<std::size_t>(lx.size(), 4);
  if (tail >= 2) {
    Eigen::MatrixXd X(tail, 2);
    Eigen::VectorXd y(tail);
    for (std::size_t i = 0; i < tail; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = lx[lx.size() - tail + i];
      y[i] = ly[ly.size() - tail + i];
    }
    out.fitted_decay = linalg::least_squares(X, y).coef[1];
  }
  const double first = out.values.empty() ? 0.0 : std::max(out.values.front(), 1e-300);
  const bool vanished = out.values.empty() || out.values.back() == 0.0 ||
                        out.values.back() <= zero_tol * first ||
                        (std::isfinite(out.fitted_decay) && out.fitted_decay < -0.5);
  out.decreasing_to_zero = nonincreasing && vanished;
  return out;
}

/// (min, max) over the region of phi(x) / G_{P_alpha}(x, y0).
inline std::pair<double, double> ground_state_green_comparison(const HeatKernelEvaluator& ev_alpha,
                                                               const VertexFunction& phi, int y0,
                                                               const std::vector<int>& region) {
  if (region.empty()) throw ValidationError("empty comparison region");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int x : region) {
    if (ev_alpha.exhaustion().level(0).contains(x) && x == y0)
      throw ValidationError("comparison region must exclude y0");
    auto g = ev_alpha.green_at(x, y0);
    if (!g.converged())
      throw ValidationError("P_alpha has no Green function at this vertex (" + g.evidence + ")");
    if (!(g.value > 0.0)) throw NumericalError("nonpositive Green value in comparison");
    if (!(phi[x] > 0.0)) throw ValidationError("ground state is not positive on the region");
    const double r = phi[x] / g.value;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  return {lo, hi};
}

struct DominationResult {
  bool ok = false;
  double C = std::numeric_limits<double>::quiet_NaN();
  std::string reason;
};

/// Smallest C with u1_+(x)^2 w1(x,y) <= C u0(x)^2 w0(x,y) on every edge.
inline DominationResult edge_weight_domination(const EllipticOperator& p1, const EllipticOperator& p0,
                                               const VertexFunction& u1, const VertexFunction& u0) {
  if (p1.size() != p0.size() || static_cast<int>(u1.size()) != p1.size() ||
      static_cast<int>(u0.size()) != p0.size())
    throw ValidationError("operators and functions must share the vertex set");
  DominationResult out;
  out.ok = true;
  out.C = 0.0;
  const auto& d1 = p1.domain();
  const auto& d0 = p0.domain();
  for (int x = 0; x < d1.size(); ++x) {
    const double up = std::max(u1[x], 0.0);
    for (const auto& e : d1.out_edges(x)) {
      const double num = up * up * e.weight;
      if (num == 0.0) continue;
      const double den = u0[x] * u0[x] * d0.weight(x, e.to);
      if (!(den > 0.0)) {
        out.ok = false;
        out.C = std::numeric_limits<double>::infinity();
        out.reason = "edge (" + std::to_string(d1.label(x)) + "," + std::to_string(d1.label(e.to)) +
                     ") has no dominating weight";
        return out;
      }
      out.C = std::max(out.C, num / den);
    }
  }
  return out;
}

}  // namespace critlab
