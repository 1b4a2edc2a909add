#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "critlab/criticality.hpp"
#include "critlab/errors.hpp"
#include "critlab/kernel.hpp"
#include "critlab/linalg.hpp"
#include "critlab/perturbation.hpp"

namespace critlab {

enum class SeriesStatus { ConvergedTo, VanishingLike, NonMonotone, Inconclusive };

inline const char* to_string(SeriesStatus s) {
  switch (s) {
    case SeriesStatus::ConvergedTo: return "ConvergedTo";
    case SeriesStatus::VanishingLike: return "VanishingLike";
    case SeriesStatus::NonMonotone: return "NonMonotone";
    case SeriesStatus::Inconclusive: return "Inconclusive";
  }
  return "?";
}

/// A sampled quantity along an abscissa (time, or lambda for resolvent
/// series) together with its fitted asymptotics.
///
/// Only points whose kernels were exhaustion-converged are stored; the
/// abscissae of the others are listed in `excluded`. `level` is the deepest
/// exhaustion level any underlying kernel needed at that point.
struct RatioSeries {
  std::string name;
  std::string abscissa = "t";
  std::vector<double> t;
  std::vector<double> values;
  std::vector<int> levels;
  std::vector<double> errors;  // absolute, propagated from the kernel limits
  std::vector<double> excluded;

  SeriesStatus status = SeriesStatus::Inconclusive;
  double limit = std::numeric_limits<double>::quiet_NaN();
  double limit_error = std::numeric_limits<double>::quiet_NaN();
  std::string model;
  double trend = std::numeric_limits<double>::quiet_NaN();  // log-log slope over the final decade
  double trend_width = std::numeric_limits<double>::quiet_NaN();
  bool exponential = false;
  double rate = std::numeric_limits<double>::quiet_NaN();  // decay rate when exponential
  std::string evidence;

  /// What the theory predicts for this series, when it predicts anything.
  double predicted = std::numeric_limits<double>::quiet_NaN();
  std::optional<bool> prediction_agrees;

  /// The status payload: the limit for ConvergedTo, the power for VanishingLike.
  double status_value() const {
    if (status == SeriesStatus::VanishingLike) return trend;
    return limit;
  }
};

inline std::vector<double> default_t_grid() { return geometric_grid(1.0, 400.0, 40); }

inline void validate_t_grid(const std::vector<double>& g) {
  if (g.empty()) throw ValidationError("t_grid is empty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] > 0.0) || !std::isfinite(g[i])) throw ValidationError("t_grid entries must be positive");
    if (i > 0 && !(g[i] > g[i - 1])) throw ValidationError("t_grid must be strictly increasing");
  }
}

namespace detail {

struct KernelSample {
  bool ok = false;
  double value = 0.0;
  double rel_err = 0.0;
  int level = -1;
};

inline KernelSample sample_kernel(const HeatKernelEvaluator& ev, int x, int y, double t) {
  KernelSample s;
  LimitResult r = ev.heat_kernel_at(x, y, t);
  if (!r.converged() || !(r.value > 0.0)) return s;
  s.ok = true;
  s.value = r.value;
  s.rel_err = std::abs(r.error) / r.value;
  s.level = r.level;
  return s;
}

inline int ambient_in_first_level(const HeatKernelEvaluator& ev, Vertex v, const char* role) {
  const int a = ev.op().domain().index_of(v);
  if (!ev.exhaustion().level(0).contains(a))
    throw ValidationError(std::string(role) + " vertex " + std::to_string(v) + " is not in S_1");
  return a;
}

inline linalg::LeastSquares line_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  Eigen::MatrixXd X(xs.size(), 2);
  Eigen::VectorXd y(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = xs[i];
    y[i] = ys[i];
  }
  return linalg::least_squares(X, y);
}

inline void push_point(RatioSeries& s, double t, double v, double rel_err, int level) {
  s.t.push_back(t);
  s.values.push_back(v);
  s.errors.push_back(std::abs(v) * rel_err);
  s.levels.push_back(level);
}

}  // namespace detail

/// Fits the asymptotics of a series whose limit point is u -> 0, where u is
/// parallel to the stored points and decreasing (u = 1/t for time series).
///
/// Models, tried in this order on the final decade of u:
///  - plateau: the last two increments are below 1e-6 relative;
///  - VanishingLike: log-log slope clearly negative and the fitted constant
///    negligible next to the last value (or an exponential fit is much better);
///  - ConvergedTo: a + b u^p, p in {1/2, 1, 3/2} by residual.
/// A tail whose increments change sign is NonMonotone.
inline void analyze_series(RatioSeries& s, const std::vector<double>& u) {
  const int n = static_cast<int>(s.values.size());
  s.status = SeriesStatus::Inconclusive;
  if (n == 0) {
    s.evidence = "no exhaustion-converged points";
    return;
  }
  s.limit = s.values.back();
  if (n < 3) {
    s.evidence = "fewer than 3 exhaustion-converged points";
    return;
  }
  const auto& v = s.values;
  const double umin = *std::min_element(u.begin(), u.end());
  std::vector<int> tail;
  for (int i = 0; i < n; ++i)
    if (u[i] <= 10.0 * umin * (1.0 + 1e-12)) tail.push_back(i);
  if (tail.size() < 3) tail = {n - 3, n - 2, n - 1};

  auto rel_inc = [&](int i) { return std::abs(v[i] - v[i - 1]) / std::max(std::abs(v[i]), 1e-300); };
  if (rel_inc(n - 1) <= 1e-6 && rel_inc(n - 2) <= 1e-6) {
    s.status = SeriesStatus::ConvergedTo;
    s.limit = v.back();
    s.limit_error = std::max({std::abs(v[n - 1] - v[n - 2]), std::abs(v[n - 2] - v[n - 3]), s.errors.back()});
    s.model = "plateau";
    s.trend = 0.0;
    s.trend_width = 0.0;
    s.evidence = "last two increments below 1e-6 relative";
    return;
  }

  int sign = 0;
  bool monotone = true;
  for (std::size_t k = 1; k < tail.size(); ++k) {
    const int i = tail[k];
    const double d = v[i] - v[i - 1];
    if (std::abs(d) <= 1e-12 * std::abs(v[i])) continue;
    const int sg = d > 0 ? 1 : -1;
    if (sign != 0 && sg != sign) monotone = false;
    sign = sg;
  }

  bool positive = true;
  for (int i : tail) positive = positive && v[i] > 0.0;
  double rss_pow = std::numeric_limits<double>::infinity();
  if (positive) {
    std::vector<double> lx, ly, tx;
    for (int i : tail) {
      lx.push_back(-std::log(u[i]));
      ly.push_back(std::log(v[i]));
      tx.push_back(1.0 / u[i]);
    }
    auto fit = detail::line_fit(lx, ly);
    s.trend = fit.coef[1];
    s.trend_width = std::isfinite(fit.stderr_[1]) ? 1.96 * fit.stderr_[1] : 0.0;
    rss_pow = fit.rss;
    if (tail.size() >= 4) {
      auto ex = detail::line_fit(tx, ly);
      if (ex.coef[1] < 0.0 && ex.rss < 1e-2 * rss_pow) {
        s.exponential = true;
        s.rate = -ex.coef[1];
      }
    }
  }

  // Converged model: a + b u^p. Its error is floored at a tenth of the
  // extrapolated correction |a - v_last|: the fit cannot see curvature beyond
  // its own model, and the stderr alone understates that.
  double best_rss = std::numeric_limits<double>::infinity();
  double rel_rss_conv = std::numeric_limits<double>::infinity();
  for (double p : {0.5, 1.0, 1.5}) {
    Eigen::MatrixXd X(tail.size(), 2);
    Eigen::VectorXd y(tail.size());
    for (std::size_t k = 0; k < tail.size(); ++k) {
      X(k, 0) = 1.0;
      X(k, 1) = std::pow(u[tail[k]], p);
      y[k] = v[tail[k]];
    }
    auto fit = linalg::least_squares(X, y);
    if (fit.rss < best_rss) {
      best_rss = fit.rss;
      s.limit = fit.coef[0];
      const double se = std::isfinite(fit.stderr_[0]) ? fit.stderr_[0] : 0.0;
      s.limit_error = std::max({2.0 * se, 0.1 * std::abs(s.limit - v.back()), s.errors[tail.back()]});
      s.model = p == 0.5 ? "a+b*u^0.5" : (p == 1.0 ? "a+b*u^1" : "a+b*u^1.5");
      rel_rss_conv = 0.0;
      const Eigen::VectorXd r = y - X * fit.coef;
      for (std::size_t k = 0; k < tail.size(); ++k) rel_rss_conv += std::pow(r[k] / y[k], 2);
    }
  }

  if (!monotone) {
    s.status = SeriesStatus::NonMonotone;
    s.evidence = "increments change sign in the final decade";
    return;
  }
  const bool decaying = positive && sign < 0 && s.trend + s.trend_width < -0.1;
  // rss_pow is in log space, i.e. relative residuals, as is rel_rss_conv.
  if (decaying && (s.exponential || rss_pow <= rel_rss_conv || std::abs(s.limit) <= 0.05 * v.back())) {
    s.status = SeriesStatus::VanishingLike;
    // A positive decreasing series has its limit in [0, last value].
    s.limit = 0.0;
    s.limit_error = v.back();
    s.model = s.exponential ? "exp(-rate*t)" : "power t^trend";
    s.evidence = s.exponential ? "log-linear fit beats the log-log fit" : "decreasing power law";
    return;
  }
  s.status = SeriesStatus::ConvergedTo;
  s.evidence = "fitted " + s.model;
}

/// u = 1/t for a time series.
inline void analyze_time_series(RatioSeries& s) {
  std::vector<double> u;
  for (double t : s.t) u.push_back(1.0 / t);
  analyze_series(s, u);
}

/// Level-wise ground-state ratio phi_j(x) phi*_j(y) / (phi_j(x0) phi*_j(y0)),
/// divided by the level mass int phi_j phi*_j dmu (normalized at x0) when
/// `with_mass`, followed to its exhaustion limit. This is what the limit
/// theorems predict, computed independently of any heat kernel.
inline LimitResult ground_state_limit(const EllipticOperator& p, const Exhaustion& e, int x, int y, int x0,
                                      int y0, bool with_mass, const LimitOptions& o = {}) {
  const int j0 = e.first_level_containing({x, y, x0, y0});
  if (j0 < 0) throw ValidationError("vertices are not covered by the exhaustion");
  const EllipticOperator padj = adjoint(p);
  return exhaustion_limit(
      e, j0,
      [&](int j) {
        const auto& s = e.level(j);
        auto [phi, phis] = detail::level_ground_states(p, padj, s, x0);
        double v = phi[x] * phis[y] / (phi[x0] * phis[y0]);
        if (with_mass) v /= detail::level_mass(p.domain(), s, phi, phis);
        return v;
      },
      o);
}

inline bool within(double value, double err, double target, double slack) {
  return std::abs(value - target) <= err + slack;
}

/// Two routes to the same limit agree when their limits differ by at most
/// the sum of their error estimates.
inline bool limits_agree(const RatioSeries& a, const RatioSeries& b) {
  const bool decided_a = a.status == SeriesStatus::ConvergedTo || a.status == SeriesStatus::VanishingLike;
  const bool decided_b = b.status == SeriesStatus::ConvergedTo || b.status == SeriesStatus::VanishingLike;
  return decided_a && decided_b && std::abs(a.limit - b.limit) <= a.limit_error + b.limit_error;
}

/// e^{lambda0 t} k_P(x, y, t) over t_grid. The classification decides the
/// predicted limit: phi(x) phi*(y) / int phi phi* dmu when positive-critical,
/// 0 otherwise.
inline RatioSeries theorem_limit_series(const HeatKernelEvaluator& ev, const CriticalityReport& rep,
                                        Vertex x, Vertex y, std::vector<double> t_grid = {}) {
  if (t_grid.empty()) t_grid = default_t_grid();
  validate_t_grid(t_grid);
  const int a = ev.op().domain().index_of(x), b = ev.op().domain().index_of(y);
  RatioSeries s;
  s.name = "theorem_limit";
  const double l0 = rep.lambda0.value;
  for (double t : t_grid) {
    auto k = detail::sample_kernel(ev, a, b, t);
    if (!k.ok) {
      s.excluded.push_back(t);
      continue;
    }
    detail::push_point(s, t, std::exp(l0 * t) * k.value, k.rel_err + std::abs(rep.lambda0.error) * t, k.level);
  }
  analyze_time_series(s);
  if (rep.classification == Classification::PositiveCritical) {
    auto g = ground_state_limit(ev.op(), ev.exhaustion(), a, b, rep.x0, rep.x0, true);
    s.predicted = g.converged() ? g.value : std::numeric_limits<double>::quiet_NaN();
  } else {
    s.predicted = 0.0;
  }
  if (std::isfinite(s.predicted) &&
      (s.status == SeriesStatus::ConvergedTo || s.status == SeriesStatus::VanishingLike))
    s.prediction_agrees = within(s.limit, s.limit_error, s.predicted, 1e-2 * std::abs(s.predicted));
  return s;
}

/// (lambda0 - lambda) G_{P - lambda}(x, y) for lambda increasing to lambda0.
/// The default grid is lambda0 - delta, delta geometric from 1 down to 1e-3.
inline RatioSeries resolvent_limit(const EllipticOperator& p, const Exhaustion& e, Vertex x, Vertex y,
                                   double lambda0, std::vector<double> lambdas = {},
                                   const KernelOptions& kopt = {}) {
  if (lambdas.empty())
    for (double d : geometric_grid(1e-3, 1.0, 13)) lambdas.insert(lambdas.begin(), lambda0 - d);
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] < lambda0)) throw ValidationError("resolvent grid must lie strictly below lambda0");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1])) throw ValidationError("resolvent grid must be increasing");
  }
  RatioSeries s;
  s.name = "resolvent_limit";
  s.abscissa = "lambda";
  // Below lambda0 the Green function exists, so growing level values are
  // not a divergence signal; only a failed positive inverse is.
  KernelOptions ko = kopt;
  ko.green.growth_diverges = false;
  std::vector<double> u;
  for (double lam : lambdas) {
    HeatKernelEvaluator ev(shift(p, lam), e, ko);
    LimitResult g = ev.green(x, y);
    if (g.diverging())
      throw NumericalError("Green function of P - " + std::to_string(lam) +
                           " diverges: lambda0 is overestimated");
    if (!g.converged()) {
      s.excluded.push_back(lam);
      continue;
    }
    const double d = lambda0 - lam;
    detail::push_point(s, lam, d * g.value, std::abs(g.error) / g.value, g.level);
    u.push_back(d);
  }
  analyze_series(s, u);
  return s;
}

/// k(x, y, t + tau) / k(x, y, t) for tau < 0. With lambda0 given (symmetric
/// operators) the prediction e^{-lambda0 tau} is attached.
inline RatioSeries time_shift_ratio_series(const HeatKernelEvaluator& ev, Vertex x, Vertex y, double tau,
                                           std::vector<double> t_grid = {},
                                           std::optional<double> lambda0 = std::nullopt) {
  if (!(tau < 0.0)) throw ValidationError("time shift tau must be negative");
  if (t_grid.empty()) t_grid = geometric_grid(std::max(1.0, -2.0 * tau), 400.0, 40);
  validate_t_grid(t_grid);
  if (!(t_grid.front() > -tau)) throw ValidationError("t_grid must start above |tau|");
  const int a = ev.op().domain().index_of(x), b = ev.op().domain().index_of(y);
  RatioSeries s;
  s.name = "time_shift";
  for (double t : t_grid) {
    auto k1 = detail::sample_kernel(ev, a, b, t + tau);
    auto k0 = detail::sample_kernel(ev, a, b, t);
    if (!k1.ok || !k0.ok) {
      s.excluded.push_back(t);
      continue;
    }
    detail::push_point(s, t, k1.value / k0.value, k1.rel_err + k0.rel_err, std::max(k1.level, k0.level));
  }
  analyze_time_series(s);
  if (lambda0 && ev.op().symmetric()) {
    s.predicted = std::exp(-*lambda0 * tau);
    if (s.status == SeriesStatus::ConvergedTo)
      s.prediction_agrees = within(s.limit, s.limit_error, s.predicted, 5e-3 * s.predicted);
  }
  return s;
}

/// k(x, y, t) / k(x0, y0, t). For a symmetric critical operator the limit is
/// phi(x) phi*(y) / (phi(x0) phi*(y0)), attached when a report is given.
inline RatioSeries davies_ratio_series(const HeatKernelEvaluator& ev, Vertex x, Vertex y, Vertex x0,
                                       Vertex y0, std::vector<double> t_grid = {},
                                       const CriticalityReport* rep = nullptr) {
  if (t_grid.empty()) t_grid = default_t_grid();
  validate_t_grid(t_grid);
  const int a = detail::ambient_in_first_level(ev, x, "x");
  const int b = detail::ambient_in_first_level(ev, y, "y");
  const int a0 = detail::ambient_in_first_level(ev, x0, "x0");
  const int b0 = detail::ambient_in_first_level(ev, y0, "y0");
  RatioSeries s;
  s.name = "davies_ratio";
  for (double t : t_grid) {
    auto k = detail::sample_kernel(ev, a, b, t);
    auto k0 = detail::sample_kernel(ev, a0, b0, t);
    if (!k.ok || !k0.ok) {
      s.excluded.push_back(t);
      continue;
    }
    detail::push_point(s, t, k.value / k0.value, k.rel_err + k0.rel_err, std::max(k.level, k0.level));
  }
  analyze_time_series(s);
  if (rep && ev.op().symmetric() && is_critical(rep->classification)) {
    auto g = ground_state_limit(ev.op(), ev.exhaustion(), a, b, a0, b0, false);
    s.predicted = g.converged() ? g.value : std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(s.predicted) && s.status == SeriesStatus::ConvergedTo)
      s.prediction_agrees = within(s.limit, s.limit_error, s.predicted, 1e-2 * std::abs(s.predicted));
  }
  return s;
}

struct ConjectureOptions {
  std::vector<double> t_grid;        // default_t_grid() when empty
  std::vector<Vertex> compact;       // vertex set for the uniform series and (Ass1m); default S_1
  std::optional<Vertex> y1;          // reference point of (Ass1m); default y
  bool check_preconditions = true;
  CriticalityOptions classify{};
};

/// Empirical (Ass1m) estimate: for each x in the compact set the ratio
/// k+(x, y1, t) / k0(x, y1, t) peaks at T(x); C is the largest peak.
struct Ass1mEstimate {
  double C = std::numeric_limits<double>::quiet_NaN();
  std::vector<Vertex> x;
  std::vector<double> onset;  // T(x)
  std::vector<double> peak;
};

struct ConjectureResult {
  RatioSeries series;   // k+/k0 at (x, y)
  RatioSeries uniform;  // max over compact x compact of the pointwise ratio
  Ass1mEstimate ass1m;
  /// Smallest grid time after which the ratio at (x, y) strictly decreases; NaN if never.
  double decreasing_from = std::numeric_limits<double>::quiet_NaN();
};

/// k_{P+}(x, y, t) / k_{P0}(x, y, t) with P0 critical and P+ subcritical.
inline ConjectureResult conjecture_ratio_series(const HeatKernelEvaluator& plus,
                                                const HeatKernelEvaluator& zero, Vertex x, Vertex y,
                                                ConjectureOptions opt = {}) {
  if (plus.op().domain().size() != zero.op().domain().size())
    throw ValidationError("P+ and P0 must live on the same domain");
  if (opt.t_grid.empty()) opt.t_grid = default_t_grid();
  validate_t_grid(opt.t_grid);
  if (opt.check_preconditions) {
    auto rz = classify(zero.op(), zero.exhaustion(), opt.classify);
    if (!is_critical(rz.classification))
      throw PreconditionError("P0 must be critical, classified " + std::string(to_string(rz.classification)));
    auto rp = classify(plus.op(), plus.exhaustion(), opt.classify);
    if (rp.classification != Classification::Subcritical)
      throw PreconditionError("P+ must be subcritical, classified " + std::string(to_string(rp.classification)));
  }
  const auto& d = zero.op().domain();
  const int a = d.index_of(x), b = d.index_of(y);
  ConjectureResult out;
  out.series.name = "conjecture_ratio";
  auto ratio = [&](int xa, int yb, double t, RatioSeries* into) -> std::optional<double> {
    auto kp = detail::sample_kernel(plus, xa, yb, t);
    auto k0 = detail::sample_kernel(zero, xa, yb, t);
    if (!kp.ok || !k0.ok) return std::nullopt;
    const double r = kp.value / k0.value;
    if (into) detail::push_point(*into, t, r, kp.rel_err + k0.rel_err, std::max(kp.level, k0.level));
    return r;
  };
  for (double t : opt.t_grid)
    if (!ratio(a, b, t, &out.series)) out.series.excluded.push_back(t);
  analyze_time_series(out.series);
  {
    const auto& v = out.series.values;
    int k = static_cast<int>(v.size()) - 1;
    while (k > 0 && v[k] < v[k - 1]) --k;
    if (k < static_cast<int>(v.size()) - 1) out.decreasing_from = out.series.t[k];
  }

  std::vector<int> compact;
  if (opt.compact.empty())
    compact = zero.exhaustion().level(0).members();
  else
    for (Vertex v : opt.compact) compact.push_back(d.index_of(v));
  const int y1 = opt.y1 ? d.index_of(*opt.y1) : b;

  out.uniform.name = "conjecture_ratio_uniform";
  for (double t : opt.t_grid) {
    double mx = -1.0;
    double err = 0.0;
    int lvl = -1;
    bool ok = true;
    for (int xa : compact) {
      for (int yb : compact) {
        RatioSeries one;
        if (!ratio(xa, yb, t, &one)) {
          ok = false;
          break;
        }
        if (one.values[0] > mx) {
          mx = one.values[0];
          err = one.errors[0];
        }
        lvl = std::max(lvl, one.levels[0]);
      }
      if (!ok) break;
    }
    if (!ok) {
      out.uniform.excluded.push_back(t);
      continue;
    }
    out.uniform.t.push_back(t);
    out.uniform.values.push_back(mx);
    out.uniform.errors.push_back(err);
    out.uniform.levels.push_back(lvl);
  }
  analyze_time_series(out.uniform);

  out.ass1m.C = 0.0;
  for (int xa : compact) {
    double peak = -1.0, onset = std::numeric_limits<double>::quiet_NaN();
    for (double t : opt.t_grid) {
      auto r = ratio(xa, y1, t, nullptr);
      if (r && *r > peak) {
        peak = *r;
        onset = t;
      }
    }
    if (peak < 0.0) continue;
    out.ass1m.x.push_back(d.label(xa));
    out.ass1m.onset.push_back(onset);
    out.ass1m.peak.push_back(peak);
    out.ass1m.C = std::max(out.ass1m.C, peak);
  }
  if (out.ass1m.x.empty()) out.ass1m.C = std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace critlab
