#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "critlab/domain.hpp"

namespace critlab {

enum class LimitStatus { Converged, Diverging, Inconclusive };

inline const char* to_string(LimitStatus s) {
  switch (s) {
    case LimitStatus::Converged: return "Converged";
    case LimitStatus::Diverging: return "Diverging";
    case LimitStatus::Inconclusive: return "Inconclusive";
  }
  return "?";
}

/// Exhaustion limit of a per-level sequence.
///
/// `level` is the 0-based index of the last level evaluated. A converged
/// result is either strict (two consecutive relative increments below the
/// tolerance) or extrapolated (geometrically shrinking increments whose
/// Richardson or Aitken estimates agree); `extrapolated` tells which, and
/// `error` is the last increment resp. the disagreement between estimates.
struct LimitResult {
  double value = std::numeric_limits<double>::quiet_NaN();
  LimitStatus status = LimitStatus::Inconclusive;
  int level = -1;
  bool extrapolated = false;
  double error = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> history;
  std::vector<int> levels;  // level index of each history entry
  std::string evidence;

  bool converged() const { return status == LimitStatus::Converged; }
  bool diverging() const { return status == LimitStatus::Diverging; }
};

struct LimitOptions {
  double rel_tol = 1e-9;
  double cap = 1e12;
  double ratio_max = 0.75;   // increments must shrink at least this fast to extrapolate
  double extrap_tol = 1e-6;  // relative agreement of extrapolation estimates
  bool allow_extrapolation = true;
  // Growing increments read as divergence. Off for quantities known to be
  // finite, where growth only means the levels are still small.
  bool growth_diverges = true;
};

struct Extrapolation {
  double value = std::numeric_limits<double>::quiet_NaN();
  double error = std::numeric_limits<double>::infinity();
};

/// Repeated Aitken delta-squared on the tail of a sequence. The error is the
/// gap between the last two stage estimates (or the last raw increment when
/// only one stage is possible).
inline Extrapolation iterated_aitken(std::span<const double> s) {
  Extrapolation out;
  if (s.empty()) return out;
  std::vector<double> stage(s.begin(), s.end());
  out.value = stage.back();
  if (stage.size() >= 2) out.error = std::abs(stage.back() - stage[stage.size() - 2]);
  double prev = out.value;
  while (stage.size() >= 3) {
    std::vector<double> next;
    for (std::size_t i = 0; i + 2 < stage.size(); ++i) {
      const double d1 = stage[i + 1] - stage[i];
      const double d2 = stage[i + 2] - stage[i + 1];
      const double den = d2 - d1;
      if (den == 0.0 || !std::isfinite(den)) {
        next.push_back(stage[i + 2]);
        continue;
      }
      next.push_back(stage[i + 2] - d2 * d2 / den);
    }
    out.value = next.back();
    out.error = std::abs(out.value - prev);
    prev = out.value;
    stage = std::move(next);
  }
  return out;
}

/// Polynomial (Richardson) extrapolation to step 0 from values s_i at steps
/// h_i, via the Neville table. The order is chosen where two neighbouring
/// estimates of the same order agree best; that gap is the error.
inline Extrapolation richardson(std::span<const double> h, std::span<const double> s,
                                int max_order = 4) {
  Extrapolation out;
  const std::size_t n = s.size();
  if (n == 0 || h.size() != n) return out;
  out.value = s.back();
  if (n >= 2) out.error = std::abs(s[n - 1] - s[n - 2]);
  std::vector<std::vector<double>> T(n);
  for (std::size_t i = 0; i < n; ++i) {
    T[i].push_back(s[i]);
    for (std::size_t k = 1; k <= i && k <= static_cast<std::size_t>(max_order); ++k) {
      const double hi = h[i], hk = h[i - k];
      T[i].push_back(T[i][k - 1] + (T[i][k - 1] - T[i - 1][k - 1]) * hi / (hk - hi));
    }
  }
  for (std::size_t k = 1; k < T[n - 1].size(); ++k) {
    if (T[n - 2].size() <= k) break;
    const double err = std::abs(T[n - 1][k] - T[n - 2][k]);
    if (err < out.error) {
      out.error = err;
      out.value = T[n - 1][k];
    }
  }
  return out;
}

/// Classify a level history. `final_level` means no further level exists.
///
/// `steps` (optional, parallel to the history) are the mesh sizes
/// h_j = 1/(|S_j| + 1) of the levels; with them the extrapolation is
/// Richardson in h, otherwise iterated Aitken.
inline double level_step(const IndexedSubdomain& s) { return 1.0 / (s.size() + 1.0); }

inline LimitResult assess_limit(std::vector<double> history, std::vector<int> levels,
                                const LimitOptions& opt, bool final_level,
                                const std::vector<double>& steps = {}) {
  LimitResult r;
  r.history = std::move(history);
  r.levels = std::move(levels);
  const auto& h = r.history;
  const std::size_t m = h.size();
  if (m == 0) {
    r.evidence = "no levels evaluated";
    return r;
  }
  r.level = r.levels.empty() ? static_cast<int>(m) - 1 : r.levels.back();
  r.value = h.back();
  for (double v : h) {
    if (!std::isfinite(v) || std::abs(v) > opt.cap) {
      r.status = LimitStatus::Diverging;
      r.evidence = "value exceeds the divergence cap";
      return r;
    }
  }
  if (m >= 2) r.error = std::abs(h[m - 1] - h[m - 2]);
  auto small = [&](std::size_t k) {  // increment h[k] - h[k-1] relative to the latest value
    const double scale = std::max(std::abs(h.back()), std::numeric_limits<double>::min());
    return std::abs(h[k] - h[k - 1]) <= opt.rel_tol * scale;
  };
  if (m >= 3 && small(m - 1) && small(m - 2)) {
    r.status = LimitStatus::Converged;
    r.evidence = "two consecutive relative increments below tolerance";
    return r;
  }
  if (m >= 4) {
    const double d1 = h[m - 3] - h[m - 4], d2 = h[m - 2] - h[m - 3], d3 = h[m - 1] - h[m - 2];
    const bool same_sign = (d1 > 0 && d2 > 0 && d3 > 0) || (d1 < 0 && d2 < 0 && d3 < 0);
    if (opt.growth_diverges && same_sign && !small(m - 1) && std::abs(d2) >= std::abs(d1) &&
        std::abs(d3) >= std::abs(d2)) {
      r.status = LimitStatus::Diverging;
      r.evidence = "increments nondecreasing over 3 levels";
      return r;
    }
    if (opt.allow_extrapolation && same_sign && std::abs(d2) <= opt.ratio_max * std::abs(d1) &&
        std::abs(d3) <= opt.ratio_max * std::abs(d2)) {
      // Longest same-signed tail, at most 8 values.
      std::size_t start = m - 4;
      while (start > 0 && m - start < 8) {
        const double d = h[start] - h[start - 1];
        if ((d > 0) != (d3 > 0) || d == 0.0) break;
        --start;
      }
      auto ex = steps.size() == m
                    ? richardson(std::span<const double>(steps).subspan(start),
                                 std::span<const double>(h).subspan(start))
                    : iterated_aitken(std::span<const double>(h).subspan(start));
      const double scale = std::max(std::abs(ex.value), std::numeric_limits<double>::min());
      if (std::isfinite(ex.value) && ex.error <= opt.extrap_tol * scale) {
        r.status = LimitStatus::Converged;
        r.extrapolated = true;
        r.value = ex.value;
        r.error = ex.error;
        r.evidence = steps.size() == m ? "geometrically shrinking increments, Richardson-extrapolated"
                                        : "geometrically shrinking increments, Aitken-extrapolated";
        return r;
      }
    }
  }
  r.evidence = final_level ? "ambient truncation exhausted before convergence"
                           : "not yet converged";
  return r;
}

/// Runs a per-level sequence from level j0 until its limit is decided:
/// strict convergence, two consecutive agreeing extrapolations, divergence,
/// or the last level (exact when the exhaustion is closed).
template <class F>
LimitResult exhaustion_limit(const Exhaustion& e, int j0, F&& value_at, const LimitOptions& o) {
  std::vector<double> hist, steps;
  std::vector<int> lv;
  LimitResult r, prev;
  bool have_prev = false;
  for (int j = j0; j < e.level_count(); ++j) {
    const bool final_level = j + 1 == e.level_count();
    hist.push_back(value_at(j));
    lv.push_back(j);
    steps.push_back(level_step(e.level(j)));
    if (final_level && e.closed()) {
      r = assess_limit(hist, lv, o, true);
      r.status = LimitStatus::Converged;
      r.extrapolated = false;
      r.value = hist.back();
      r.error = 0.0;
      r.evidence = "closed domain: final level is exact";
      return r;
    }
    r = assess_limit(hist, lv, o, final_level, steps);
    if (r.diverging() || (r.converged() && !r.extrapolated)) return r;
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

}  // namespace critlab
