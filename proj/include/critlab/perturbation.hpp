#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "critlab/criticality.hpp"
#include "critlab/domain.hpp"
#include "critlab/errors.hpp"
#include "critlab/kernel.hpp"
#include "critlab/linalg.hpp"
#include "critlab/operator.hpp"

namespace critlab {

/// Composite Simpson weights on m equal intervals (unit step); for odd m the
/// last three intervals use the 3/8 rule, and m = 1 is the trapezoid.
inline std::vector<double> simpson_weights(int m) {
  std::vector<double> w(m + 1, 0.0);
  if (m == 0) return w;
  if (m == 1) {
    w[0] = w[1] = 0.5;
    return w;
  }
  const int even = (m % 2 == 0) ? m : m - 3;
  for (int i = 0; i + 2 <= even; i += 2) {
    w[i] += 1.0 / 3.0;
    w[i + 1] += 4.0 / 3.0;
    w[i + 2] += 1.0 / 3.0;
  }
  if (even != m) {
    w[even] += 3.0 / 8.0;
    w[even + 1] += 9.0 / 8.0;
    w[even + 2] += 9.0 / 8.0;
    w[even + 3] += 3.0 / 8.0;
  }
  return w;
}

inline std::vector<double> geometric_grid(double a, double b, int n) {
  if (!(a > 0.0 && b >= a) || n < 1) throw ValidationError("geometric grid needs 0 < a <= b and n >= 1");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = n == 1 ? a : a * std::pow(b / a, double(i) / (n - 1));
  return g;
}

struct QuadratureSpec {
  int steps = 1024;        // intervals on [0, t]
  double tol = 1e-8;       // relative halving tolerance
  int max_steps = 16384;   // refinement cap
};

struct KernelSample {
  int x = 0;  // ambient indices
  int y = 0;
  double t = 0.0;
};

/// Seeded uniform vertex pairs in a subset with log-uniform times.
inline std::vector<KernelSample> random_samples(const IndexedSubdomain& s, int count, double t_min,
                                                double t_max, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, s.size() - 1);
  std::uniform_real_distribution<double> lt(std::log(t_min), std::log(t_max));
  std::vector<KernelSample> out(count);
  for (auto& smp : out) {
    smp.x = s.ambient(pick(rng));
    smp.y = s.ambient(pick(rng));
    smp.t = std::exp(lt(rng));
  }
  return out;
}

/// Iterated kernels k^(j) of P and V on a finite subset,
///   k^(0) = k,  k^(j)(x,y,t) = int_0^t sum_z k(x,z,t-s) V(z) k^(j-1)(z,y,s) mu(z) ds,
/// which by associativity of the time convolution equals the recursion with
/// k^(j-1) on the left. For fixed y all layers are carried as columns over x,
/// and only their restriction to supp V feeds the next layer.
class IteratedKernelStack {
 public:
  IteratedKernelStack(EllipticOperator p, Potential v, IndexedSubdomain s, int max_order = 64,
                      QuadratureSpec q = {})
      : op_(std::move(p)), v_(std::move(v)), s_(std::move(s)), max_order_(max_order), quad_(q) {
    if (v_.size() != op_.size()) throw ValidationError("potential size does not match the operator");
    for (int a = 0; a < s_.size(); ++a)
      if (v_[s_.ambient(a)] != 0.0) support_.push_back(a);
  }

  const EllipticOperator& op() const { return op_; }
  const Potential& potential() const { return v_; }
  const IndexedSubdomain& subset() const { return s_; }
  int max_order() const { return max_order_; }
  const QuadratureSpec& quadrature() const { return quad_; }

  /// Columns k^(j)(., y, t) over the subset for j = 0..J at a fixed step count.
  std::vector<Eigen::VectorXd> columns(int J, int y, double t, int steps) const {
    const int n = s_.size();
    const int r = static_cast<int>(support_.size());
    const int yb = detail::local_or_throw(s_, y, op_.domain());
    const double muy = op_.domain().measure(y);
    std::vector<Eigen::VectorXd> out;
    if (t == 0.0) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
      c[yb] = 1.0 / muy;
      out.push_back(c);
      for (int j = 1; j <= J; ++j) out.push_back(Eigen::VectorXd::Zero(n));
      return out;
    }
    const int N = steps;
    const double h = t / N;
    if (double(N + 1) * n * (r + 1) > 6e7)
      throw ValidationError("iterated kernel workspace too large; use a smaller subset or fewer steps");
    const Eigen::MatrixXd Eh = step_matrix(op_, s_, h, t);
    // cols[k] = E_h^k [:, supp V, y]
    std::vector<Eigen::MatrixXd> cols(N + 1);
    cols[0] = Eigen::MatrixXd::Zero(n, r + 1);
    for (int k = 0; k < r; ++k) cols[0](support_[k], k) = 1.0;
    cols[0](yb, r) = 1.0;
    for (int k = 1; k <= N; ++k) cols[k] = Eh * cols[k - 1];
    out.push_back(cols[N].col(r) / muy);
    if (J == 0) return out;
    if (r == 0) {
      for (int j = 1; j <= J; ++j) out.push_back(Eigen::VectorXd::Zero(n));
      return out;
    }
    Eigen::VectorXd vz(r);
    for (int k = 0; k < r; ++k) vz[k] = v_[s_.ambient(support_[k])];
    // u[i] = V . k^(j-1)(., y, s_i) on supp V
    std::vector<Eigen::VectorXd> u(N + 1);
    for (int i = 0; i <= N; ++i) {
      Eigen::VectorXd c(r);
      for (int k = 0; k < r; ++k) c[k] = cols[i](support_[k], r) / muy;
      u[i] = vz.cwiseProduct(c);
    }
    std::vector<std::vector<double>> W(N + 1);
    for (int m = 0; m <= N; ++m) W[m] = simpson_weights(m);
    for (int j = 1; j <= J; ++j) {
      Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
      for (int i = 0; i <= N; ++i) full += (W[N][i] * h) * (cols[N - i].leftCols(r) * u[i]);
      out.push_back(full);
      if (j == J) break;
      std::vector<Eigen::VectorXd> next(N + 1);
      for (int m = 0; m <= N; ++m) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(r);
        for (int i = 0; i <= m; ++i) {
          if (W[m][i] == 0.0) continue;
          const Eigen::MatrixXd& C = cols[m - i];
          for (int a = 0; a < r; ++a) {
            double sum = 0.0;
            for (int b = 0; b < r; ++b) sum += C(support_[a], b) * u[i][b];
            acc[a] += W[m][i] * h * sum;
          }
        }
        next[m] = vz.cwiseProduct(acc);
      }
      u = std::move(next);
    }
    return out;
  }

  struct Layers {
    std::vector<Eigen::VectorXd> columns;
    int steps = 0;
    double halving_gap = 0.0;  // max relative change against half the steps
  };

  /// Layers 0..J with the halving self-check (accepted when N and N/2 steps
  /// agree to the relative tolerance); refines up to max_steps.
  Layers checked_columns(int J, int y, double t) const {
    if (J < 0 || J > max_order_) throw ValidationError("iterated kernel order out of range");
    int N = std::max(2, quad_.steps);
    auto coarse = columns(J, y, t, N / 2);
    for (;;) {
      auto fine = columns(J, y, t, N);
      double gap = 0.0;
      for (int j = 0; j <= J; ++j) {
        const Eigen::VectorXd& a = fine[j];
        const Eigen::VectorXd& b = coarse[j];
        for (Eigen::Index x = 0; x < a.size(); ++x) {
          const double d = std::abs(a[x] - b[x]);
          if (d == 0.0) continue;
          gap = std::max(gap, d / std::max(std::abs(a[x]), 1e-300));
        }
      }
      if (gap <= quad_.tol) {
        // Simpson's error scales as h^4, so one Richardson step on the pair
        // already at hand removes the leading term.
        for (int j = 0; j <= J; ++j) fine[j] += (fine[j] - coarse[j]) / 15.0;
        return {std::move(fine), N, gap};
      }
      if (2 * N > quad_.max_steps)
        throw NumericalError("quadrature step too coarse: halving changes iterated kernels by " +
                             std::to_string(gap));
      coarse = std::move(fine);
      N *= 2;
    }
  }

 private:
  EllipticOperator op_;
  Potential v_;
  IndexedSubdomain s_;
  int max_order_;
  QuadratureSpec quad_;
  std::vector<int> support_;  // local indices with V != 0
};

inline double iterated_kernel(const IteratedKernelStack& st, int j, Vertex x, Vertex y, double t) {
  const auto& d = st.op().domain();
  const int xa = detail::local_or_throw(st.subset(), d.index_of(x), d);
  auto layers = st.checked_columns(j, d.index_of(y), t);
  return layers.columns[j][xa];
}

struct NeumannResult {
  double value = 0.0;
  int terms_used = 0;
  bool converged = false;
  double last_term = 0.0;
};

/// sum_j (-eps)^j k^(j)(x,y,t), stopped when the next term falls below
/// series_tol * |partial sum|; at most max_order + 1 terms.
inline NeumannResult neumann_heat_kernel(const IteratedKernelStack& st, double eps, Vertex x, Vertex y,
                                         double t, double series_tol = 1e-12) {
  const auto& d = st.op().domain();
  const int xa = detail::local_or_throw(st.subset(), d.index_of(x), d);
  const int yi = d.index_of(y);
  NeumannResult out;
  if (eps == 0.0) {
    out.value = st.checked_columns(0, yi, t).columns[0][xa];
    out.terms_used = 1;
    out.converged = true;
    return out;
  }
  for (int J = std::min(16, st.max_order());; J = std::min(2 * J, st.max_order())) {
    auto layers = st.checked_columns(J, yi, t);
    double sum = 0.0, coef = 1.0;
    for (int j = 0; j <= J; ++j) {
      const double term = coef * layers.columns[j][xa];
      out.terms_used = j + 1;
      out.last_term = term;
      if (j > 0 && std::abs(term) < series_tol * std::abs(sum)) {
        out.value = sum;
        out.converged = true;
        return out;
      }
      sum += term;
      coef *= -eps;
    }
    out.value = sum;
    if (J == st.max_order()) return out;  // not converged within the term budget
  }
}

struct DuhamelResult {
  double residual = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  int steps = 0;
};

/// |k_{P+eps V} - (k_P - eps int_0^t sum_z k_P(x,z,t-s) V(z) k_{P+eps V}(z,y,s) mu(z) ds)|
/// with both kernels from direct exponentials and Simpson in s.
inline DuhamelResult duhamel_residual(const EllipticOperator& p, const Potential& v, double eps,
                                      const IndexedSubdomain& s, Vertex x, Vertex y, double t,
                                      QuadratureSpec q = {}) {
  const auto& d = p.domain();
  const int xa = detail::local_or_throw(s, d.index_of(x), d);
  const int yb = detail::local_or_throw(s, d.index_of(y), d);
  if (!(t > 0.0)) throw ValidationError("Duhamel residual needs t > 0");
  const EllipticOperator pe = perturb(p, v, eps);
  const Eigen::VectorXd mu = p.measure_on(s);
  const int n = s.size();
  Eigen::VectorXd vz(n);
  for (int a = 0; a < n; ++a) vz[a] = v[s.ambient(a)];
  DuhamelResult out;
  out.lhs = heat_matrix_finite(pe, s, t)(xa, yb);
  const double k0 = heat_matrix_finite(p, s, t)(xa, yb);
  auto integral = [&](int N) {
    const double h = t / N;
    const Eigen::MatrixXd A = step_matrix(p, s, h, t);
    const Eigen::MatrixXd B = step_matrix(pe, s, h, t);
    // rows[k] = e_x^T E_P(kh), cols[k] = E_{P+eps V}(kh) e_y / mu(y)
    std::vector<Eigen::RowVectorXd> rows(N + 1);
    std::vector<Eigen::VectorXd> cols(N + 1);
    rows[0] = Eigen::RowVectorXd::Zero(n);
    rows[0][xa] = 1.0;
    cols[0] = Eigen::VectorXd::Zero(n);
    cols[0][yb] = 1.0 / mu[yb];
    for (int k = 1; k <= N; ++k) {
      rows[k] = rows[k - 1] * A;
      cols[k] = B * cols[k - 1];
    }
    const auto w = simpson_weights(N);
    double acc = 0.0;
    for (int i = 0; i <= N; ++i) acc += w[i] * h * rows[N - i].dot(vz.cwiseProduct(cols[i]));
    return acc;
  };
  int N = std::max(2, q.steps);
  double coarse = integral(N / 2);
  for (;;) {
    const double fine = integral(N);
    const double gap = std::abs(fine - coarse);
    if (gap <= q.tol * std::max(std::abs(fine), 1e-300) || fine == coarse) {
      out.rhs = k0 - eps * (fine + (fine - coarse) / 15.0);
      out.steps = N;
      break;
    }
    if (2 * N > q.max_steps)
      throw NumericalError("quadrature step too coarse: halving changes the Duhamel integral by " +
                           std::to_string(gap));
    coarse = fine;
    N *= 2;
  }
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

struct ThreeKEstimate {
  double C = 0.0;              // running maximum of the sampled ratios
  bool unbounded = false;      // growth-trend verdict
  double slope = 0.0;          // log-log slope of max_x ratio over the final decade of t
  std::vector<double> t;
  std::vector<double> max_ratio;  // per t
  int samples = 0;
};

struct ThreeKSampleSpec {
  std::vector<int> ys;          // ambient indices; empty = every vertex of the subset
  std::vector<double> t_grid;   // empty = geometric 0.05..100, 40 points
};

/// C = max over samples of [int_0^t sum_z k(x,z,t-s)|V(z)|k(z,y,s) mu ds] / k(x,y,t).
/// x ranges over the whole subset; a single y gives the k-semibounded variant.
inline ThreeKEstimate three_k_constant(const EllipticOperator& p, const Potential& v,
                                       const IndexedSubdomain& s, ThreeKSampleSpec spec = {},
                                       QuadratureSpec q = {}) {
  if (spec.t_grid.empty()) spec.t_grid = geometric_grid(0.05, 100.0, 40);
  if (spec.ys.empty()) spec.ys = s.members();
  IteratedKernelStack st(p, v.abs(), s, 1, q);
  ThreeKEstimate out;
  for (double t : spec.t_grid) {
    double mx = 0.0;
    for (int y : spec.ys) {
      auto layers = st.checked_columns(1, y, t);
      for (Eigen::Index a = 0; a < layers.columns[0].size(); ++a) {
        const double k0 = layers.columns[0][a];
        if (!(k0 > 0.0)) continue;
        mx = std::max(mx, layers.columns[1][a] / k0);
        ++out.samples;
      }
    }
    out.t.push_back(t);
    out.max_ratio.push_back(mx);
    out.C = std::max(out.C, mx);
  }
  // Trend over the final decade of t.
  const double t_end = out.t.back();
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < out.t.size(); ++i)
    if (out.t[i] >= t_end / 10.0 && out.max_ratio[i] > 0.0) {
      lx.push_back(std::log(out.t[i]));
      ly.push_back(std::log(out.max_ratio[i]));
    }
  if (lx.size() >= 3) {
    Eigen::MatrixXd X(lx.size(), 2);
    Eigen::VectorXd y(ly.size());
    for (std::size_t i = 0; i < lx.size(); ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = lx[i];
      y[i] = ly[i];
    }
    out.slope = linalg::least_squares(X, y).coef[1];
    const std::size_t m = out.max_ratio.size();
    const bool rising = out.max_ratio[m - 1] > out.max_ratio[m - 2] && out.max_ratio[m - 2] > out.max_ratio[m - 3];
    out.unbounded = out.slope > 0.25 && rising;
  }
  return out;
}

/// One CSV-ready comparison: lhs <= rhs is the checked inequality.
struct ComparisonRow {
  int x = 0, y = 0;  // ambient indices
  double t = 0.0;
  double alpha_or_eps = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs
};

struct EquivalenceReport {
  double C_estimate = 0.0;
  bool C_unbounded = false;
  double epsilon = 0.0;
  double upper_ratio = 0.0;   // sup k_{P+eps V} / k_P over samples
  double lower_ratio = 0.0;   // inf
  double upper_bound = std::numeric_limits<double>::infinity();  // 1/(1 - C|eps|)
  double lower_bound = 0.0;   // (1 - 2C|eps|)/(1 - C|eps|), meaningful when C|eps| < 1/2
  bool bound_asserted = false;
  bool bound_satisfied = true;
  bool lower_satisfied = true;
  bool max_principle_checked = false;
  bool max_principle_holds = true;
  std::vector<ComparisonRow> rows;
};

/// Checks the equivalence bounds implied by the 3-k constant. The bounds are
/// conditional: the sampled C is only a lower estimate of the true supremum.
inline std::vector<EquivalenceReport> equivalence_check(const EllipticOperator& p, const Potential& v,
                                                        const IndexedSubdomain& s,
                                                        const std::vector<double>& eps_list,
                                                        const ThreeKEstimate& C,
                                                        const std::vector<KernelSample>& samples,
                                                        double slack = 1e-6) {
  std::vector<EquivalenceReport> out;
  std::vector<double> times;
  for (const auto& smp : samples) times.push_back(smp.t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::map<double, Eigen::MatrixXd> base;
  for (double t : times) base.emplace(t, heat_matrix_finite(p, s, t));
  for (double eps : eps_list) {
    EquivalenceReport rep;
    rep.C_estimate = C.C;
    rep.C_unbounded = C.unbounded;
    rep.epsilon = eps;
    const double ce = C.C * std::abs(eps);
    rep.bound_asserted = !C.unbounded && ce < 1.0;
    if (ce < 1.0) rep.upper_bound = 1.0 / (1.0 - ce);
    if (ce < 0.5) rep.lower_bound = (1.0 - 2.0 * ce) / (1.0 - ce);
    rep.max_principle_checked = v.is_nonnegative() && eps > 0.0;
    const EllipticOperator pe = perturb(p, v, eps);
    std::map<double, Eigen::MatrixXd> pert;
    for (double t : times) pert.emplace(t, heat_matrix_finite(pe, s, t));
    rep.upper_ratio = 0.0;
    rep.lower_ratio = std::numeric_limits<double>::infinity();
    for (const auto& smp : samples) {
      const int a = s.local(smp.x), b = s.local(smp.y);
      if (a < 0 || b < 0) throw ValidationError("sample vertex outside the subset");
      const double k0 = base.at(smp.t)(a, b), k1 = pert.at(smp.t)(a, b);
      if (!(k0 > 0.0)) continue;
      const double ratio = k1 / k0;
      rep.upper_ratio = std::max(rep.upper_ratio, ratio);
      rep.lower_ratio = std::min(rep.lower_ratio, ratio);
      const double rhs = rep.max_principle_checked ? std::min(k0, rep.upper_bound * k0) : rep.upper_bound * k0;
      rep.rows.push_back({smp.x, smp.y, smp.t, eps, k1, rhs, rhs - k1});
      if (rep.max_principle_checked && k1 > k0 * (1.0 + 1e-10)) rep.max_principle_holds = false;
    }
    if (rep.bound_asserted) {
      rep.bound_satisfied = rep.upper_ratio <= rep.upper_bound * (1.0 + slack);
      if (ce < 0.5) rep.lower_satisfied = rep.lower_ratio >= rep.lower_bound * (1.0 - slack);
    }
    out.push_back(std::move(rep));
  }
  return out;
}

struct ConvexityReport {
  bool holds = true;
  double worst_margin = std::numeric_limits<double>::infinity();  // min of (rhs - lhs)/rhs
  std::vector<ComparisonRow> rows;
  std::vector<std::pair<double, bool>> interior_subcritical;  // (alpha, classify says Subcritical)
};

/// k_{P_alpha} <= k_{P_0}^{1-alpha} k_{P_1}^alpha with P_alpha = P_0 + alpha V,
/// at every sample, with relative slack. Both endpoints must satisfy
/// lambda0 >= 0 along the exhaustion; the subset is level `level` of it.
inline ConvexityReport convexity_check(const EllipticOperator& p0, const Potential& v, const Exhaustion& e,
                                       int level, const std::vector<double>& alphas,
                                       const std::vector<KernelSample>& samples, double slack = 1e-10,
                                       bool classify_interior = false) {
  const EllipticOperator p1 = perturb(p0, v, 1.0);
  for (const auto* op : {&p0, &p1}) {
    const auto l = lambda0(*op, e);
    if (l.value + l.error < -1e-8)
      throw ValidationError("convexity lemma needs lambda0 >= 0 at both endpoints");
  }
  const auto& s = e.level(level);
  std::vector<double> times;
  for (const auto& smp : samples) times.push_back(smp.t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  ConvexityReport rep;
  std::map<double, Eigen::MatrixXd> k0, k1;
  for (double t : times) {
    k0.emplace(t, heat_matrix_finite(p0, s, t));
    k1.emplace(t, heat_matrix_finite(p1, s, t));
  }
  for (double alpha : alphas) {
    const EllipticOperator pa = perturb(p0, v, alpha);
    std::map<double, Eigen::MatrixXd> ka;
    for (double t : times) ka.emplace(t, heat_matrix_finite(pa, s, t));
    for (const auto& smp : samples) {
      const int a = s.local(smp.x), b = s.local(smp.y);
      if (a < 0 || b < 0) throw ValidationError("sample vertex outside the subset");
      const double lhs = ka.at(smp.t)(a, b);
      const double rhs = std::pow(k0.at(smp.t)(a, b), 1.0 - alpha) * std::pow(k1.at(smp.t)(a, b), alpha);
      rep.rows.push_back({smp.x, smp.y, smp.t, alpha, lhs, rhs, rhs - lhs});
      if (rhs > 0.0) rep.worst_margin = std::min(rep.worst_margin, (rhs - lhs) / rhs);
      if (lhs > rhs * (1.0 + slack)) rep.holds = false;
    }
    if (classify_interior && alpha > 0.0 && alpha < 1.0 && !v.is_zero()) {
      try {
        rep.interior_subcritical.emplace_back(alpha, classify(pa, e).classification == Classification::Subcritical);
      } catch (const std::exception&) {
        rep.interior_subcritical.emplace_back(alpha, false);
      }
    }
  }
  return rep;
}

}  // namespace critlab
