#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "critlab/domain.hpp"
#include "critlab/errors.hpp"

namespace critlab {

/// Real function on the vertices (dense, ambient indexing).
using VertexFunction = std::vector<double>;

class Potential {
 public:
  explicit Potential(VertexFunction values) : values_(std::move(values)) {}
  static Potential zero(int n) { return Potential(VertexFunction(n, 0.0)); }
  static Potential constant(int n, double c) { return Potential(VertexFunction(n, c)); }
  static Potential indicator(const WeightedDomain& d, Vertex v, double height = 1.0) {
    VertexFunction f(d.size(), 0.0);
    f[d.index_of(v)] = height;
    return Potential(std::move(f));
  }

  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  const VertexFunction& values() const { return values_; }

  Potential positive_part() const {
    VertexFunction f(values_.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::max(values_[i], 0.0);
    return Potential(std::move(f));
  }
  Potential negative_part() const {
    VertexFunction f(values_.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::max(-values_[i], 0.0);
    return Potential(std::move(f));
  }
  Potential abs() const {
    VertexFunction f(values_.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::abs(values_[i]);
    return Potential(std::move(f));
  }
  Potential scaled(double a) const {
    VertexFunction f(values_);
    for (auto& v : f) v *= a;
    return Potential(std::move(f));
  }
  std::vector<int> support() const {
    std::vector<int> s;
    for (int i = 0; i < size(); ++i)
      if (values_[i] != 0.0) s.push_back(i);
    return s;
  }
  bool is_zero() const { return support().empty(); }
  bool is_nonnegative() const {
    for (double v : values_)
      if (v < 0.0) return false;
    return true;
  }

 private:
  VertexFunction values_;
};

/// `x V(x)` per line; vertices not listed get 0.
inline Potential read_potential_file(const WeightedDomain& domain, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open potential file " + path);
  VertexFunction f(domain.size(), 0.0);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string s; ls >> s;) tok.push_back(s);
    if (tok.empty()) continue;
    if (tok.size() != 2)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected `x V(x)`");
    try {
      f[domain.index_of(std::stoll(tok[0]))] = std::stod(tok[1]);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return Potential(std::move(f));
}

/// Discrete elliptic operator
///   (Pu)(x) = (1/mu(x)) sum_y w(x,y) (u(x) - u(y)) + D(x) u(x).
///
/// Stored through the flux diagonal L(x,x) = sum_y w(x,y) + D(x) mu(x), so that
/// the action matrix is K = diag(mu)^-1 L with L(x,y) = -w(x,y). The adjoint
/// keeps L(x,x) and transposes w, which makes adjoint an exact involution.
class EllipticOperator {
 public:
  EllipticOperator(DomainPtr domain, std::vector<double> flux_diagonal)
      : domain_(std::move(domain)), diag_(std::move(flux_diagonal)) {
    if (static_cast<int>(diag_.size()) != domain_->size())
      throw ValidationError("operator diagonal size does not match the domain");
  }

  const WeightedDomain& domain() const { return *domain_; }
  const DomainPtr& domain_ptr() const { return domain_; }
  int size() const { return domain_->size(); }
  bool symmetric() const { return domain_->symmetric(); }
  const std::vector<double>& flux_diagonal() const { return diag_; }

  double potential(int i) const {
    return (diag_[i] - domain_->out_weight(i)) / domain_->measure(i);
  }
  Potential potential() const {
    VertexFunction d(size());
    for (int i = 0; i < size(); ++i) d[i] = potential(i);
    return Potential(std::move(d));
  }

  /// K(x,x) on the full domain.
  double action_diagonal(int i) const { return diag_[i] / domain_->measure(i); }

  /// L restricted to the subset (killing outside): L_S = diag(mu_S) K_S.
  Eigen::SparseMatrix<double> flux_matrix(const IndexedSubdomain& s) const {
    std::vector<Eigen::Triplet<double>> trip;
    for (int a = 0; a < s.size(); ++a) {
      const int x = s.ambient(a);
      trip.emplace_back(a, a, diag_[x]);
      for (const auto& e : domain_->out_edges(x)) {
        const int b = s.local(e.to);
        if (b >= 0) trip.emplace_back(a, b, -e.weight);
      }
    }
    Eigen::SparseMatrix<double> L(s.size(), s.size());
    L.setFromTriplets(trip.begin(), trip.end());
    return L;
  }

  Eigen::MatrixXd action_matrix(const IndexedSubdomain& s) const {
    Eigen::MatrixXd K = Eigen::MatrixXd(flux_matrix(s));
    for (int a = 0; a < s.size(); ++a) K.row(a) /= domain_->measure(s.ambient(a));
    return K;
  }

  Eigen::VectorXd measure_on(const IndexedSubdomain& s) const {
    Eigen::VectorXd m(s.size());
    for (int a = 0; a < s.size(); ++a) m[a] = domain_->measure(s.ambient(a));
    return m;
  }

  /// (Pu)(x) over the whole domain.
  VertexFunction apply(const VertexFunction& u) const {
    if (static_cast<int>(u.size()) != size()) throw ValidationError("function size mismatch");
    VertexFunction out(size());
    for (int x = 0; x < size(); ++x) {
      double acc = diag_[x] * u[x];
      for (const auto& e : domain_->out_edges(x)) acc -= e.weight * u[e.to];
      out[x] = acc / domain_->measure(x);
    }
    return out;
  }

 private:
  DomainPtr domain_;
  std::vector<double> diag_;
};

inline EllipticOperator assemble(DomainPtr domain, const Potential& potential) {
  if (potential.size() != domain->size())
    throw ValidationError("potential has " + std::to_string(potential.size()) +
                          " values, domain has " + std::to_string(domain->size()) + " vertices");
  std::vector<double> diag(domain->size());
  for (int i = 0; i < domain->size(); ++i)
    diag[i] = domain->out_weight(i) + potential[i] * domain->measure(i);
  return EllipticOperator(std::move(domain), std::move(diag));
}

inline EllipticOperator assemble(DomainPtr domain) {
  const int n = domain->size();
  return assemble(std::move(domain), Potential::zero(n));
}

/// Formal adjoint in L^2(mu): action matrix diag(mu)^-1 K^T diag(mu).
inline EllipticOperator adjoint(const EllipticOperator& p) {
  if (p.symmetric()) return p;
  auto transposed = std::make_shared<const WeightedDomain>(p.domain().transposed());
  return EllipticOperator(std::move(transposed), p.flux_diagonal());
}

/// P - lambda.
inline EllipticOperator shift(const EllipticOperator& p, double lambda) {
  if (lambda == 0.0) return p;
  std::vector<double> diag = p.flux_diagonal();
  for (int i = 0; i < p.size(); ++i) diag[i] -= lambda * p.domain().measure(i);
  return EllipticOperator(p.domain_ptr(), std::move(diag));
}

/// P + alpha V.
inline EllipticOperator perturb(const EllipticOperator& p, const Potential& v, double alpha) {
  if (v.size() != p.size()) throw ValidationError("potential size does not match the operator");
  if (alpha == 0.0) return p;
  std::vector<double> diag = p.flux_diagonal();
  for (int i = 0; i < p.size(); ++i) diag[i] += alpha * v[i] * p.domain().measure(i);
  return EllipticOperator(p.domain_ptr(), std::move(diag));
}

inline double inner_product(const WeightedDomain& d, const VertexFunction& f,
                            const VertexFunction& g) {
  double acc = 0.0;
  for (int i = 0; i < d.size(); ++i) acc += f[i] * g[i] * d.measure(i);
  return acc;
}

/// Q[u] = sum over unordered edges w (u(x)-u(y))^2 + sum_x D u^2 mu.
inline double quadratic_form(const EllipticOperator& p, const VertexFunction& u) {
  if (!p.symmetric()) throw ValidationError("quadratic_form requires a symmetric operator");
  if (static_cast<int>(u.size()) != p.size()) throw ValidationError("function size mismatch");
  const auto& d = p.domain();
  double q = 0.0;
  for (int x = 0; x < d.size(); ++x) {
    for (const auto& e : d.out_edges(x))
      if (e.to > x) q += e.weight * (u[x] - u[e.to]) * (u[x] - u[e.to]);
    q += (p.flux_diagonal()[x] - d.out_weight(x)) * u[x] * u[x];
  }
  return q;
}

/// P_alpha = P + alpha V over a coupling interval.
struct OperatorFamily {
  EllipticOperator base;
  Potential perturbation;
  double alpha_min = 0.0;
  double alpha_max = 1.0;

  EllipticOperator member(double alpha) const { return perturb(base, perturbation, alpha); }
};

}  // namespace critlab
