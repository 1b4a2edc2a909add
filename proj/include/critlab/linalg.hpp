#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "critlab/errors.hpp"

namespace critlab::linalg {

/// exp(B) for a Metzler matrix B (off-diagonal entries >= 0).
///
/// Uniformization: A = B + sigma I is entrywise nonnegative, so the scaled
/// Taylor sum of exp(A / 2^s) and the repeated squarings add only nonnegative
/// terms. The result is nonnegative with entrywise relative accuracy, which a
/// Pade approximant with its denominator solve cannot guarantee for the tiny
/// far-off-diagonal entries heat kernels are made of. The squaring count is
/// chosen from the infinity norm and from the matrix size (paths longer than
/// the Taylor order must be assembled by squaring).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> expm_metzler_in(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& B) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = B.rows();
  if (n == 0) return B;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && B(i, j) < 0) throw NumericalError("expm_metzler: negative off-diagonal entry");
  const Scalar sigma = std::max(Scalar(0), -B.diagonal().minCoeff());
  Mat A = B;
  A.diagonal().array() += sigma;
  const double norm = static_cast<double>(A.rowwise().sum().maxCoeff());
  constexpr double theta = 0.25;
  constexpr int order = 18;
  const double target = std::max({norm / theta, double(n - 1), 1.0});
  int s = std::max(0, static_cast<int>(std::ceil(std::log2(target))));
  const Scalar scale = std::ldexp(Scalar(1), -s);
  A *= scale;
  Mat E = Mat::Identity(n, n);
  Mat term = Mat::Identity(n, n);
  for (int k = 1; k <= order; ++k) {
    term = (term * A) / Scalar(k);
    E += term;
  }
  E *= std::exp(-sigma * scale);
  for (int k = 0; k < s; ++k) E = E * E;
  return E;
}

inline Eigen::MatrixXd expm_metzler(const Eigen::MatrixXd& B) { return expm_metzler_in<double>(B); }

/// Same, carried out in extended precision. The shift by the largest rate
/// costs slow rates about sigma * eps in absolute terms, so stiff matrices
/// (strongly graded measures) gain the extra ~11 bits of long double.
inline Eigen::MatrixXd expm_metzler_extended(const Eigen::MatrixXd& B) {
  using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  return expm_metzler_in<long double>(MatL(B.cast<long double>())).cast<double>();
}

/// Eigen-decomposition of a symmetric-in-mu operator K = diag(mu)^-1 L.
///
/// Computed from a shifted-inverse form: with L + sM = R^T R
/// (s from a Gershgorin bound so that L + sM is positive definite) the
/// matrix R^-T M R^-1 is symmetric with eigenvalues 1/(lambda + s) in (0, 1].
/// All entries stay O(1) even for strongly graded measures, so the low modes
/// that govern large-time behaviour keep full relative accuracy. Modes whose
/// shifted eigenvalue is below rounding level (lambda ~ 1/eps) are dropped;
/// they only matter for t below ~1e-12.
struct SymmetricSpectrum {
  Eigen::VectorXd lambda;  // ascending
  Eigen::MatrixXd modes;   // columns: mu-orthonormal eigenvectors
  int dropped = 0;

  double kernel(int a, int b, double t) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
      acc += std::exp(-t * lambda[i]) * modes(a, i) * modes(b, i);
    return std::max(acc, 0.0);
  }

  /// Density kernel matrix k(x, y, t) = sum_i e^{-t lambda_i} w_i(x) w_i(y).
  Eigen::MatrixXd heat(double t) const {
    Eigen::VectorXd decay = (-t * lambda.array()).exp().matrix();
    Eigen::MatrixXd K = modes * decay.asDiagonal() * modes.transpose();
    return K.cwiseMax(0.0);
  }
};

inline double gershgorin_lower(const Eigen::SparseMatrix<double>& L, const Eigen::VectorXd& mu) {
  Eigen::SparseMatrix<double, Eigen::RowMajor> R = L;
  double lower = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < R.outerSize(); ++i) {
    double diag = 0.0, off = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(R, i); it; ++it) {
      if (it.col() == i)
        diag += it.value();
      else
        off += std::abs(it.value());
    }
    lower = std::min(lower, (diag - off) / mu[i]);
  }
  return lower;
}

inline SymmetricSpectrum symmetric_spectrum(const Eigen::SparseMatrix<double>& L,
                                            const Eigen::VectorXd& mu) {
  const Eigen::Index n = L.rows();
  const double s = 1.0 - std::min(0.0, gershgorin_lower(L, mu));
  Eigen::MatrixXd A = Eigen::MatrixXd(L);
  A = 0.5 * (A + A.transpose());
  A.diagonal() += s * mu;
  Eigen::LLT<Eigen::MatrixXd> chol(A);
  if (chol.info() != Eigen::Success) throw NumericalError("symmetric_spectrum: Cholesky failed");
  Eigen::MatrixXd C = chol.matrixL().solve(Eigen::MatrixXd(mu.cwiseSqrt().asDiagonal()));
  Eigen::MatrixXd Bm = C * C.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Bm);
  if (eig.info() != Eigen::Success) throw NumericalError("symmetric_spectrum: eigensolver failed");
  const Eigen::VectorXd& nu = eig.eigenvalues();  // ascending, so lambda descending
  const double floor = std::max(1.0, nu.maxCoeff()) * double(n) * 64.0 *
                       std::numeric_limits<double>::epsilon();
  Eigen::MatrixXd W = chol.matrixU().solve(eig.eigenvectors());
  SymmetricSpectrum out;
  int keep = 0;
  for (Eigen::Index i = 0; i < n; ++i) keep += nu[i] > floor ? 1 : 0;
  out.lambda.resize(keep);
  out.modes.resize(n, keep);
  out.dropped = static_cast<int>(n) - keep;
  int k = 0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (!(nu[i] > floor)) continue;
    out.lambda[k] = 1.0 / nu[i] - s;
    out.modes.col(k) = W.col(i) / std::sqrt(nu[i]);
    ++k;
  }
  return out;
}

struct PrincipalPair {
  double lambda = 0.0;
  double lower = 0.0;  // Collatz-Wielandt bracket
  double upper = 0.0;
  Eigen::VectorXd vector;  // positive, max-normalized
  int iterations = 0;
};

/// Principal (Perron) eigenpair of K = diag(mu)^-1 L for an irreducible
/// Z-matrix L, symmetric or not.
///
/// Noda-type iteration: with sigma below lambda0, (K - sigma)^-1 is entrywise
/// positive and the Collatz-Wielandt ratios of one application bracket
/// 1/(lambda0 - sigma). The shift follows the certified lower bound, so
/// convergence is superlinear and the iterate stays positive.
inline PrincipalPair principal_pair(const Eigen::SparseMatrix<double>& L, const Eigen::VectorXd& mu,
                                    double rel_tol = 1e-14, int max_iter = 300) {
  const Eigen::Index n = L.rows();
  PrincipalPair out;
  if (n == 1) {
    out.lambda = out.lower = out.upper = L.coeff(0, 0) / mu[0];
    out.vector = Eigen::VectorXd::Ones(1);
    return out;
  }
  const double g = gershgorin_lower(L, mu);
  double sigma = g - std::max(1.0, std::abs(g));
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  Eigen::SparseMatrix<double> M(n, n);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index i = 0; i < n; ++i) trip.emplace_back(i, i, mu[i]);
    M.setFromTriplets(trip.begin(), trip.end());
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  int polish = 0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::SparseMatrix<double> A = L - sigma * M;
    A.makeCompressed();
    lu.compute(A);
    if (lu.info() != Eigen::Success) {
      if (it == 0) throw NumericalError("principal_pair: factorization failed");
      break;
    }
    Eigen::VectorXd u = lu.solve(mu.cwiseProduct(v));
    if (!u.allFinite() || u.minCoeff() <= 0.0) {
      if (it == 0) throw NumericalError("principal_pair: shifted inverse is not positive");
      break;  // shift has reached rounding level; keep the last positive iterate
    }
    Eigen::ArrayXd ratio = u.array() / v.array();
    const double new_lo = std::max(lo, sigma + 1.0 / ratio.maxCoeff());
    const double new_hi = std::min(hi, sigma + 1.0 / ratio.minCoeff());
    // Brackets from different iterates crossing means the solves have hit
    // rounding level: converged if the overlap is a few ulps, otherwise the
    // previous bracket is the last trustworthy one.
    if (new_hi < new_lo) {
      if (new_lo - new_hi <= 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(new_lo))) {
        lo = hi = 0.5 * (new_lo + new_hi);
        v = u / u.maxCoeff();
        out.iterations = it + 1;
      }
      break;
    }
    lo = new_lo;
    hi = new_hi;
    v = u / u.maxCoeff();
    out.iterations = it + 1;
    if (hi - lo <= rel_tol * std::max(1.0, std::abs(lo))) {
      // A couple of inverse iterations at the converged shift polish the vector.
      if (++polish > 2) break;
      continue;
    }
    // lo is a lower bound, so a shift just below it stays below lambda0. The
    // gap cap matters when hi lags: the iterate's tails then shrink by
    // (lambda0 - sigma) / (lambda1 - sigma) per step.
    sigma = lo - std::min(0.01 * (hi - lo), 1e-6 * std::max(1.0, std::abs(lo)));
  }
  if (!(hi >= lo)) throw NumericalError("principal_pair: no valid bracket");
  out.lower = lo;
  out.upper = hi;
  out.lambda = 0.5 * (lo + hi);
  out.vector = v;
  return out;
}

/// Spectral radius (largest |eigenvalue|) of a small dense matrix.
inline double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.rows() == 1) return std::abs(A(0, 0));
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Ordinary least squares; returns coefficients and residual sum of squares.
struct LeastSquares {
  Eigen::VectorXd coef;
  double rss = 0.0;
  Eigen::VectorXd stderr_;  // standard errors of the coefficients (NaN if dof <= 0)
};

inline LeastSquares least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  LeastSquares out;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  out.coef = qr.solve(y);
  Eigen::VectorXd r = y - X * out.coef;
  out.rss = r.squaredNorm();
  const Eigen::Index dof = X.rows() - X.cols();
  out.stderr_ = Eigen::VectorXd::Constant(X.cols(), std::numeric_limits<double>::quiet_NaN());
  if (dof > 0) {
    Eigen::MatrixXd XtX = X.transpose() * X;
    Eigen::MatrixXd cov = XtX.completeOrthogonalDecomposition().pseudoInverse() * (out.rss / dof);
    out.stderr_ = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  return out;
}

}  // namespace critlab::linalg
