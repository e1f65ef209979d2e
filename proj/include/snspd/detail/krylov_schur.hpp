#pragma once

// Krylov-Schur iteration for the dominant eigenpairs of a linear operator.
// Used on the shift-inverted Helmholtz operator, where "dominant" means the
// eigenvalues closest to the shift.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

namespace snspd::detail {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

struct KrylovOptions {
  int nev = 1;
  int ncv = 0;  // 0 picks max(2 nev + 10, 24)
  int max_restarts = 300;
  double tol = 1e-12;  // Ritz estimate relative to |theta|
};

struct KrylovResult {
  std::vector<cplx> theta;  // operator eigenvalues, |theta| descending
  CMatrix vectors;          // unit-norm eigenvectors, one per column
  std::vector<double> estimates;
  int restarts = 0;
  int applications = 0;
  bool converged = false;
};

/// Swaps adjacent diagonal entries k, k+1 of the upper-triangular T,
/// accumulating the unitary rotation into U.
inline void swap_schur_pair(CMatrix& T, CMatrix& U, Eigen::Index k) {
  const cplx a = T(k, k);
  const cplx c = T(k + 1, k + 1);
  const cplx x = T(k, k + 1);
  const cplx y = c - a;
  const double r = std::hypot(std::abs(x), std::abs(y));
  if (r == 0.0) return;
  const cplx cs = x / r;
  const cplx sn = y / r;
  const Eigen::Index n = T.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const cplx t0 = T(i, k);
    const cplx t1 = T(i, k + 1);
    T(i, k) = t0 * cs + t1 * sn;
    T(i, k + 1) = -t0 * std::conj(sn) + t1 * std::conj(cs);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const cplx t0 = T(k, j);
    const cplx t1 = T(k + 1, j);
    T(k, j) = std::conj(cs) * t0 + std::conj(sn) * t1;
    T(k + 1, j) = -sn * t0 + cs * t1;
  }
  T(k + 1, k) = 0.0;
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    const cplx u0 = U(i, k);
    const cplx u1 = U(i, k + 1);
    U(i, k) = u0 * cs + u1 * sn;
    U(i, k + 1) = -u0 * std::conj(sn) + u1 * std::conj(cs);
  }
}

/// Reorders the Schur form so the `keep` largest-magnitude eigenvalues lead,
/// in descending magnitude.
inline void sort_schur(CMatrix& T, CMatrix& U, Eigen::Index keep) {
  const Eigen::Index n = T.rows();
  for (Eigen::Index p = 0; p < std::min(keep, n); ++p) {
    Eigen::Index best = p;
    for (Eigen::Index q = p + 1; q < n; ++q) {
      if (std::abs(T(q, q)) > std::abs(T(best, best))) best = q;
    }
    for (Eigen::Index q = best; q > p; --q) swap_schur_pair(T, U, q - 1);
  }
}

/// Ritz estimates of the `nev` largest eigenvalues of the j x j Hessenberg block.
inline bool leading_converged(const CMatrix& H, Eigen::Index j, int nev, double tol) {
  Eigen::ComplexEigenSolver<CMatrix> es(H.topLeftCorner(j, j));
  if (es.info() != Eigen::Success) return false;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(j));
  for (Eigen::Index i = 0; i < j; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
  });
  const double beta = std::abs(H(j, j - 1));
  for (int c = 0; c < nev && c < j; ++c) {
    const Eigen::Index idx = order[static_cast<std::size_t>(c)];
    const CVector s = es.eigenvectors().col(idx);
    if (beta * std::abs(s(j - 1)) / s.norm() > tol * std::abs(es.eigenvalues()(idx))) return false;
  }
  return true;
}

/// Orthogonalizes w against V[:, 0..j] (two classical Gram-Schmidt passes).
inline CVector orthogonalize(const CMatrix& V, Eigen::Index j, CVector& w) {
  const auto basis = V.leftCols(j + 1);
  CVector h = basis.adjoint() * w;
  w.noalias() -= basis * h;
  CVector h2 = basis.adjoint() * w;
  w.noalias() -= basis * h2;
  return h + h2;
}

template <class Apply>
KrylovResult krylov_schur(Eigen::Index n, const CVector& start, Apply&& apply,
                          const KrylovOptions& opts) {
  const int nev = std::max(1, opts.nev);
  Eigen::Index m = opts.ncv > 0 ? opts.ncv : std::max(2 * nev + 10, 24);
  m = std::min<Eigen::Index>(m, n);
  const Eigen::Index keep_base = std::min<Eigen::Index>(std::max<Eigen::Index>(nev, m / 2), m - 1);

  CMatrix V = CMatrix::Zero(n, m + 1);
  CMatrix H = CMatrix::Zero(m + 1, m);
  V.col(0) = start / start.norm();

  KrylovResult result;
  Eigen::Index k = 0;  // columns of the current Krylov-Schur decomposition

  for (int restart = 0; restart <= opts.max_restarts; ++restart) {
    Eigen::Index filled = m;
    bool early = false;
    for (Eigen::Index j = k; j < m; ++j) {
      CVector w = apply(V.col(j));
      ++result.applications;
      const CVector h = orthogonalize(V, j, w);
      H.col(j).head(j + 1) = h;
      const double beta = w.norm();
      H(j + 1, j) = beta;
      if (beta <= 1e-14 * h.norm()) {
        // Invariant subspace: the projected matrix is exact.
        filled = j + 1;
        break;
      }
      V.col(j + 1) = w / beta;
      if (j + 1 >= std::max<Eigen::Index>(2 * nev, 6) && (j + 1) % 4 == 0 && j + 1 < m &&
          leading_converged(H, j + 1, nev, opts.tol)) {
        filled = j + 1;
        early = true;
        break;
      }
    }

    const CMatrix Hm = H.topLeftCorner(filled, filled);
    Eigen::ComplexSchur<CMatrix> schur(Hm);
    CMatrix T = schur.matrixT();
    CMatrix U = schur.matrixU();
    const Eigen::Index want = std::min<Eigen::Index>(nev, filled);
    sort_schur(T, U, std::max(want, std::min(keep_base, filled)));

    // Ritz pairs of the leading block.
    Eigen::ComplexEigenSolver<CMatrix> small(T.topLeftCorner(want, want));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(want));
    for (Eigen::Index i = 0; i < want; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return std::abs(small.eigenvalues()(a)) > std::abs(small.eigenvalues()(b));
    });

    const double residual_norm =
        early ? std::abs(H(filled, filled - 1)) : (filled < m ? 0.0 : std::abs(H(m, m - 1)));
    result.theta.clear();
    result.estimates.clear();
    bool all_converged = true;
    CMatrix coords(filled, want);
    for (Eigen::Index c = 0; c < want; ++c) {
      const Eigen::Index idx = order[static_cast<std::size_t>(c)];
      CVector s = CVector::Zero(filled);
      s.head(want) = small.eigenvectors().col(idx);
      CVector y = U * s;
      y /= y.norm();
      coords.col(c) = y;
      const cplx theta = small.eigenvalues()(idx);
      const double est = residual_norm * std::abs(y(filled - 1));
      result.theta.push_back(theta);
      result.estimates.push_back(est);
      if (est > opts.tol * std::abs(theta)) all_converged = false;
    }

    result.restarts = restart;
    if (all_converged || filled < m || restart == opts.max_restarts) {
      result.vectors = V.leftCols(filled) * coords;
      for (Eigen::Index c = 0; c < result.vectors.cols(); ++c) {
        result.vectors.col(c).normalize();
      }
      result.converged = all_converged || (filled < m && !early);
      return result;
    }

    // Thick restart on the leading Schur vectors.
    k = std::min(keep_base, filled - 1);
    const CMatrix Vk = V.leftCols(m) * U.leftCols(k);
    const CVector tail = V.col(m);
    CMatrix Hn = CMatrix::Zero(m + 1, m);
    Hn.topLeftCorner(k, k) = T.topLeftCorner(k, k);
    Hn.row(k).head(k) = H(m, m - 1) * U.row(m - 1).head(k);
    V.leftCols(k) = Vk;
    V.col(k) = tail;
    H = Hn;
  }
  return result;
}

/// Deterministic start vector: a positive weight with small pseudo-random ripple
/// so no symmetry class is missing.
inline CVector seeded_start(const std::vector<double>& weight, std::uint64_t seed = 0x5eedULL) {
  std::mt19937_64 gen(seed);
  CVector v(static_cast<Eigen::Index>(weight.size()));
  for (std::size_t i = 0; i < weight.size(); ++i) {
    const double r = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    v(static_cast<Eigen::Index>(i)) = cplx(weight[i] * (1.0 + 0.05 * (r - 0.5)), 0.0);
  }
  return v;
}

}  // namespace snspd::detail
