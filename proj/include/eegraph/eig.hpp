#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "eegraph/rng.hpp"

namespace eegraph {

struct EigenPair {
  double value = 0.0;
  std::vector<double> vector;
};

namespace detail {

// Number of eigenvalues of the symmetric tridiagonal (diag, offdiag) that are
// strictly less than x, via the Sturm sequence of leading principal minors.
inline size_t sturm_count(std::span<const double> d, std::span<const double> e, double x) {
  size_t count = 0;
  double q = 1.0;
  const size_t n = d.size();
  for (size_t i = 0; i < n; ++i) {
    const double off = (i == 0) ? 0.0 : e[i - 1];
    double denom = q;
    if (std::abs(denom) < 1e-300) denom = (denom < 0.0) ? -1e-300 : 1e-300;
    q = d[i] - x - off * off / denom;
    if (q < 0.0) ++count;
  }
  return count;
}

// Solve (T - lambda I) x = b in place by tridiagonal Gaussian elimination with
// partial pivoting (the matrix is near-singular by construction).
inline void shifted_tridiag_solve(std::span<const double> d, std::span<const double> e,
                                  double lambda, std::vector<double>& x) {
  const size_t n = d.size();
  std::vector<double> a(n), b(n, 0.0), c(n, 0.0);  // main, super, super-super
  std::vector<double> sub(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    a[i] = d[i] - lambda;
    if (i + 1 < n) {
      b[i] = e[i];
      sub[i] = e[i];
    }
  }
  // Forward elimination with row swaps; fill-in reaches two above the diagonal.
  for (size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(sub[i]) > std::abs(a[i])) {
      std::swap(a[i], sub[i]);
      std::swap(b[i], a[i + 1]);
      if (i + 2 < n) std::swap(c[i], b[i + 1]);
      std::swap(x[i], x[i + 1]);
    }
    double piv = a[i];
    if (std::abs(piv) < 1e-300) piv = (piv < 0.0) ? -1e-300 : 1e-300;
    const double f = sub[i] / piv;
    a[i + 1] -= f * b[i];
    if (i + 2 < n) b[i + 1] -= f * c[i];
    x[i + 1] -= f * x[i];
    sub[i] = 0.0;
  }
  // Back substitution.
  for (size_t ip = n; ip-- > 0;) {
    double s = x[ip];
    if (ip + 1 < n) s -= b[ip] * x[ip + 1];
    if (ip + 2 < n) s -= c[ip] * x[ip + 2];
    double piv = a[ip];
    if (std::abs(piv) < 1e-300) piv = (piv < 0.0) ? -1e-300 : 1e-300;
    x[ip] = s / piv;
  }
}

inline double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace detail

// k largest eigenvalues (descending) and eigenvectors of the symmetric
// tridiagonal matrix with main diagonal `diag` and first off-diagonal
// `offdiag`. Eigenvalues come from bisection on Sturm counts; eigenvectors
// from inverse iteration with reorthogonalization, which keeps clustered
// pairs (the DPSS case) orthonormal.
inline std::vector<EigenPair> sym_tridiag_eig(std::span<const double> diag,
                                              std::span<const double> offdiag, size_t k_largest) {
  const size_t n = diag.size();
  if (n == 0) throw std::invalid_argument("sym_tridiag_eig: empty matrix");
  if (offdiag.size() + 1 != n)
    throw std::invalid_argument("sym_tridiag_eig: offdiag must have n-1 entries");
  if (k_largest == 0 || k_largest > n)
    throw std::invalid_argument("sym_tridiag_eig: k out of range");

  // Gershgorin bounds.
  double lo = diag[0], hi = diag[0];
  for (size_t i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::abs(offdiag[i - 1]) : 0.0) +
                     (i + 1 < n ? std::abs(offdiag[i]) : 0.0);
    lo = std::min(lo, diag[i] - r);
    hi = std::max(hi, diag[i] + r);
  }
  const double scale = std::max(std::abs(lo), std::abs(hi)) + 1e-300;

  std::vector<EigenPair> out;
  out.reserve(k_largest);
  Rng rng(0x5eedULL);  // fixed start vectors keep results deterministic

  for (size_t j = 0; j < k_largest; ++j) {
    // Eigenvalue with ascending index n-1-j: bisect for the point where the
    // count of eigenvalues below x crosses n-j.
    const size_t target = n - j;  // want count(< x) >= target for x above it
    double a = lo, b = hi + scale * 1e-12;
    for (int it = 0; it < 200 && (b - a) > 1e-15 * scale; ++it) {
      const double mid = 0.5 * (a + b);
      if (detail::sturm_count(diag, offdiag, mid) >= target)
        b = mid;
      else
        a = mid;
    }
    const double lambda = 0.5 * (a + b);

    // Inverse iteration from a random vector, reorthogonalized against the
    // eigenvectors already found.
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform() - 0.5;
    double residual = 1e30;
    std::vector<double> best = x;
    for (int it = 0; it < 8; ++it) {
      const double shift = lambda + scale * 1e-14;  // nudge off exact singularity
      detail::shifted_tridiag_solve(diag, offdiag, shift, x);
      for (const auto& prev : out) {
        double dot = 0.0;
        for (size_t i = 0; i < n; ++i) dot += x[i] * prev.vector[i];
        for (size_t i = 0; i < n; ++i) x[i] -= dot * prev.vector[i];
      }
      const double nrm = detail::norm2(x);
      if (nrm < 1e-280) {  // start vector was (numerically) in the wrong subspace
        for (auto& v : x) v = rng.uniform() - 0.5;
        continue;
      }
      for (auto& v : x) v /= nrm;
      // Residual ||T x - lambda x||.
      double res = 0.0;
      for (size_t i = 0; i < n; ++i) {
        double tx = diag[i] * x[i];
        if (i > 0) tx += offdiag[i - 1] * x[i - 1];
        if (i + 1 < n) tx += offdiag[i] * x[i + 1];
        const double r = tx - lambda * x[i];
        res += r * r;
      }
      res = std::sqrt(res);
      if (res < residual) {
        residual = res;
        best = x;
      }
      if (res <= 1e-10 * scale) break;
    }
    if (residual > 1e-8 * scale)
      throw std::runtime_error("sym_tridiag_eig: inverse iteration failed to converge");
    out.push_back(EigenPair{lambda, std::move(best)});
  }
  return out;
}

}  // namespace eegraph
