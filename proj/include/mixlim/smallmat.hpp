#pragma once

// Dense helpers for small species-sized matrices (N is typically 2..6).
// Row-major storage in std::vector<double>.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mixlim {

using Vec = std::vector<double>;
using Mat = std::vector<double>;  // row-major n x n unless stated otherwise

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec matvec(const Mat& A, const Vec& x) {
  const std::size_t n = x.size();
  Vec y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i] += A[i * n + j] * x[j];
  return y;
}

// Solves A x = b by Gaussian elimination with partial pivoting. A is copied.
inline Vec solve_dense(Mat A, Vec b) {
  const std::size_t n = b.size();
  if (A.size() != n * n) throw std::invalid_argument("solve_dense: size mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::fabs(A[k * n + k]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::fabs(A[i * n + k]);
      if (v > best) { best = v; piv = i; }
    }
    if (best == 0.0) throw std::runtime_error("solve_dense: singular matrix");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A[k * n + j], A[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = A[i * n + k] / A[k * n + k];
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) A[i * n + j] -= f * A[k * n + j];
      b[i] -= f * b[k];
    }
  }
  Vec x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= A[i * n + j] * x[j];
    x[i] = s / A[i * n + i];
  }
  return x;
}

inline Mat invert_dense(const Mat& A, std::size_t n) {
  Mat inv(n * n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    Vec e(n, 0.0);
    e[c] = 1.0;
    const Vec col = solve_dense(A, e);
    for (std::size_t r = 0; r < n; ++r) inv[r * n + c] = col[r];
  }
  return inv;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
// Good enough for the small Onsager/Hessian matrices used here.
inline Vec sym_eigenvalues(Mat A, std::size_t n) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += A[p * n + q] * A[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = A[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (A[q * n + q] - A[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A[k * n + p], akq = A[k * n + q];
          A[k * n + p] = c * akp - s * akq;
          A[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A[p * n + k], aqk = A[q * n + k];
          A[p * n + k] = c * apk - s * aqk;
          A[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  Vec ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = A[i * n + i];
  return ev;
}

inline double min_eigenvalue_sym(const Mat& A, std::size_t n) {
  const Vec ev = sym_eigenvalues(A, n);
  double mn = ev[0];
  for (double v : ev) mn = std::min(mn, v);
  return mn;
}

inline double max_eigenvalue_sym(const Mat& A, std::size_t n) {
  const Vec ev = sym_eigenvalues(A, n);
  double mx = ev[0];
  for (double v : ev) mx = std::max(mx, v);
  return mx;
}

}  // namespace mixlim
