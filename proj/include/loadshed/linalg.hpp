#pragma once

// Small dense-vector helpers and a power-iteration spectral norm. Everything
// here works on std::vector<double> / std::span so the solver carries no
// linear-algebra dependency.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "loadshed/error.hpp"

namespace loadshed {

using Vector = std::vector<double>;

inline void require_size(std::span<const double> v, std::size_t n, const char* what) {
  if (v.size() != n) throw DimensionError(what, n, v.size());
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s = std::max(s, std::abs(x));
  return s;
}

inline double sum(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x;
  return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Row-major dense matrix; only used where a closed-form or test needs one.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct PowerIterationOptions {
  double tol = 1e-10;
  std::size_t max_iters = 10000;
};

struct EigenEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  Vector vector;  // unit-norm eigenvector estimate, reusable as a warm start
};

namespace detail {

// Fixed-seed start vector. mt19937_64 output is specified by the standard, so
// the sequence (and every trace built on it) is reproducible across platforms.
inline Vector deterministic_start(std::size_t dim, std::uint64_t seed = 0x5eedULL) {
  std::mt19937_64 gen(seed);
  Vector x(dim);
  for (auto& xi : x) xi = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
  return x;
}

// Cyclic Jacobi eigensolver for a small symmetric matrix. Returns the
// eigenvalues; column j of `vecs` is the eigenvector of value j.
inline Vector symmetric_eigen(DenseMatrix a, DenseMatrix& vecs) {
  const std::size_t p = a.rows;
  vecs = DenseMatrix(p, p);
  for (std::size_t i = 0; i < p; ++i) vecs(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, total = 0.0;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) (i == j ? total : off) += a(i, j) * a(i, j);
    if (off <= 1e-30 * (total + off)) break;
    for (std::size_t i = 0; i + 1 < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j) {
        if (a(i, j) == 0.0) continue;
        const double tau = (a(j, j) - a(i, i)) / (2.0 * a(i, j));
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
        for (std::size_t k = 0; k < p; ++k) {
          const double aki = a(k, i), akj = a(k, j);
          a(k, i) = c * aki - s * akj;
          a(k, j) = s * aki + c * akj;
        }
        for (std::size_t k = 0; k < p; ++k) {
          const double aik = a(i, k), ajk = a(j, k);
          a(i, k) = c * aik - s * ajk;
          a(j, k) = s * aik + c * ajk;
        }
        for (std::size_t k = 0; k < p; ++k) {
          const double vki = vecs(k, i), vkj = vecs(k, j);
          vecs(k, i) = c * vki - s * vkj;
          vecs(k, j) = s * vki + c * vkj;
        }
      }
  }
  Vector vals(p);
  for (std::size_t i = 0; i < p; ++i) vals[i] = a(i, i);
  return vals;
}

// Modified Gram-Schmidt on the block; a column that collapses is replaced by
// a fresh deterministic vector and orthogonalized again.
inline void orthonormalize(std::vector<Vector>& block) {
  for (std::size_t j = 0; j < block.size(); ++j) {
    for (int attempt = 0; attempt < 4; ++attempt) {
      const double before = norm2(block[j]);
      for (std::size_t i = 0; i < j; ++i) {
        const double proj = dot(block[i], block[j]);
        for (std::size_t k = 0; k < block[j].size(); ++k) block[j][k] -= proj * block[i][k];
      }
      const double after = norm2(block[j]);
      if (after > 1e-8 * before && after > 0.0) {
        for (auto& x : block[j]) x /= after;
        break;
      }
      block[j] = deterministic_start(block[j].size(), 0x5eedULL + 7919 * (j + 1) + attempt);
    }
  }
}

}  // namespace detail

// Largest eigenvalue of a symmetric positive semidefinite operator, given as
// apply(x, y) computing y = G x. Block power iteration (up to 4 vectors) with
// Rayleigh-Ritz extraction, so nearly equal leading eigenvalues do not stall
// it. Stops once the leading Ritz pair has ||G x - lambda x|| <= tol * lambda.
// `start` seeds the first block vector (warm start).
template <class ApplyGram>
EigenEstimate largest_eigenvalue(std::size_t dim, ApplyGram&& apply,
                                 const PowerIterationOptions& opts = {},
                                 std::span<const double> start = {}) {
  EigenEstimate est;
  if (dim == 0) {
    est.converged = true;
    return est;
  }
  const std::size_t p = std::min<std::size_t>(4, dim);
  std::vector<Vector> x(p), y(p, Vector(dim));
  for (std::size_t j = 0; j < p; ++j) x[j] = detail::deterministic_start(dim, 0x5eedULL + 7919 * j);
  if (start.size() == dim && norm2(start) > 0.0) x[0].assign(start.begin(), start.end());
  detail::orthonormalize(x);

  DenseMatrix h(p, p), s;
  Vector ritz(dim), gritz(dim);
  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    for (std::size_t j = 0; j < p; ++j) apply(std::span<const double>(x[j]), std::span<double>(y[j]));
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i; j < p; ++j) h(i, j) = h(j, i) = 0.5 * (dot(x[i], y[j]) + dot(x[j], y[i]));
    const Vector vals = detail::symmetric_eigen(h, s);
    const std::size_t top = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
    const double lambda = vals[top];
    std::fill(ritz.begin(), ritz.end(), 0.0);
    std::fill(gritz.begin(), gritz.end(), 0.0);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k < dim; ++k) {
        ritz[k] += s(j, top) * x[j][k];
        gritz[k] += s(j, top) * y[j][k];
      }
    double res2 = 0.0;
    for (std::size_t k = 0; k < dim; ++k) res2 += (gritz[k] - lambda * ritz[k]) * (gritz[k] - lambda * ritz[k]);
    est.iterations = it;
    est.value = std::max(lambda, 0.0);
    est.vector = ritz;
    if (!(lambda > 0.0)) {
      // G vanishes on the block; for a PSD operator spanning a generic start
      // this means G = 0 on everything reachable.
      double gy = 0.0;
      for (const auto& v : y) gy += dot(v, v);
      if (gy == 0.0) {
        est.value = 0.0;
        est.converged = true;
        return est;
      }
    } else if (std::sqrt(res2) <= opts.tol * lambda) {
      est.converged = true;
      return est;
    }
    // Next block: G X rotated onto the Ritz basis, leading vector first.
    std::vector<Vector> next(p, Vector(dim, 0.0));
    std::vector<std::size_t> order(p);
    for (std::size_t j = 0; j < p; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
    for (std::size_t c = 0; c < p; ++c)
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = 0; k < dim; ++k) next[c][k] += s(j, order[c]) * y[j][k];
    x = std::move(next);
    detail::orthonormalize(x);
  }
  return est;
}

// Spectral norm of a dense matrix. Exact for 1x1 and 2x2, power iteration on
// the smaller Gram matrix otherwise. Throws ConvergenceError on iteration cap.
inline double spectral_norm(const DenseMatrix& a, const PowerIterationOptions& opts = {}) {
  if (a.rows == 0 || a.cols == 0) return 0.0;
  if (a.rows == 1 && a.cols == 1) return std::abs(a(0, 0));
  if (a.rows == 2 && a.cols == 2) {
    const double fro2 = a(0, 0) * a(0, 0) + a(0, 1) * a(0, 1) + a(1, 0) * a(1, 0) + a(1, 1) * a(1, 1);
    const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    const double disc = std::sqrt(std::max(0.0, fro2 * fro2 - 4.0 * det * det));
    return std::sqrt(0.5 * (fro2 + disc));
  }
  const bool use_rows = a.rows <= a.cols;  // iterate on A A' (rows x rows) or A'A
  const std::size_t dim = use_rows ? a.rows : a.cols;
  Vector tmp(use_rows ? a.cols : a.rows);
  auto apply = [&](std::span<const double> x, std::span<double> y) {
    std::fill(tmp.begin(), tmp.end(), 0.0);
    std::fill(y.begin(), y.end(), 0.0);
    if (use_rows) {
      for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) tmp[j] += a(i, j) * x[i];
      for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) y[i] += a(i, j) * tmp[j];
    } else {
      for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) tmp[i] += a(i, j) * x[j];
      for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) y[j] += a(i, j) * tmp[i];
    }
  };
  const auto est = largest_eigenvalue(dim, apply, opts);
  if (!est.converged) throw ConvergenceError("spectral_norm: power iteration did not converge", est.iterations);
  return std::sqrt(std::max(0.0, est.value));
}

}  // namespace loadshed
