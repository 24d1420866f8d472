#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "stf/dense.hpp"
#include "stf/errors.hpp"
#include "stf/rng.hpp"

namespace stf::linalg {

// In-place Cholesky factorization of a symmetric positive definite matrix.
// Returns the lower factor packed into a copy of `a`.
inline DenseArray cholesky(const DenseArray& a) {
  const long n = a.dim(0);
  if (a.ndim() != 2 || a.dim(1) != n) throw DimensionError("cholesky: square matrix required");
  DenseArray l = a;
  for (long j = 0; j < n; ++j) {
    double d = l(j, j);
    for (long p = 0; p < j; ++p) d -= l(j, p) * l(j, p);
    if (d <= 0.0) throw NumericError("cholesky: matrix not positive definite");
    const double dj = std::sqrt(d);
    l(j, j) = dj;
    for (long i = j + 1; i < n; ++i) {
      double s = l(i, j);
      for (long p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
      l(i, j) = s / dj;
    }
    for (long i = 0; i < j; ++i) l(i, j) = 0.0;
  }
  return l;
}

// Solves L L^T x = b for one right-hand side held in `x` (overwritten).
inline void cholesky_solve_inplace(const DenseArray& l, double* x, long n) {
  for (long i = 0; i < n; ++i) {
    double s = x[i];
    for (long p = 0; p < i; ++p) s -= l(i, p) * x[p];
    x[i] = s / l(i, i);
  }
  for (long i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (long p = i + 1; p < n; ++p) s -= l(p, i) * x[p];
    x[i] = s / l(i, i);
  }
}

// Solves A X = B column-wise through a precomputed Cholesky factor.
inline DenseArray cholesky_solve(const DenseArray& l, const DenseArray& b) {
  const long n = l.dim(0);
  const long d = b.dim(1);
  DenseArray x = b;
  std::vector<double> col(static_cast<std::size_t>(n));
  for (long j = 0; j < d; ++j) {
    for (long i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = x(i, j);
    cholesky_solve_inplace(l, col.data(), n);
    for (long i = 0; i < n; ++i) x(i, j) = col[static_cast<std::size_t>(i)];
  }
  return x;
}

struct CgResult {
  bool converged = false;
  long iterations = 0;
  double residual = 0.0;
};

// Conjugate gradient for SPD operators; solves op(x) = b.
inline CgResult conjugate_gradient(
    const std::function<void(const double*, double*)>& op, const double* b,
    double* x, long n, double tol, long max_iter) {
  std::vector<double> r(static_cast<std::size_t>(n));
  std::vector<double> p(static_cast<std::size_t>(n));
  std::vector<double> ap(static_cast<std::size_t>(n));
  std::fill(x, x + n, 0.0);
  double bnorm = 0.0;
  for (long i = 0; i < n; ++i) {
    r[static_cast<std::size_t>(i)] = b[i];
    p[static_cast<std::size_t>(i)] = b[i];
    bnorm += b[i] * b[i];
  }
  bnorm = std::sqrt(bnorm);
  if (bnorm == 0.0) return {true, 0, 0.0};
  double rs = 0.0;
  for (double v : r) rs += v * v;
  CgResult res;
  for (long it = 0; it < max_iter; ++it) {
    op(p.data(), ap.data());
    double pap = 0.0;
    for (long i = 0; i < n; ++i) pap += p[static_cast<std::size_t>(i)] * ap[static_cast<std::size_t>(i)];
    const double alpha = rs / pap;
    for (long i = 0; i < n; ++i) {
      x[i] += alpha * p[static_cast<std::size_t>(i)];
      r[static_cast<std::size_t>(i)] -= alpha * ap[static_cast<std::size_t>(i)];
    }
    double rs_new = 0.0;
    for (double v : r) rs_new += v * v;
    res.iterations = it + 1;
    res.residual = std::sqrt(rs_new) / bnorm;
    if (res.residual < tol) {
      res.converged = true;
      return res;
    }
    const double beta = rs_new / rs;
    rs = rs_new;
    for (long i = 0; i < n; ++i)
      p[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)] + beta * p[static_cast<std::size_t>(i)];
  }
  return res;
}

// Largest eigenvalue estimate of a symmetric PSD operator by power iteration.
inline double power_iteration(const std::function<void(const double*, double*)>& op,
                              long n, long iters, std::uint64_t seed) {
  Rng rng(seed, 17);
  std::vector<double> v(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.normal();
  double lambda = 0.0;
  for (long it = 0; it < iters; ++it) {
    op(v.data(), w.data());
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = 0.0;
    for (long i = 0; i < n; ++i) lambda += v[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
    for (long i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] / norm;
  }
  return lambda;
}

// Modified Gram-Schmidt on the columns of `q` (n x r), in place.
inline void orthonormalize_columns(DenseArray& q) {
  const long n = q.dim(0);
  const long r = q.dim(1);
  for (long j = 0; j < r; ++j) {
    for (long p = 0; p < j; ++p) {
      double dot = 0.0;
      for (long i = 0; i < n; ++i) dot += q(i, p) * q(i, j);
      for (long i = 0; i < n; ++i) q(i, j) -= dot * q(i, p);
    }
    double norm = 0.0;
    for (long i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-300) {
      // Degenerate column; replace with a deterministic unit vector.
      for (long i = 0; i < n; ++i) q(i, j) = (i == j % n) ? 1.0 : 0.0;
      for (long p = 0; p < j; ++p) {
        double dot = 0.0;
        for (long i = 0; i < n; ++i) dot += q(i, p) * q(i, j);
        for (long i = 0; i < n; ++i) q(i, j) -= dot * q(i, p);
      }
      norm = 0.0;
      for (long i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
      norm = std::sqrt(norm);
    }
    for (long i = 0; i < n; ++i) q(i, j) /= norm;
  }
}

struct SubspaceResult {
  DenseArray vectors;                  // n x r, orthonormal columns
  std::vector<double> eigenvalues;     // nonincreasing
};

// Top-r eigenpairs of a symmetric PSD operator via block power iteration
// with a small Rayleigh-Ritz step at the end.
inline SubspaceResult subspace_iteration(
    const std::function<void(const DenseArray&, DenseArray&)>& op, long n, long r,
    long max_iters, double tol, std::uint64_t seed) {
  Rng rng(seed, 23);
  DenseArray q = DenseArray::randn({n, r}, rng);
  orthonormalize_columns(q);
  DenseArray aq({n, r});
  std::vector<double> prev(static_cast<std::size_t>(r), 0.0);
  for (long it = 0; it < max_iters; ++it) {
    op(q, aq);
    q = aq;
    orthonormalize_columns(q);
    // Ritz values on the diagonal of Q^T A Q.
    op(q, aq);
    std::vector<double> ritz(static_cast<std::size_t>(r), 0.0);
    for (long j = 0; j < r; ++j) {
      double s = 0.0;
      for (long i = 0; i < n; ++i) s += q(i, j) * aq(i, j);
      ritz[static_cast<std::size_t>(j)] = s;
    }
    double delta = 0.0, scale = 1e-300;
    for (long j = 0; j < r; ++j) {
      delta = std::max(delta, std::fabs(ritz[static_cast<std::size_t>(j)] - prev[static_cast<std::size_t>(j)]));
      scale = std::max(scale, std::fabs(ritz[static_cast<std::size_t>(j)]));
    }
    prev = ritz;
    if (delta / scale < tol) break;
  }
  // Rayleigh-Ritz: diagonalize the r x r projected matrix with Jacobi sweeps.
  op(q, aq);
  DenseArray small({r, r});
  mm_tn(q.data(), aq.data(), small.data(), r, n, r);
  DenseArray rot({r, r});
  for (long i = 0; i < r; ++i) rot(i, i) = 1.0;
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (long p = 0; p < r; ++p)
      for (long qq = p + 1; qq < r; ++qq) off += small(p, qq) * small(p, qq);
    if (off < 1e-24) break;
    for (long p = 0; p < r; ++p) {
      for (long qc = p + 1; qc < r; ++qc) {
        const double apq = small(p, qc);
        if (std::fabs(apq) < 1e-300) continue;
        const double app = small(p, p), aqq = small(qc, qc);
        const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
        const double c = std::cos(theta), s = std::sin(theta);
        for (long i = 0; i < r; ++i) {
          const double aip = small(i, p), aiq = small(i, qc);
          small(i, p) = c * aip - s * aiq;
          small(i, qc) = s * aip + c * aiq;
        }
        for (long i = 0; i < r; ++i) {
          const double api = small(p, i), aqi = small(qc, i);
          small(p, i) = c * api - s * aqi;
          small(qc, i) = s * api + c * aqi;
        }
        for (long i = 0; i < r; ++i) {
          const double rip = rot(i, p), riq = rot(i, qc);
          rot(i, p) = c * rip - s * riq;
          rot(i, qc) = s * rip + c * riq;
        }
      }
    }
  }
  std::vector<std::pair<double, long>> order;
  for (long j = 0; j < r; ++j) order.emplace_back(small(j, j), j);
  std::sort(order.begin(), order.end(), [](auto& a, auto& b) { return a.first > b.first; });
  SubspaceResult res;
  res.vectors = DenseArray({n, r});
  res.eigenvalues.resize(static_cast<std::size_t>(r));
  DenseArray qrot = matmul_raw(q, rot);
  for (long j = 0; j < r; ++j) {
    res.eigenvalues[static_cast<std::size_t>(j)] = std::max(0.0, order[static_cast<std::size_t>(j)].first);
    const long src = order[static_cast<std::size_t>(j)].second;
    for (long i = 0; i < n; ++i) res.vectors(i, j) = qrot(i, src);
  }
  return res;
}

}  // namespace stf::linalg
