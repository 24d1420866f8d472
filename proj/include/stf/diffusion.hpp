#pragma once

#include <cmath>
#include <functional>

#include "stf/dense.hpp"
#include "stf/errors.hpp"
#include "stf/linalg.hpp"

namespace stf::diffusion {

// Nonnegative pairwise diffusion intensities.
struct DiffusivityMatrix {
  DenseArray f;  // N x N
  bool symmetric = false;

  void validate() const {
    if (f.ndim() != 2 || f.dim(0) != f.dim(1)) throw DimensionError("diffusivity must be square");
    const long n = f.dim(0);
    for (long i = 0; i < f.numel(); ++i)
      if (f[i] < 0.0) throw DataError("diffusivity entries must be nonnegative");
    if (symmetric) {
      for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j)
          if (std::fabs(f(i, j) - f(j, i)) >= 1e-12)
            throw DataError("diffusivity marked symmetric but is not");
    }
  }
};

struct EnergyParams {
  double rho = 1.0;   // smoothness weight, >= 0
  double step = 0.1;  // Euler step size, > 0
};

struct EnergyValue {
  double total = 0.0;       // consistency + rho * smoothness
  double smoothness = 0.0;  // sum_ij F_ij ||h_j - h_i||^2
};

// ||H - H_prev||_F^2 + rho * sum_ij F_ij ||h_j - h_i||^2.
inline EnergyValue dirichlet_energy(const DenseArray& h, const DenseArray& h_prev,
                                    const DiffusivityMatrix& f, double rho) {
  if (h.shape() != h_prev.shape()) throw DimensionError("dirichlet_energy: shape mismatch");
  const long n = h.dim(0), d = h.dim(1);
  if (f.f.dim(0) != n) throw DimensionError("dirichlet_energy: diffusivity size mismatch");
  EnergyValue e;
  for (long i = 0; i < h.numel(); ++i) {
    const double diff = h[i] - h_prev[i];
    e.total += diff * diff;
  }
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      const double w = f.f(i, j);
      if (w == 0.0) continue;
      double dd = 0.0;
      for (long k = 0; k < d; ++k) {
        const double diff = h(j, k) - h(i, k);
        dd += diff * diff;
      }
      e.smoothness += w * dd;
    }
  }
  e.total += rho * e.smoothness;
  return e;
}

// One explicit Euler step: h_i' = h_i + delta * sum_j F_ij (h_j - h_i),
// computed in matrix form as (I - delta diag(F 1)) H + delta F H.
inline DenseArray diffusion_step(const DenseArray& h, const DiffusivityMatrix& f, double delta) {
  if (delta < 0.0) throw DataError("diffusion_step: delta must be >= 0");
  const long n = h.dim(0), d = h.dim(1);
  if (f.f.dim(0) != n) throw DimensionError("diffusion_step: diffusivity size mismatch");
  DenseArray fh({n, d});
  mm_nn(f.f.data(), h.data(), fh.data(), n, n, d);
  DenseArray out = h;
  for (long i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (long j = 0; j < n; ++j) row_sum += f.f(i, j);
    for (long k = 0; k < d; ++k)
      out(i, k) += delta * (fh(i, k) - row_sum * h(i, k));
  }
  return out;
}

// Largest eigenvalue of diag(F 1) - F, for choosing a stable Euler step.
inline double diffusion_lambda_max(const DiffusivityMatrix& f, long iters = 100,
                                   std::uint64_t seed = 0) {
  const long n = f.f.dim(0);
  std::vector<double> row_sum(static_cast<std::size_t>(n), 0.0);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) row_sum[static_cast<std::size_t>(i)] += f.f(i, j);
  auto op = [&](const double* x, double* y) {
    for (long i = 0; i < n; ++i) {
      double s = row_sum[static_cast<std::size_t>(i)] * x[i];
      for (long j = 0; j < n; ++j) s -= f.f(i, j) * x[j];
      y[i] = s;
    }
  };
  return linalg::power_iteration(op, n, iters, seed);
}

// Exact minimizer (I + beta L)^{-1} X0 of the graph-regularized least squares
// objective. Direct factorization up to `direct_limit` nodes, conjugate
// gradient above; either way the residual is driven below 1e-10.
inline DenseArray denoise_closed_form(const DenseArray& x0, const DenseArray& l, double beta,
                                      long direct_limit = 2000) {
  if (beta < 0.0) throw DataError("denoise: beta must be >= 0");
  const long n = x0.dim(0), d = x0.dim(1);
  if (l.dim(0) != n || l.dim(1) != n) throw DimensionError("denoise: Laplacian size mismatch");
  if (beta == 0.0) return x0;
  DenseArray a({n, n});
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) a(i, j) = beta * l(i, j) + (i == j ? 1.0 : 0.0);
  if (n <= direct_limit) {
    DenseArray chol = linalg::cholesky(a);
    return linalg::cholesky_solve(chol, x0);
  }
  DenseArray out({n, d});
  auto op = [&](const double* x, double* y) {
    for (long i = 0; i < n; ++i) {
      double s = 0.0;
      for (long j = 0; j < n; ++j) s += a(i, j) * x[j];
      y[i] = s;
    }
  };
  std::vector<double> rhs(static_cast<std::size_t>(n)), sol(static_cast<std::size_t>(n));
  for (long c = 0; c < d; ++c) {
    for (long i = 0; i < n; ++i) rhs[static_cast<std::size_t>(i)] = x0(i, c);
    auto res = linalg::conjugate_gradient(op, rhs.data(), sol.data(), n, 1e-12, 10 * n);
    if (!res.converged && res.residual > 1e-10)
      throw NumericError("denoise: CG failed to converge, residual " + std::to_string(res.residual));
    for (long i = 0; i < n; ++i) out(i, c) = sol[static_cast<std::size_t>(i)];
  }
  return out;
}

// First-order expansion (I - beta L) X0. Accurate only for small beta; the
// caller can consult `first_order_warns` for a cheap diagnostic.
inline DenseArray denoise_first_order(const DenseArray& x0, const DenseArray& l, double beta) {
  const long n = x0.dim(0), d = x0.dim(1);
  if (l.dim(0) != n || l.dim(1) != n) throw DimensionError("denoise: Laplacian size mismatch");
  DenseArray lx({n, d});
  mm_nn(l.data(), x0.data(), lx.data(), n, n, d);
  DenseArray out = x0;
  for (long i = 0; i < out.numel(); ++i) out[i] -= beta * lx[i];
  return out;
}

inline bool first_order_warns(const DenseArray& l, double beta, std::uint64_t seed = 0) {
  const long n = l.dim(0);
  auto op = [&](const double* x, double* y) {
    for (long i = 0; i < n; ++i) {
      double s = 0.0;
      for (long j = 0; j < n; ++j) s += l(i, j) * x[j];
      y[i] = s;
    }
  };
  const double lmax = linalg::power_iteration(op, n, 100, seed);
  return beta * lmax >= 1.0;
}

// Gradient of the denoising objective at X: 2 beta L X + 2 (X - X0).
inline DenseArray denoise_objective_gradient(const DenseArray& x, const DenseArray& x0,
                                             const DenseArray& l, double beta) {
  const long n = x.dim(0), d = x.dim(1);
  DenseArray lx({n, d});
  mm_nn(l.data(), x.data(), lx.data(), n, n, d);
  DenseArray g({n, d});
  for (long i = 0; i < g.numel(); ++i) g[i] = 2.0 * beta * lx[i] + 2.0 * (x[i] - x0[i]);
  return g;
}

// Explicit gradient descent on the denoising objective; reference route used
// to cross-check the closed form.
inline DenseArray denoise_gradient_descent(const DenseArray& x0, const DenseArray& l, double beta,
                                           long steps, std::uint64_t seed = 0) {
  const long n = l.dim(0);
  auto op = [&](const double* x, double* y) {
    for (long i = 0; i < n; ++i) {
      double s = 0.0;
      for (long j = 0; j < n; ++j) s += l(i, j) * x[j];
      y[i] = s;
    }
  };
  const double lmax = linalg::power_iteration(op, n, 100, seed);
  const double step = 1.0 / (2.0 * (1.0 + beta * std::max(lmax, 0.0)) * 1.05);
  DenseArray x = x0;
  for (long it = 0; it < steps; ++it) {
    DenseArray g = denoise_objective_gradient(x, x0, l, beta);
    for (long i = 0; i < x.numel(); ++i) x[i] -= step * g[i];
  }
  return x;
}

}  // namespace stf::diffusion
