#pragma once

#include <cmath>
#include <vector>

#include "stf/dense.hpp"
#include "stf/errors.hpp"
#include "stf/linalg.hpp"
#include "stf/series.hpp"

namespace stf::graphlab {

// Orthonormal spatial modes with nonincreasing singular values.
struct PodBasis {
  DenseArray modes;                   // N x r
  std::vector<double> singular_values;

  // || X - Phi Phi^T X ||_F^2 for the node-state matrix X.
  double reconstruction_error(const DenseArray& x) const {
    const long n = x.dim(0), t = x.dim(1), r = modes.dim(1);
    DenseArray coeff({r, t});
    mm_tn(modes.data(), x.data(), coeff.data(), r, n, t);
    DenseArray recon({n, t});
    mm_nn(modes.data(), coeff.data(), recon.data(), n, r, t);
    double err = 0.0;
    for (long i = 0; i < x.numel(); ++i) {
      const double d = x[i] - recon[i];
      err += d * d;
    }
    return err;
  }
};

inline DenseArray node_state_matrix(const train::SpatiotemporalSeries& s) {
  const long n = s.n_nodes(), t = s.n_steps();
  if (s.n_channels() != 1) throw DataError("pod: single-channel series expected");
  DenseArray x({n, t});
  for (long i = 0; i < n; ++i)
    for (long k = 0; k < t; ++k) x(i, k) = s.at(i, k, 0);
  return x;
}

// Top-r left singular directions of the N x T node-state matrix, computed by
// block power iteration on X X^T.
inline PodBasis pod_basis_matrix(const DenseArray& x, long r, long max_iters = 300,
                                 std::uint64_t seed = 0) {
  const long n = x.dim(0), t = x.dim(1);
  if (r < 1 || r > std::min(n, t)) throw DataError("pod: rank out of range");
  DenseArray scratch({t, r});
  auto op = [&](const DenseArray& q, DenseArray& out) {
    // out = X (X^T q)
    mm_tn(x.data(), q.data(), scratch.data(), t, n, r);
    mm_nn(x.data(), scratch.data(), out.data(), n, t, r);
  };
  auto sub = linalg::subspace_iteration(op, n, r, max_iters, 1e-13, seed);
  PodBasis basis;
  basis.modes = std::move(sub.vectors);
  basis.singular_values.resize(static_cast<std::size_t>(r));
  for (long k = 0; k < r; ++k)
    basis.singular_values[static_cast<std::size_t>(k)] =
        std::sqrt(std::max(0.0, sub.eigenvalues[static_cast<std::size_t>(k)]));
  return basis;
}

inline PodBasis pod_basis(const train::SpatiotemporalSeries& s, long r) {
  return pod_basis_matrix(node_state_matrix(s), r);
}

}  // namespace stf::graphlab
