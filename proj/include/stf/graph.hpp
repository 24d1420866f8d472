#pragma once

#include <cmath>
#include <tuple>
#include <vector>

#include "stf/dense.hpp"
#include "stf/errors.hpp"
#include "stf/rng.hpp"

namespace stf::graphlab {

struct Edge {
  long i;
  long j;  // i <= j; i == j encodes a self-loop
  double w;
};

enum class ShiftKind { Unnormalized, SymNormalized };

// Undirected weighted graph with cached dense operators. Immutable after
// construction.
class Graph {
 public:
  Graph(long n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
    if (n <= 0) throw DataError("graph needs at least one node");
    adjacency_ = DenseArray({n, n});
    for (const auto& e : edges_) {
      if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n || e.i > e.j)
        throw DataError("bad edge in graph construction");
      if (e.w < 0.0) throw DataError("negative edge weight");
      adjacency_(e.i, e.j) += e.w;
      if (e.i != e.j) adjacency_(e.j, e.i) += e.w;
    }
    degree_.resize(static_cast<std::size_t>(n), 0.0);
    for (long i = 0; i < n; ++i) {
      double d = 0.0;
      for (long j = 0; j < n; ++j) d += adjacency_(i, j);
      degree_[static_cast<std::size_t>(i)] = d;
    }
  }

  long n() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const DenseArray& adjacency() const { return adjacency_; }
  double degree(long i) const { return degree_[static_cast<std::size_t>(i)]; }

  // L = D - A (row sums are zero by construction).
  DenseArray laplacian() const {
    DenseArray l({n_, n_});
    for (long i = 0; i < n_; ++i) {
      for (long j = 0; j < n_; ++j) l(i, j) = -adjacency_(i, j);
      l(i, i) += degree_[static_cast<std::size_t>(i)];
    }
    return l;
  }

  // S = D^{-1/2} A D^{-1/2}; requires every node to have positive degree.
  DenseArray sym_normalized_shift() const {
    for (long i = 0; i < n_; ++i)
      if (degree_[static_cast<std::size_t>(i)] <= 0.0)
        throw DataError("normalized shift undefined: node " + std::to_string(i) +
                        " has zero degree and no self-loop");
    DenseArray s({n_, n_});
    for (long i = 0; i < n_; ++i) {
      const double di = 1.0 / std::sqrt(degree_[static_cast<std::size_t>(i)]);
      for (long j = 0; j < n_; ++j) {
        const double dj = 1.0 / std::sqrt(degree_[static_cast<std::size_t>(j)]);
        s(i, j) = di * adjacency_(i, j) * dj;
      }
    }
    return s;
  }

  DenseArray shift(ShiftKind kind) const {
    return kind == ShiftKind::Unnormalized ? laplacian() : sym_normalized_shift();
  }

  // Sparse y = M x where M is the requested shift operator.
  void apply_shift(ShiftKind kind, const double* x, double* y) const {
    if (kind == ShiftKind::SymNormalized) {
      for (long i = 0; i < n_; ++i) {
        if (degree_[static_cast<std::size_t>(i)] <= 0.0)
          throw DataError("normalized shift undefined for zero-degree node");
        y[i] = 0.0;
      }
      for (const auto& e : edges_) {
        const double wi = e.w / std::sqrt(degree_[static_cast<std::size_t>(e.i)] *
                                          degree_[static_cast<std::size_t>(e.j)]);
        y[e.i] += wi * x[e.j];
        if (e.i != e.j) y[e.j] += wi * x[e.i];
      }
    } else {
      for (long i = 0; i < n_; ++i) y[i] = degree_[static_cast<std::size_t>(i)] * x[i];
      for (const auto& e : edges_) {
        y[e.i] -= e.w * x[e.j];
        if (e.i != e.j) y[e.j] -= e.w * x[e.i];
      }
    }
  }

 private:
  long n_;
  std::vector<Edge> edges_;
  DenseArray adjacency_;
  std::vector<double> degree_;
};

// Stochastic block model with unit edge weights: every intra-community pair
// drawn with p_in, every cross pair with p_out. Isolated nodes receive a unit
// self-loop so the normalized shift stays well-defined.
inline Graph community_graph(long n_communities, long nodes_per_community,
                             double p_in, double p_out, std::uint64_t seed) {
  if (n_communities < 1 || nodes_per_community < 1)
    throw DataError("community_graph: need at least one node");
  if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0)
    throw DataError("community_graph: probabilities must lie in [0, 1]");
  const long n = n_communities * nodes_per_community;
  Rng rng(seed, 1);
  std::vector<Edge> edges;
  for (long i = 0; i < n; ++i) {
    const long ci = i / nodes_per_community;
    for (long j = i + 1; j < n; ++j) {
      const long cj = j / nodes_per_community;
      const double p = (ci == cj) ? p_in : p_out;
      if (p >= 1.0 || (p > 0.0 && rng.uniform() < p)) edges.push_back({i, j, 1.0});
    }
  }
  std::vector<char> touched(static_cast<std::size_t>(n), 0);
  for (const auto& e : edges) {
    touched[static_cast<std::size_t>(e.i)] = 1;
    touched[static_cast<std::size_t>(e.j)] = 1;
  }
  for (long i = 0; i < n; ++i)
    if (!touched[static_cast<std::size_t>(i)]) edges.push_back({i, i, 1.0});
  return Graph(n, std::move(edges));
}

}  // namespace stf::graphlab
