#pragma once

#include <cmath>
#include <optional>

#include "stf/dense.hpp"
#include "stf/errors.hpp"
#include "stf/rng.hpp"

namespace stf::train {

// Observed tensor of shape nodes x steps x channels plus an optional
// observation mask (1 = observed) and calendar anchors.
struct SpatiotemporalSeries {
  DenseArray data;                  // N x T x d
  std::optional<DenseArray> mask;   // same shape as data when present
  long steps_per_day = 288;
  long start_weekday = 0;

  long n_nodes() const { return data.dim(0); }
  long n_steps() const { return data.dim(1); }
  long n_channels() const { return data.dim(2); }

  double at(long node, long t, long c) const {
    return data[(node * data.dim(1) + t) * data.dim(2) + c];
  }
  double& at(long node, long t, long c) {
    return data[(node * data.dim(1) + t) * data.dim(2) + c];
  }
  double mask_at(long node, long t, long c) const {
    if (!mask) return 1.0;
    return (*mask)[(node * data.dim(1) + t) * data.dim(2) + c];
  }

  long time_in_day(long t) const { return t % steps_per_day; }
  long day_in_week(long t) const { return (start_weekday + t / steps_per_day) % 7; }

  void validate() const {
    if (data.ndim() != 3) throw DataError("series must be nodes x steps x channels");
    if (mask && mask->shape() != data.shape())
      throw DataError("series mask shape does not match data");
  }
};

// Bernoulli element mask with the requested missing ratio. Masked entries are
// marked 0 in the mask; the data itself is left untouched (the training
// pipeline zero-fills after normalization).
inline SpatiotemporalSeries apply_mask(const SpatiotemporalSeries& s, double missing_ratio,
                                       std::uint64_t seed) {
  if (missing_ratio < 0.0 || missing_ratio > 1.0)
    throw DataError("missing ratio must lie in [0, 1]");
  SpatiotemporalSeries out = s;
  DenseArray m(s.data.shape());
  Rng rng(seed, 5);
  for (long i = 0; i < m.numel(); ++i) {
    const bool missing = missing_ratio >= 1.0 ||
                         (missing_ratio > 0.0 && rng.uniform() < missing_ratio);
    m[i] = missing ? 0.0 : 1.0;
  }
  if (s.mask) {
    for (long i = 0; i < m.numel(); ++i) m[i] *= (*s.mask)[i];
  }
  out.mask = std::move(m);
  return out;
}

// Adds i.i.d. Gaussian noise to the features; deterministic per seed.
inline SpatiotemporalSeries add_gaussian_noise(const SpatiotemporalSeries& s, double sigma,
                                               std::uint64_t seed) {
  if (sigma < 0.0) throw DataError("noise std must be nonnegative");
  SpatiotemporalSeries out = s;
  if (sigma == 0.0) return out;
  Rng rng(seed, 9);
  for (long i = 0; i < out.data.numel(); ++i) out.data[i] += sigma * rng.normal();
  return out;
}

// Per-node normalization statistics.
struct NodeStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at 1e-8
};

// Fits per-node mean/std over t < fit_steps (the training region) using only
// observed entries, then returns the normalized copy. Metrics must always be
// computed in original units via `denormalize_value`.
inline std::pair<SpatiotemporalSeries, NodeStats> zscore_fit_apply(
    const SpatiotemporalSeries& s, long fit_steps) {
  if (fit_steps < 1 || fit_steps > s.n_steps())
    throw DataError("zscore: fit region out of range");
  const long n = s.n_nodes(), t_all = s.n_steps(), d = s.n_channels();
  NodeStats stats;
  stats.mean.assign(static_cast<std::size_t>(n), 0.0);
  stats.stddev.assign(static_cast<std::size_t>(n), 1.0);
  for (long i = 0; i < n; ++i) {
    double sum = 0.0, cnt = 0.0;
    for (long t = 0; t < fit_steps; ++t)
      for (long c = 0; c < d; ++c)
        if (s.mask_at(i, t, c) != 0.0) {
          sum += s.at(i, t, c);
          cnt += 1.0;
        }
    const double mu = cnt > 0.0 ? sum / cnt : 0.0;
    double var = 0.0;
    for (long t = 0; t < fit_steps; ++t)
      for (long c = 0; c < d; ++c)
        if (s.mask_at(i, t, c) != 0.0) {
          const double dv = s.at(i, t, c) - mu;
          var += dv * dv;
        }
    var = cnt > 0.0 ? var / cnt : 0.0;
    stats.mean[static_cast<std::size_t>(i)] = mu;
    stats.stddev[static_cast<std::size_t>(i)] = std::max(std::sqrt(var), 1e-8);
  }
  SpatiotemporalSeries out = s;
  for (long i = 0; i < n; ++i) {
    const double mu = stats.mean[static_cast<std::size_t>(i)];
    const double sd = stats.stddev[static_cast<std::size_t>(i)];
    for (long t = 0; t < t_all; ++t)
      for (long c = 0; c < d; ++c) out.at(i, t, c) = (s.at(i, t, c) - mu) / sd;
  }
  return {std::move(out), std::move(stats)};
}

// Normalizes a series with externally fitted statistics (no refit).
inline SpatiotemporalSeries normalize_with(const SpatiotemporalSeries& s, const NodeStats& stats) {
  SpatiotemporalSeries out = s;
  for (long i = 0; i < s.n_nodes(); ++i) {
    const double mu = stats.mean[static_cast<std::size_t>(i)];
    const double sd = stats.stddev[static_cast<std::size_t>(i)];
    for (long t = 0; t < s.n_steps(); ++t)
      for (long c = 0; c < s.n_channels(); ++c) out.at(i, t, c) = (s.at(i, t, c) - mu) / sd;
  }
  return out;
}

inline double denormalize_value(const NodeStats& stats, long node, double v) {
  return v * stats.stddev[static_cast<std::size_t>(node)] + stats.mean[static_cast<std::size_t>(node)];
}

inline double normalize_value(const NodeStats& stats, long node, double v) {
  return (v - stats.mean[static_cast<std::size_t>(node)]) / stats.stddev[static_cast<std::size_t>(node)];
}

}  // namespace stf::train
