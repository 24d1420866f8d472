#pragma once

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

#include "stf/model.hpp"
#include "stf/train.hpp"

namespace stf::bench {

struct BenchPoint {
  long n_nodes = 0;
  model::AttentionMode mode = model::AttentionMode::Modulated;
  long reps = 0;
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  long long peak_bytes = 0;
  long param_count = 0;
  std::string status = "ok";  // or "capacity_error"
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double iqr_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return v[(3 * n) / 4] - v[n / 4];
}

// Forward+backward wall time for one (node count, attention mode) point.
// The first repetition is a discarded warm-up; memory is the allocator-level
// peak across the timed repetitions.
inline BenchPoint time_forward_backward(const model::ModelConfig& cfg, long batch, long reps,
                                        std::uint64_t seed, long threads) {
  BenchPoint pt;
  pt.n_nodes = cfg.n_nodes;
  pt.mode = cfg.attention;
  pt.reps = reps;
  pt.param_count = model::param_count(cfg).total;
  if (cfg.attention == model::AttentionMode::Full && cfg.n_nodes > cfg.full_attention_cap) {
    pt.status = "capacity_error";
    return pt;
  }
  model::ScaleStf m(cfg, seed);
  Rng rng(seed, 41);

  // Synthetic batch with the configured geometry.
  train::SpatiotemporalSeries series;
  series.data = DenseArray::randn({cfg.n_nodes, cfg.window + cfg.horizon + batch, 1}, rng);
  train::WindowDataset ds = train::make_windows(series, cfg.window, cfg.horizon);
  std::vector<long> entries;
  for (long s = 0; s < batch; ++s) entries.push_back(s % static_cast<long>(ds.entries.size()));

  std::vector<double> times;
  MemStats::reset_peak();
  for (long rep = 0; rep <= reps; ++rep) {
    m.params().zero_grads();
    const auto t0 = std::chrono::steady_clock::now();
    (void)train::batch_loss_and_grads(m, m.params(), series, ds, entries, threads, true);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (rep > 0) times.push_back(ms);  // rep 0 is warm-up
  }
  pt.peak_bytes = MemStats::peak().load();
  pt.median_ms = median_of(times);
  pt.iqr_ms = iqr_of(times);
  return pt;
}

}  // namespace stf::bench
