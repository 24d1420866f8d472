#pragma once

#include <string>
#include <vector>

#include "stf/grad_check.hpp"
#include "stf/model.hpp"
#include "stf/train.hpp"

namespace stf::diag {

// Finite-difference check of the full model loss on a small random batch.
inline ad::GradCheckReport scalestf_grad_check(const model::ModelConfig& cfg, std::uint64_t seed,
                                               long coords_per_param = 6, long batch = 2) {
  model::ScaleStf m(cfg, seed);
  Rng rng(seed, 71);
  train::SpatiotemporalSeries series;
  series.data = DenseArray::randn({cfg.n_nodes, cfg.window + cfg.horizon + batch, 1}, rng, 0.8);
  series.steps_per_day = cfg.steps_per_day;
  train::WindowDataset ds = train::make_windows(series, cfg.window, cfg.horizon);
  std::vector<long> entries;
  for (long s = 0; s < batch; ++s) entries.push_back(s % static_cast<long>(ds.entries.size()));

  auto fn = [&](ad::ParameterStore& ps, bool grads) {
    if (grads) ps.zero_grads();
    auto br = train::batch_loss_and_grads(m, ps, series, ds, entries, 1, grads);
    return br.count > 0.0 ? br.loss_sum / br.count : 0.0;
  };
  ad::GradCheckOptions opts;
  opts.seed = seed;
  opts.max_coords_per_param = coords_per_param;
  return ad::grad_check(m.params(), fn, opts);
}

// Default toy geometry used by the gradient battery.
inline model::ModelConfig toy_config(long n_nodes = 6, long n_layers = 2,
                                     model::AttentionMode mode = model::AttentionMode::Modulated) {
  model::ModelConfig cfg;
  cfg.n_nodes = n_nodes;
  cfg.window = 6;
  cfg.horizon = 4;
  cfg.d_feature = 8;
  cfg.d_node = 6;
  cfg.d_tid = 4;
  cfg.d_diw = 4;
  cfg.rank = 3;
  cfg.n_layers = n_layers;
  cfg.calendar_enabled = true;
  cfg.steps_per_day = 16;
  cfg.attention = mode;
  cfg.full_attention_cap = 64;
  return cfg;
}

}  // namespace stf::diag
