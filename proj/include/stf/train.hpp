#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "stf/errors.hpp"
#include "stf/model.hpp"
#include "stf/optim.hpp"
#include "stf/series.hpp"
#include "stf/windows.hpp"

namespace stf::train {

namespace detail {

// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
// handled by exactly one worker, so per-index results are thread-count
// independent; callers combine them in index order to stay deterministic.
inline void parallel_indices(long count, long threads, const std::function<void(long)>& fn) {
  threads = std::max<long>(1, std::min(threads, count));
  if (threads == 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&](long first) {
    try {
      for (long i = first; i < count; i += threads) fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!error) error = std::current_exception();
    }
  };
  for (long w = 1; w < threads; ++w) pool.emplace_back(worker, w);
  worker(0);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Metrics

struct MetricsReport {
  std::vector<double> mae_per_horizon;   // 0-indexed step within the block
  std::vector<double> rmse_per_horizon;
  std::vector<long> count_per_horizon;
  double mae_avg = 0.0;
  double rmse_avg = 0.0;
  long n_eval = 0;

  double mae_at(long h1) const { return mae_per_horizon.at(static_cast<std::size_t>(h1 - 1)); }
  double rmse_at(long h1) const { return rmse_per_horizon.at(static_cast<std::size_t>(h1 - 1)); }
};

// Horizon-wise MAE/RMSE in original units; masked targets are excluded.
inline MetricsReport compute_metrics(const std::vector<DenseArray>& preds,
                                     const std::vector<DenseArray>& targets,
                                     const std::vector<DenseArray>& masks, long horizon,
                                     long d_out) {
  if (preds.empty()) throw DataError("compute_metrics: empty evaluation set");
  std::vector<double> abs_sum(static_cast<std::size_t>(horizon), 0.0);
  std::vector<double> sq_sum(static_cast<std::size_t>(horizon), 0.0);
  std::vector<long> counts(static_cast<std::size_t>(horizon), 0);
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const DenseArray& p = preds[s];
    const DenseArray& y = targets[s];
    const DenseArray& m = masks[s];
    const long n = p.dim(0);
    for (long i = 0; i < n; ++i)
      for (long h = 0; h < horizon; ++h)
        for (long c = 0; c < d_out; ++c) {
          const long col = h * d_out + c;
          if (m(i, col) == 0.0) continue;
          const double e = p(i, col) - y(i, col);
          abs_sum[static_cast<std::size_t>(h)] += std::fabs(e);
          sq_sum[static_cast<std::size_t>(h)] += e * e;
          counts[static_cast<std::size_t>(h)] += 1;
        }
  }
  MetricsReport r;
  r.mae_per_horizon.resize(static_cast<std::size_t>(horizon), 0.0);
  r.rmse_per_horizon.resize(static_cast<std::size_t>(horizon), 0.0);
  r.count_per_horizon = counts;
  double mae_acc = 0.0, rmse_acc = 0.0;
  long horizons_counted = 0;
  for (long h = 0; h < horizon; ++h) {
    const long c = counts[static_cast<std::size_t>(h)];
    if (c > 0) {
      const double mae = abs_sum[static_cast<std::size_t>(h)] / static_cast<double>(c);
      const double rmse = std::sqrt(sq_sum[static_cast<std::size_t>(h)] / static_cast<double>(c));
      r.mae_per_horizon[static_cast<std::size_t>(h)] = mae;
      r.rmse_per_horizon[static_cast<std::size_t>(h)] = rmse;
      mae_acc += mae;
      rmse_acc += rmse;
      ++horizons_counted;
      r.n_eval += c;
    }
  }
  if (horizons_counted > 0) {
    r.mae_avg = mae_acc / static_cast<double>(horizons_counted);
    r.rmse_avg = rmse_acc / static_cast<double>(horizons_counted);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Batched loss and gradients

struct BatchResult {
  double loss_sum = 0.0;   // sum of |error| over unmasked entries
  double count = 0.0;      // unmasked entries
  bool all_masked = false;
};

// Forward/backward over one batch of windows. Per-sample gradients are
// computed in parallel and folded into the store in sample order, so the
// result does not depend on the worker count.
inline BatchResult batch_loss_and_grads(const model::ScaleStf& m, ad::ParameterStore& store,
                                        const SpatiotemporalSeries& series,
                                        const WindowDataset& ds,
                                        const std::vector<long>& batch_entries, long threads,
                                        bool compute_grads) {
  const long bsz = static_cast<long>(batch_entries.size());
  std::vector<double> sums(static_cast<std::size_t>(bsz), 0.0);
  std::vector<double> counts(static_cast<std::size_t>(bsz), 0.0);
  std::vector<std::vector<DenseArray>> sample_grads;
  if (compute_grads) sample_grads.resize(static_cast<std::size_t>(bsz));

  detail::parallel_indices(bsz, threads, [&](long s) {
    const WindowIndex& w = ds.entries[static_cast<std::size_t>(batch_entries[static_cast<std::size_t>(s)])];
    DenseArray x = extract_window(series, w, ds.window);
    auto [y, msk] = extract_target(series, w, ds.horizon);
    ad::Tape tape;
    auto binding = m.bind(tape);
    ad::Var pred = m.forward_sample(tape, binding, x, w.tid, w.diw);
    auto l1 = tape.l1_loss(pred, y, &msk, ad::Tape::Reduction::Sum);
    sums[static_cast<std::size_t>(s)] = tape.value(l1.loss)[0];
    counts[static_cast<std::size_t>(s)] = l1.count;
    if (compute_grads && !l1.all_masked) {
      tape.backward(l1.loss);
      auto& grads = sample_grads[static_cast<std::size_t>(s)];
      grads.reserve(static_cast<std::size_t>(store.size()));
      for (long p = 0; p < store.size(); ++p) {
        DenseArray& g = tape.grad(binding.vars[static_cast<std::size_t>(p)]);
        grads.push_back(g);
      }
    }
  });

  BatchResult res;
  for (long s = 0; s < bsz; ++s) {
    res.loss_sum += sums[static_cast<std::size_t>(s)];
    res.count += counts[static_cast<std::size_t>(s)];
  }
  res.all_masked = res.count == 0.0;
  if (compute_grads && !res.all_masked) {
    const double inv = 1.0 / res.count;
    for (long s = 0; s < bsz; ++s) {
      auto& grads = sample_grads[static_cast<std::size_t>(s)];
      if (grads.empty()) continue;
      for (long p = 0; p < store.size(); ++p) {
        DenseArray& dst = store.entry(p).grad;
        const DenseArray& src = grads[static_cast<std::size_t>(p)];
        for (long j = 0; j < dst.numel(); ++j) dst[j] += inv * src[j];
      }
    }
  }
  return res;
}

// Masked L1 mean (the training objective, normalized scale) over a window set.
inline double dataset_loss(const model::ScaleStf& m, const SpatiotemporalSeries& series,
                           const WindowDataset& ds, long threads) {
  const long n = static_cast<long>(ds.entries.size());
  std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
  std::vector<double> counts(static_cast<std::size_t>(n), 0.0);
  detail::parallel_indices(n, threads, [&](long s) {
    const WindowIndex& w = ds.entries[static_cast<std::size_t>(s)];
    DenseArray x = extract_window(series, w, ds.window);
    auto [y, msk] = extract_target(series, w, ds.horizon);
    ad::Tape tape;
    auto binding = m.bind(tape);
    ad::Var pred = m.forward_sample(tape, binding, x, w.tid, w.diw);
    auto l1 = tape.l1_loss(pred, y, &msk, ad::Tape::Reduction::Sum);
    sums[static_cast<std::size_t>(s)] = tape.value(l1.loss)[0];
    counts[static_cast<std::size_t>(s)] = l1.count;
  });
  double total = 0.0, count = 0.0;
  for (long s = 0; s < n; ++s) {
    total += sums[static_cast<std::size_t>(s)];
    count += counts[static_cast<std::size_t>(s)];
  }
  return count > 0.0 ? total / count : 0.0;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainOptions {
  long epochs = 100;
  long batch_size = 16;
  AdamOptimizer::Options adam;
  long patience = 10;
  std::uint64_t seed = 0;
  long threads = 1;
  std::function<void(const std::string&)> log;
};

struct EpochRecord {
  long epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_val = 0.0;
  long best_epoch = 0;
};

// Minimizes the masked L1 objective on the normalized scale, with early
// stopping on validation MAE; restores the best-validation parameters.
inline TrainResult train(model::ScaleStf& m, const SpatiotemporalSeries& series,
                         const WindowDataset& train_ds, const WindowDataset& val_ds,
                         const TrainOptions& opts) {
  if (train_ds.entries.empty()) throw DataError("train: no training windows");
  AdamOptimizer optimizer(m.params(), opts.adam);
  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  std::vector<DenseArray> best_params = m.params().snapshot_values();
  long since_best = 0;

  std::vector<long> order(train_ds.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<long>(i);

  for (long epoch = 0; epoch < opts.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(opts.seed, 0x5f5e100ULL + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    double epoch_sum = 0.0, epoch_count = 0.0;
    for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t end = std::min(order.size(), off + static_cast<std::size_t>(opts.batch_size));
      std::vector<long> batch(order.begin() + static_cast<long>(off), order.begin() + static_cast<long>(end));
      m.params().zero_grads();
      BatchResult br = batch_loss_and_grads(m, m.params(), series, train_ds, batch, opts.threads, true);
      if (!std::isfinite(br.loss_sum))
        throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
      epoch_sum += br.loss_sum;
      epoch_count += br.count;
      if (!br.all_masked) optimizer.step();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_count > 0.0 ? epoch_sum / epoch_count : 0.0;
    rec.val_loss = val_ds.entries.empty() ? rec.train_loss
                                          : dataset_loss(m, series, val_ds, opts.threads);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (opts.log) {
      opts.log("epoch " + std::to_string(epoch) + " train_loss " + std::to_string(rec.train_loss) +
               " val_loss " + std::to_string(rec.val_loss) + " (" + std::to_string(rec.seconds) + "s)");
    }
    if (rec.val_loss < result.best_val) {
      result.best_val = rec.val_loss;
      result.best_epoch = epoch;
      best_params = m.params().snapshot_values();
      since_best = 0;
    } else if (++since_best >= opts.patience) {
      break;
    }
  }
  m.params().restore_values(best_params);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

// Runs the model over a window set and reports horizon-wise errors in
// original units. Inputs may come from a different (e.g. noise-injected)
// series than the targets; pass nullptr to use the target series for both.
inline MetricsReport evaluate(const model::ScaleStf& m, const SpatiotemporalSeries& norm_series,
                              const NodeStats& stats, const WindowDataset& ds, long threads,
                              const SpatiotemporalSeries* input_series = nullptr) {
  if (ds.entries.empty()) throw DataError("evaluate: empty split");
  const long n_windows = static_cast<long>(ds.entries.size());
  std::vector<DenseArray> preds(static_cast<std::size_t>(n_windows));
  std::vector<DenseArray> targets(static_cast<std::size_t>(n_windows));
  std::vector<DenseArray> masks(static_cast<std::size_t>(n_windows));
  const long d_out = m.config().d_out;
  detail::parallel_indices(n_windows, threads, [&](long s) {
    const WindowIndex& w = ds.entries[static_cast<std::size_t>(s)];
    DenseArray x = extract_window(input_series ? *input_series : norm_series, w, ds.window);
    auto [y, msk] = extract_target(norm_series, w, ds.horizon);
    ad::Tape tape;
    auto binding = m.bind(tape);
    ad::Var pred = m.forward_sample(tape, binding, x, w.tid, w.diw);
    DenseArray p = tape.value(pred);
    const long n = p.dim(0);
    for (long i = 0; i < n; ++i)
      for (long col = 0; col < p.dim(1); ++col) {
        p(i, col) = denormalize_value(stats, i, p(i, col));
        y(i, col) = denormalize_value(stats, i, y(i, col));
      }
    preds[static_cast<std::size_t>(s)] = std::move(p);
    targets[static_cast<std::size_t>(s)] = std::move(y);
    masks[static_cast<std::size_t>(s)] = std::move(msk);
  });
  return compute_metrics(preds, targets, masks, ds.horizon, d_out);
}

// ---------------------------------------------------------------------------
// Layer-energy instrumentation

// Smoothness term sum_ij A_ij ||h_j - h_i||^2 normalized by ||H||_F^2.
inline double smoothness_term(const DenseArray& h, const DenseArray& a) {
  const long n = h.dim(0), d = h.dim(1);
  double acc = 0.0;
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) {
      const double w = a(i, j);
      if (w == 0.0) continue;
      double dd = 0.0;
      for (long k = 0; k < d; ++k) {
        const double diff = h(j, k) - h(i, k);
        dd += diff * diff;
      }
      acc += w * dd;
    }
  const double norm = h.frob_norm();
  return norm > 0.0 ? acc / (norm * norm) : 0.0;
}

// Per-layer smoothness of layer outputs H^(0..L), using the materialized
// attention of the block that consumed each output (the last block's map is
// reused for the final entry). Averaged over the given windows.
inline std::vector<double> energy_trace(const model::ScaleStf& m,
                                        const SpatiotemporalSeries& series,
                                        const WindowDataset& ds,
                                        const std::vector<long>& entries,
                                        long materialize_cap = 512) {
  if (m.config().n_nodes > materialize_cap)
    throw CapacityError("energy trace materializes an N x N attention matrix; " +
                        std::to_string(m.config().n_nodes) + " nodes exceed the cap of " +
                        std::to_string(materialize_cap) + " -- subsample nodes first");
  const long layers = m.config().n_layers;
  std::vector<double> acc(static_cast<std::size_t>(layers + 1), 0.0);
  for (long e : entries) {
    const WindowIndex& w = ds.entries[static_cast<std::size_t>(e)];
    DenseArray x = extract_window(series, w, ds.window);
    ad::Tape tape;
    auto binding = m.bind(tape);
    model::ForwardTrace trace;
    trace.materialize = true;
    (void)m.forward_sample(tape, binding, x, w.tid, w.diw, &trace);
    for (long l = 0; l <= layers; ++l) {
      const DenseArray& a = trace.attention[static_cast<std::size_t>(std::min(l, layers - 1))];
      acc[static_cast<std::size_t>(l)] += smoothness_term(trace.layer_outputs[static_cast<std::size_t>(l)], a);
    }
  }
  for (auto& v : acc) v /= static_cast<double>(entries.size());
  return acc;
}

}  // namespace stf::train
