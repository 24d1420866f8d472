#pragma once

#include <vector>

#include "stf/errors.hpp"
#include "stf/series.hpp"

namespace stf::train {

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    default: return "test";
  }
}

// One forecasting instance: inputs cover [anchor - W, anchor), targets cover
// [anchor, anchor + H).
struct WindowIndex {
  long anchor = 0;
  long tid = 0;
  long diw = 0;
};

struct WindowDataset {
  long window = 0;
  long horizon = 0;
  std::vector<WindowIndex> entries;
  Split split = Split::Train;
};

// All maximal windows with the given stride over [t_begin, t_end).
inline WindowDataset make_windows(const SpatiotemporalSeries& s, long window, long horizon,
                                  long stride = 1, long t_begin = 0, long t_end = -1) {
  if (stride < 1) throw DataError("make_windows: stride must be >= 1");
  if (t_end < 0) t_end = s.n_steps();
  const long span = t_end - t_begin;
  if (span < window + horizon)
    throw DataError("make_windows: need at least window + horizon steps, have " +
                    std::to_string(span));
  WindowDataset ds;
  ds.window = window;
  ds.horizon = horizon;
  for (long anchor = t_begin + window; anchor + horizon <= t_end; anchor += stride)
    ds.entries.push_back({anchor, s.time_in_day(anchor), s.day_in_week(anchor)});
  return ds;
}

struct SplitBoundaries {
  long train_end = 0;  // train region is [0, train_end)
  long val_end = 0;    // val region is [train_end, val_end)
                       // test region is [val_end, T)
};

inline SplitBoundaries chronological_split(long t_total, double train_frac, double val_frac) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0)
    throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train + val < 1");
  SplitBoundaries b;
  b.train_end = static_cast<long>(static_cast<double>(t_total) * train_frac);
  b.val_end = b.train_end + static_cast<long>(static_cast<double>(t_total) * val_frac);
  return b;
}

// Copies the input window for one instance into an N x (W * d_in) matrix,
// zero-filling masked entries (data is assumed already normalized).
inline DenseArray extract_window(const SpatiotemporalSeries& s, const WindowIndex& w, long window) {
  const long n = s.n_nodes(), d = s.n_channels();
  DenseArray x({n, window * d});
  for (long i = 0; i < n; ++i)
    for (long t = 0; t < window; ++t)
      for (long c = 0; c < d; ++c) {
        const long ts = w.anchor - window + t;
        const double m = s.mask_at(i, ts, c);
        x(i, t * d + c) = m != 0.0 ? s.at(i, ts, c) : 0.0;
      }
  return x;
}

// Targets for one instance as an N x (H * d) matrix plus the matching mask.
inline std::pair<DenseArray, DenseArray> extract_target(const SpatiotemporalSeries& s,
                                                        const WindowIndex& w, long horizon) {
  const long n = s.n_nodes(), d = s.n_channels();
  DenseArray y({n, horizon * d});
  DenseArray m({n, horizon * d});
  for (long i = 0; i < n; ++i)
    for (long t = 0; t < horizon; ++t)
      for (long c = 0; c < d; ++c) {
        const long ts = w.anchor + t;
        y(i, t * d + c) = s.at(i, ts, c);
        m(i, t * d + c) = s.mask_at(i, ts, c);
      }
  return {std::move(y), std::move(m)};
}

}  // namespace stf::train
