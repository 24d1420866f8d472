#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "stf/dense.hpp"
#include "stf/errors.hpp"
#include "stf/graph.hpp"
#include "stf/rng.hpp"
#include "stf/series.hpp"
#include "stf/tape.hpp"

namespace stf::graphlab {

// Graph polynomial vector autoregression:
//   H_t = sum_{l=0..L} sum_{p=1..P} psi[p][l] S^l (X_{t-p} + u_{t-p})
//   X_t = e .* xi(H_t) + eta_t,   eta_t ~ N(0, sigma^2 I)
// Deterministic given the seed; the first `burn_in` steps are discarded.
struct GpvarConfig {
  DenseArray psi;                        // p_lags x (l_order + 1)
  long p_lags = 3;
  long l_order = 2;
  double noise_std = 0.4;
  std::vector<double> region_gains;      // length N; empty means draw from seed
  double gain_min = 0.5;
  double gain_max = 1.5;
  ad::Act nonlinearity = ad::Act::Tanh;
  std::optional<DenseArray> exo;         // N x (burn_in + steps) exogenous input
  long steps = 30000;
  long burn_in = 100;
  std::uint64_t seed = 0;
  ShiftKind shift_kind = ShiftKind::SymNormalized;
  double divergence_limit = 1e6;

  void validate() const {
    if (p_lags < 1) throw ConfigError("gpvar: p_lags must be >= 1");
    if (l_order < 0) throw ConfigError("gpvar: l_order must be >= 0");
    if (noise_std < 0.0) throw ConfigError("gpvar: noise_std must be >= 0");
    if (steps < 1) throw ConfigError("gpvar: steps must be >= 1");
    if (!psi.empty() && (psi.ndim() != 2 || psi.dim(0) != p_lags || psi.dim(1) != l_order + 1))
      throw ConfigError("gpvar: psi must be p_lags x (l_order + 1)");
  }
};

// Coefficient table with weight decaying in both lag and propagation order,
// scaled so the lag-1 self term dominates and the linearized dynamics stay
// stable for gains up to gain_max.
inline DenseArray default_psi(long p_lags, long l_order, double scale = 1.0) {
  DenseArray psi({p_lags, l_order + 1});
  std::vector<double> lag_w(static_cast<std::size_t>(p_lags));
  std::vector<double> ord_w(static_cast<std::size_t>(l_order + 1));
  double lw = 0.0, ow = 0.0;
  for (long p = 0; p < p_lags; ++p) lw += lag_w[static_cast<std::size_t>(p)] = std::pow(0.22, static_cast<double>(p));
  for (long l = 0; l <= l_order; ++l) ow += ord_w[static_cast<std::size_t>(l)] = std::pow(0.30, static_cast<double>(l));
  const double total = 0.55 * scale;
  for (long p = 0; p < p_lags; ++p)
    for (long l = 0; l <= l_order; ++l)
      psi(p, l) = total * (lag_w[static_cast<std::size_t>(p)] / lw) * (ord_w[static_cast<std::size_t>(l)] / ow);
  return psi;
}

inline train::SpatiotemporalSeries gpvar_generate(const Graph& g, const GpvarConfig& cfg) {
  cfg.validate();
  const long n = g.n();
  DenseArray psi = cfg.psi.empty() ? default_psi(cfg.p_lags, cfg.l_order) : cfg.psi;

  std::vector<double> gains = cfg.region_gains;
  if (gains.empty()) {
    Rng grng(cfg.seed, 11);
    gains.resize(static_cast<std::size_t>(n));
    for (auto& e : gains) e = grng.uniform(cfg.gain_min, cfg.gain_max);
  } else if (static_cast<long>(gains.size()) != n) {
    throw ConfigError("gpvar: region_gains length must equal node count");
  }

  Rng noise_rng(cfg.seed, 13);
  const long total = cfg.burn_in + cfg.steps;
  if (cfg.exo && (cfg.exo->ndim() != 2 || cfg.exo->dim(0) != n || cfg.exo->dim(1) < total))
    throw ConfigError("gpvar: exogenous series must be N x (burn_in + steps)");

  // Ring buffer of the last p_lags states.
  std::vector<std::vector<double>> hist(static_cast<std::size_t>(cfg.p_lags),
                                        std::vector<double>(static_cast<std::size_t>(n), 0.0));
  std::vector<double> h(static_cast<std::size_t>(n));
  std::vector<double> prop(static_cast<std::size_t>(n));
  std::vector<double> next_prop(static_cast<std::size_t>(n));

  train::SpatiotemporalSeries out;
  out.data = DenseArray({n, cfg.steps, 1});

  for (long t = 0; t < total; ++t) {
    std::fill(h.begin(), h.end(), 0.0);
    for (long p = 0; p < cfg.p_lags; ++p) {
      const auto& past = hist[static_cast<std::size_t>((t + cfg.p_lags - 1 - p) % cfg.p_lags)];
      for (long i = 0; i < n; ++i) prop[static_cast<std::size_t>(i)] = past[static_cast<std::size_t>(i)];
      if (cfg.exo) {
        const long te = t - 1 - p;
        if (te >= 0)
          for (long i = 0; i < n; ++i) prop[static_cast<std::size_t>(i)] += (*cfg.exo)(i, te);
      }
      for (long l = 0; l <= cfg.l_order; ++l) {
        const double coef = psi(p, l);
        for (long i = 0; i < n; ++i) h[static_cast<std::size_t>(i)] += coef * prop[static_cast<std::size_t>(i)];
        if (l < cfg.l_order) {
          g.apply_shift(cfg.shift_kind, prop.data(), next_prop.data());
          std::swap(prop, next_prop);
        }
      }
    }
    auto& cur = hist[static_cast<std::size_t>(t % cfg.p_lags)];
    for (long i = 0; i < n; ++i) {
      double xi;
      switch (cfg.nonlinearity) {
        case ad::Act::Relu: xi = h[static_cast<std::size_t>(i)] > 0.0 ? h[static_cast<std::size_t>(i)] : 0.0; break;
        case ad::Act::Tanh: xi = std::tanh(h[static_cast<std::size_t>(i)]); break;
        default: xi = 1.0 / (1.0 + std::exp(-h[static_cast<std::size_t>(i)])); break;
      }
      double x = gains[static_cast<std::size_t>(i)] * xi;
      if (cfg.noise_std > 0.0) x += cfg.noise_std * noise_rng.normal();
      if (!std::isfinite(x) || std::fabs(x) > cfg.divergence_limit)
        throw NumericError("gpvar: series diverged at step " + std::to_string(t));
      cur[static_cast<std::size_t>(i)] = x;
      if (t >= cfg.burn_in) out.at(i, t - cfg.burn_in, 0) = x;
    }
  }
  return out;
}

}  // namespace stf::graphlab
