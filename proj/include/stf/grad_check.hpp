#pragma once

#include <cmath>
#include <functional>

#include "stf/errors.hpp"
#include "stf/params.hpp"
#include "stf/rng.hpp"

namespace stf::ad {

struct GradCheckOptions {
  double eps = 1e-5;                 // central difference step, in [1e-7, 1e-3]
  long max_coords_per_param = 8;     // sampled coordinates per parameter array
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  long coords_checked = 0;
};

// Central finite differences against an analytic gradient pass.
//
// `loss_and_grad(params, true)` must populate params' grad buffers and return
// the loss; `loss_and_grad(params, false)` must only return the loss. The
// finite-difference path re-evaluates the loss, which is the independent
// oracle for every analytic adjoint.
inline GradCheckReport grad_check(
    ParameterStore& params,
    const std::function<double(ParameterStore&, bool)>& loss_and_grad,
    const GradCheckOptions& opts = {}) {
  if (opts.eps < 1e-7 || opts.eps > 1e-3)
    throw ConfigError("grad_check: eps out of [1e-7, 1e-3]");
  params.zero_grads();
  const double base = loss_and_grad(params, true);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");

  Rng rng(opts.seed, 97);
  GradCheckReport report;
  for (long pi = 0; pi < params.size(); ++pi) {
    auto& e = params.entry(pi);
    const long n = e.value.numel();
    if (n == 0) continue;
    const long n_coords = std::min(n, opts.max_coords_per_param);
    for (long c = 0; c < n_coords; ++c) {
      const long idx = (n_coords == n) ? c : static_cast<long>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      const double saved = e.value[idx];
      e.value[idx] = saved + opts.eps;
      const double up = loss_and_grad(params, false);
      e.value[idx] = saved - opts.eps;
      const double down = loss_and_grad(params, false);
      e.value[idx] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("grad_check: non-finite loss during perturbation");
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double analytic = e.grad[idx];
      const double rel = std::fabs(analytic - numeric) / std::max(1.0, std::fabs(numeric));
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = e.name;
      }
    }
  }
  return report;
}

}  // namespace stf::ad
