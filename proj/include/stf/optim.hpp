#pragma once

#include <cmath>
#include <vector>

#include "stf/errors.hpp"
#include "stf/params.hpp"

namespace stf::train {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Rejects non-finite gradients instead of
// poisoning the parameters.
class AdamOptimizer {
 public:
  using Options = AdamOptions;

  explicit AdamOptimizer(ad::ParameterStore& params, Options opts = Options())
      : params_(params), opts_(opts) {
    m_.reserve(static_cast<std::size_t>(params.size()));
    v_.reserve(static_cast<std::size_t>(params.size()));
    for (long i = 0; i < params.size(); ++i) {
      m_.emplace_back(params.entry(i).value.shape());
      v_.emplace_back(params.entry(i).value.shape());
    }
  }

  long step_count() const { return step_; }
  const Options& options() const { return opts_; }

  void step() {
    for (long i = 0; i < params_.size(); ++i)
      if (!params_.entry(i).grad.all_finite())
        throw NumericError("optimizer: non-finite gradient in " + params_.entry(i).name);
    ++step_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    for (long i = 0; i < params_.size(); ++i) {
      auto& e = params_.entry(i);
      auto& m = m_[static_cast<std::size_t>(i)];
      auto& v = v_[static_cast<std::size_t>(i)];
      for (long j = 0; j < e.value.numel(); ++j) {
        const double g = e.grad[j];
        m[j] = opts_.beta1 * m[j] + (1.0 - opts_.beta1) * g;
        v[j] = opts_.beta2 * v[j] + (1.0 - opts_.beta2) * g * g;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        e.value[j] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
      }
    }
  }

 private:
  ad::ParameterStore& params_;
  Options opts_;
  std::vector<DenseArray> m_;
  std::vector<DenseArray> v_;
  long step_ = 0;
};

}  // namespace stf::train
