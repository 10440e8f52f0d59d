#pragma once

#include "mrb/tensor.hpp"

namespace mrb {

// Bias-corrected Adam. Single-owner, single-threaded.
struct AdamState {
  AdamState() = default;
  AdamState(std::vector<int> param_shape, double lr_ = 1e-3, double beta1_ = 0.9,
            double beta2_ = 0.999, double eps_hat_ = 1e-8)
      : m(param_shape), v(std::move(param_shape)), lr(lr_), beta1(beta1_),
        beta2(beta2_), eps_hat(eps_hat_) {}

  long step = 0;
  Tensor m;  // first-moment estimate
  Tensor v;  // second-moment estimate
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;  // numerical floor under the root
};

// Returns updated parameters; advances the state's moments and step count.
Tensor adam_step(AdamState& state, const Tensor& params, const Tensor& grad);

}  // namespace mrb
