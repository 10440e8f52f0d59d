#include "mrb/adam.hpp"

#include <cmath>

namespace mrb {

Tensor adam_step(AdamState& state, const Tensor& params, const Tensor& grad) {
  if (!params.same_shape(grad)) {
    throw ShapeError("adam_step: params " + shape_str(params.shape()) +
                     " vs grad " + shape_str(grad.shape()));
  }
  if (!params.same_shape(state.m)) {
    throw ShapeError("adam_step: state moments shaped " + shape_str(state.m.shape()) +
                     " do not match params " + shape_str(params.shape()));
  }
  if (!(state.lr > 0.0)) throw NumericError("adam_step: learning rate must be > 0");

  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  state.m.array() = b1 * state.m.array() + (1.0 - b1) * grad.array();
  state.v.array() = b2 * state.v.array() + (1.0 - b2) * grad.array().square();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  Array m_hat = state.m.array() / c1;
  Array v_hat = state.v.array() / c2;
  Tensor out(params.shape(),
             params.array() - state.lr * m_hat / (v_hat.sqrt() + state.eps_hat));
  out.require_finite("adam_step");
  return out;
}

}  // namespace mrb
