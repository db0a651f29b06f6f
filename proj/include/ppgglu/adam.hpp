#ifndef PPGGLU_ADAM_HPP
#define PPGGLU_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "ppgglu/errors.hpp"
#include "ppgglu/tensor.hpp"

namespace ppgglu {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter Adam moments with bias correction.
struct AdamState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  std::uint64_t t = 0;
  AdamHyper hyper;

  explicit AdamState(std::size_t n = 0, AdamHyper h = {})
      : m(n, 0.0), v(n, 0.0), hyper(h) {}
};

// One Adam update on param from its accumulated gradient; clears the
// gradient afterwards.
inline void adam_step(Tensor& param, AdamState& state) {
  if (!param.requires_grad() || param.grad().size() != param.numel())
    throw MissingGradient("adam_step: parameter has no gradient buffer");
  if (state.m.size() != param.numel())
    throw ShapeMismatch("adam_step: state sized for " +
                        std::to_string(state.m.size()) + " values, parameter has " +
                        std::to_string(param.numel()));
  const AdamHyper& h = state.hyper;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = param.grad()[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    param.at(i) -= h.lr * mhat / (std::sqrt(vhat) + h.epsilon);
  }
  param.zero_grad();
}

}  // namespace ppgglu

#endif  // PPGGLU_ADAM_HPP
