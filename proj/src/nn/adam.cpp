#include "sct/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "sct/error.hpp"

namespace sct::nn {

template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter and gradient sizes differ");
  if (state.m.empty() && state.v.empty() && state.step == 0) {
    state.m.assign(params.size(), T(0));
    state.v.assign(params.size(), T(0));
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam: optimizer state does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i])) throw NumericError("adam: non-finite gradient at index " + std::to_string(i));

  ++state.step;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));
  const T rate = static_cast<T>(lr), eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    const T mhat = state.m[i] / c1;
    const T vhat = state.v[i] / c2;
    params[i] -= rate * mhat / (std::sqrt(vhat) + eps);
  }
}

template void adam_step(std::span<float>, std::span<const float>, AdamState<float>&, double, const AdamConfig&);
template void adam_step(std::span<double>, std::span<const double>, AdamState<double>&, double, const AdamConfig&);

}  // namespace sct::nn
