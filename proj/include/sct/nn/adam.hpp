#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sct::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<T> m, v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update in place. The state is sized on first use.
/// Throws NumericError on a non-finite gradient (params left untouched).
template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr, const AdamConfig& cfg = {});

}  // namespace sct::nn
