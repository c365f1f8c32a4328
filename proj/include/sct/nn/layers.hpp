#pragma once

// Layer primitives with hand-written backward passes. Instantiated for float
// (training) and double (gradient checks). The float path runs its inner
// loops through the SIMD kernel table.

#include <span>
#include <vector>

#include "sct/nn/tensor.hpp"

namespace sct::nn {

enum class Mode { Train, Eval };

/// Same-size convolution, kernel 1 or 3 (zero padding 1 for 3x3).
/// weight layout [cout][cin][k][k].
template <class T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, int k);

/// Accumulates into dweight/dbias; writes dx when non-null.
template <class T>
void conv2d_backward(const Tensor4<T>& x, std::span<const T> weight, int cout, int k, const Tensor4<T>& dy,
                     std::span<T> dweight, std::span<T> dbias, Tensor4<T>* dx);

template <class T>
struct BatchNormCache {
  std::vector<T> xhat;
  std::vector<T> inv_std;
  int n = 0, c = 0, h = 0, w = 0;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Train mode normalizes with batch statistics and updates the running
/// mean/variance (unbiased) in place; eval mode uses the running values.
template <class T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                             std::span<T> running_mean, std::span<T> running_var, Mode mode, BatchNormCache<T>* cache);

template <class T>
Tensor4<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma, const Tensor4<T>& dy,
                              std::span<T> dgamma, std::span<T> dbeta);

template <class T>
Tensor4<T> relu_forward(const Tensor4<T>& x);
/// Gradient through ReLU given its output.
template <class T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy);

/// 2x2 max pooling, stride 2. argmax receives the flat source index per output element.
template <class T>
Tensor4<T> maxpool2_forward(const Tensor4<T>& x, std::vector<int>* argmax);
template <class T>
Tensor4<T> maxpool2_backward(const std::vector<int>& argmax, const Tensor4<T>& dy, int in_h, int in_w);

/// Nearest-neighbour 2x upsampling.
template <class T>
Tensor4<T> upsample2_forward(const Tensor4<T>& x);
template <class T>
Tensor4<T> upsample2_backward(const Tensor4<T>& dy);

template <class T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);
/// Splits a gradient over concat_channels back into its (a, b) parts.
template <class T>
void split_channels(const Tensor4<T>& d, int ca, Tensor4<T>& da, Tensor4<T>& db);

template <class T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b);
template <class T>
void add_inplace(Tensor4<T>& into, const Tensor4<T>& b);

}  // namespace sct::nn
