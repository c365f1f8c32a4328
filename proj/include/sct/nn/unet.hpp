#pragma once

// Residual-learning U-Net with optional dual-frame bridges.
//
// Level l (0-based) of the encoder runs two 3x3 conv + BN + ReLU blocks to
// base_channels * 2^l channels and then 2x2 max-pools. The bottleneck doubles
// channels once more. Decoder level l receives z from the level below; in the
// dual-frame variant the pooled encoder output of level l is merged into z
// (1x1 projection + add, or channel concat), then z is upsampled, concatenated
// with the pre-pool encoder output and passed through two conv blocks. A final
// 1x1 conv maps to one channel.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sct/nn/layers.hpp"
#include "sct/nn/tensor.hpp"

namespace sct::nn {

enum class Variant { DualFrame, Standard };
enum class BridgeCombine { Add, Concat };

std::string to_string(Variant v);
std::string to_string(BridgeCombine b);
Variant variant_from_string(const std::string& s);
BridgeCombine bridge_from_string(const std::string& s);

struct UNetConfig {
  int depth = 4;
  int base_channels = 8;
  Variant variant = Variant::DualFrame;
  BridgeCombine bridge = BridgeCombine::Add;
  int input_size = 128;

  int channels(int level) const { return base_channels << level; }
  bool has_bridge() const { return variant == Variant::DualFrame; }
  /// Throws UsageError.
  void validate() const;

  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
  bool operator==(const UNetConfig&) const = default;
};

struct ConvSpec {
  std::string name;
  int cin = 0, cout = 0, k = 3;
  bool bn = true;
  // Offsets into the learnable vector.
  std::size_t weight = 0, bias = 0, gamma = 0, beta = 0;
  // Offsets into the buffer vector (running mean / variance).
  std::size_t running_mean = 0, running_var = 0;

  std::size_t weight_count() const { return static_cast<std::size_t>(cin) * cout * k * k; }
};

/// Order of conv layers and where their tensors live in the flat parameter
/// vectors. Layer order: encoder levels (2 convs each), bottleneck (2),
/// then per decoder level from deepest to shallowest: bridge (if any) and
/// 2 convs, then the final 1x1 conv.
struct UNetLayout {
  std::vector<ConvSpec> convs;
  std::vector<int> enc;         // first conv index of encoder level l (second is +1)
  int bottleneck = 0;
  std::vector<int> bridge;      // per level, -1 when absent
  std::vector<int> dec;         // first conv index of decoder level l
  int final_conv = 0;
  std::size_t n_learnable = 0;
  std::size_t n_buffers = 0;

  static UNetLayout build(const UNetConfig& cfg);
};

/// Learnable scalars: conv kernels, biases and BN scale/shift.
std::size_t count_params(const UNetConfig& cfg);

template <class T>
struct UNetParams {
  UNetConfig cfg;
  UNetLayout layout;
  std::vector<T> learnable;
  std::vector<T> buffers;

  std::span<T> weight(int i) { return {learnable.data() + layout.convs[i].weight, layout.convs[i].weight_count()}; }
  std::span<const T> weight(int i) const { return {learnable.data() + layout.convs[i].weight, layout.convs[i].weight_count()}; }
  std::span<T> bias(int i) { return {learnable.data() + layout.convs[i].bias, cout(i)}; }
  std::span<const T> bias(int i) const { return {learnable.data() + layout.convs[i].bias, cout(i)}; }
  std::span<T> gamma(int i) { return {learnable.data() + layout.convs[i].gamma, cout(i)}; }
  std::span<const T> gamma(int i) const { return {learnable.data() + layout.convs[i].gamma, cout(i)}; }
  std::span<T> beta(int i) { return {learnable.data() + layout.convs[i].beta, cout(i)}; }
  std::span<const T> beta(int i) const { return {learnable.data() + layout.convs[i].beta, cout(i)}; }
  std::span<T> running_mean(int i) { return {buffers.data() + layout.convs[i].running_mean, cout(i)}; }
  std::span<const T> running_mean(int i) const { return {buffers.data() + layout.convs[i].running_mean, cout(i)}; }
  std::span<T> running_var(int i) { return {buffers.data() + layout.convs[i].running_var, cout(i)}; }
  std::span<const T> running_var(int i) const { return {buffers.data() + layout.convs[i].running_var, cout(i)}; }

  /// Shapes consistent with the config, finite values, BN variance >= 0.
  void validate() const;

 private:
  std::size_t cout(int i) const { return static_cast<std::size_t>(layout.convs[i].cout); }
};

template <class T>
UNetParams<T> init_unet(const UNetConfig& cfg, std::uint64_t seed);

template <class To, class From>
UNetParams<To> convert_params(const UNetParams<From>& p);

template <class T>
struct ConvCache {
  Tensor4<T> input;
  BatchNormCache<T> bn;
  Tensor4<T> output;  // after ReLU for BN layers
};

template <class T>
struct UNetCache {
  std::size_t n_learnable = 0;
  int n = 0, input_size = 0;
  std::vector<ConvCache<T>> convs;
  std::vector<std::vector<int>> pool_argmax;
  std::vector<int> enc_h;       // spatial size at encoder level l
  std::vector<int> z_channels;  // channels of z entering decoder level l
};

/// Train mode updates BN running stats in params and fills the cache.
template <class T>
Tensor4<T> unet_forward(UNetParams<T>& params, const Tensor4<T>& x, Mode mode, UNetCache<T>* cache = nullptr);

/// Eval-mode forward on const params.
template <class T>
Tensor4<T> unet_predict(const UNetParams<T>& params, const Tensor4<T>& x);

/// Gradients in the same flat layout as params.learnable.
template <class T>
std::vector<T> unet_backward(const UNetParams<T>& params, const UNetCache<T>& cache, const Tensor4<T>& dout);

template <class T>
struct LossResult {
  double loss = 0;
  Tensor4<T> grad;
};

/// Mean squared error over all elements and its gradient 2(pred-label)/N.
template <class T>
LossResult<T> mse_loss(const Tensor4<T>& pred, const Tensor4<T>& label);

}  // namespace sct::nn
