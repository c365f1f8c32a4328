#include "sct/nn/unet.hpp"

#include <cmath>

#include "sct/error.hpp"
#include "sct/rng.hpp"

namespace sct::nn {

using nlohmann::json;

std::string to_string(Variant v) { return v == Variant::DualFrame ? "dual-frame" : "standard"; }
std::string to_string(BridgeCombine b) { return b == BridgeCombine::Add ? "add" : "concat"; }

Variant variant_from_string(const std::string& s) {
  if (s == "dual-frame") return Variant::DualFrame;
  if (s == "standard") return Variant::Standard;
  throw UsageError("unknown network variant '" + s + "' (expected dual-frame or standard)");
}

BridgeCombine bridge_from_string(const std::string& s) {
  if (s == "add") return BridgeCombine::Add;
  if (s == "concat") return BridgeCombine::Concat;
  throw UsageError("unknown bridge combine '" + s + "' (expected add or concat)");
}

void UNetConfig::validate() const {
  if (depth < 1 || depth > 12) throw UsageError("network depth must be in [1, 12]");
  if (base_channels < 1) throw UsageError("base_channels must be >= 1");
  if (input_size <= 0 || input_size % (1 << depth) != 0)
    throw UsageError("input_size " + std::to_string(input_size) + " is not divisible by 2^depth = " +
                     std::to_string(1 << depth));
}

json UNetConfig::to_json() const {
  return {{"depth", depth},
          {"base_channels", base_channels},
          {"variant", to_string(variant)},
          {"bridge_combine", to_string(bridge)},
          {"input_size", input_size}};
}

UNetConfig UNetConfig::from_json(const json& j) {
  UNetConfig c;
  c.depth = j.value("depth", c.depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
  if (j.contains("bridge_combine")) c.bridge = bridge_from_string(j["bridge_combine"].get<std::string>());
  c.input_size = j.value("input_size", c.input_size);
  return c;
}

UNetLayout UNetLayout::build(const UNetConfig& cfg) {
  cfg.validate();
  UNetLayout L;
  auto push = [&](std::string name, int cin, int cout, int k, bool bn) {
    ConvSpec s;
    s.name = std::move(name);
    s.cin = cin, s.cout = cout, s.k = k, s.bn = bn;
    s.weight = L.n_learnable;
    L.n_learnable += s.weight_count();
    s.bias = L.n_learnable;
    L.n_learnable += cout;
    if (bn) {
      s.gamma = L.n_learnable;
      s.beta = L.n_learnable + cout;
      L.n_learnable += 2 * static_cast<std::size_t>(cout);
      s.running_mean = L.n_buffers;
      s.running_var = L.n_buffers + cout;
      L.n_buffers += 2 * static_cast<std::size_t>(cout);
    }
    L.convs.push_back(std::move(s));
    return static_cast<int>(L.convs.size()) - 1;
  };
  const int D = cfg.depth;
  int cin = 1;
  for (int l = 0; l < D; ++l) {
    const int c = cfg.channels(l);
    L.enc.push_back(push("enc" + std::to_string(l) + ".conv0", cin, c, 3, true));
    push("enc" + std::to_string(l) + ".conv1", c, c, 3, true);
    cin = c;
  }
  L.bottleneck = push("bottleneck.conv0", cin, cfg.channels(D), 3, true);
  push("bottleneck.conv1", cfg.channels(D), cfg.channels(D), 3, true);
  L.bridge.assign(D, -1);
  L.dec.assign(D, -1);
  int zc = cfg.channels(D);
  for (int l = D - 1; l >= 0; --l) {
    const int c = cfg.channels(l);
    if (cfg.has_bridge()) {
      if (cfg.bridge == BridgeCombine::Add) {
        L.bridge[l] = push("dec" + std::to_string(l) + ".bridge", c, zc, 1, false);
      } else {
        zc += c;
      }
    }
    L.dec[l] = push("dec" + std::to_string(l) + ".conv0", zc + c, c, 3, true);
    push("dec" + std::to_string(l) + ".conv1", c, c, 3, true);
    zc = c;
  }
  L.final_conv = push("final", zc, 1, 1, false);
  return L;
}

std::size_t count_params(const UNetConfig& cfg) { return UNetLayout::build(cfg).n_learnable; }

template <class T>
void UNetParams<T>::validate() const {
  const UNetLayout expect = UNetLayout::build(cfg);
  if (learnable.size() != expect.n_learnable || buffers.size() != expect.n_buffers ||
      layout.convs.size() != expect.convs.size())
    throw DataError("network parameters do not match the configuration");
  for (T v : learnable)
    if (!std::isfinite(v)) throw NumericError("non-finite network parameter");
  for (std::size_t i = 0; i < layout.convs.size(); ++i) {
    if (!layout.convs[i].bn) continue;
    for (T v : running_var(static_cast<int>(i)))
      if (!(v >= 0) || !std::isfinite(v)) throw NumericError("batch-norm running variance must be finite and >= 0");
  }
}

template <class T>
UNetParams<T> init_unet(const UNetConfig& cfg, std::uint64_t seed) {
  UNetParams<T> p;
  p.cfg = cfg;
  p.layout = UNetLayout::build(cfg);
  p.learnable.assign(p.layout.n_learnable, T(0));
  p.buffers.assign(p.layout.n_buffers, T(0));
  Rng rng(seed);
  for (std::size_t i = 0; i < p.layout.convs.size(); ++i) {
    const ConvSpec& s = p.layout.convs[i];
    const double stdev = std::sqrt(2.0 / (static_cast<double>(s.cin) * s.k * s.k));
    for (T& w : p.weight(static_cast<int>(i))) w = static_cast<T>(stdev * rng.normal());
    if (s.bn) {
      for (T& g : p.gamma(static_cast<int>(i))) g = T(1);
      for (T& v : p.running_var(static_cast<int>(i))) v = T(1);
    }
  }
  return p;
}

template <class To, class From>
UNetParams<To> convert_params(const UNetParams<From>& p) {
  UNetParams<To> q;
  q.cfg = p.cfg;
  q.layout = p.layout;
  q.learnable.assign(p.learnable.begin(), p.learnable.end());
  q.buffers.assign(p.buffers.begin(), p.buffers.end());
  return q;
}

namespace {

template <class T>
struct Forward {
  const UNetParams<T>& p;
  std::vector<T>* buffers;  // mutable running stats; null in eval mode
  Mode mode;
  UNetCache<T>* cache;

  Tensor4<T> conv(int i, const Tensor4<T>& x) {
    const ConvSpec& s = p.layout.convs[i];
    Tensor4<T> y = conv2d_forward<T>(x, p.weight(i), p.bias(i), s.cout, s.k);
    for (T v : y.data)
      if (!std::isfinite(v)) throw NumericError("non-finite activation in layer " + s.name);
    ConvCache<T>* cc = cache ? &cache->convs[i] : nullptr;
    if (cc) cc->input = x;
    if (s.bn) {
      // Eval mode reads but never writes the running statistics.
      T* stats = buffers ? buffers->data() : const_cast<T*>(p.buffers.data());
      std::span<T> rm(stats + s.running_mean, s.cout), rv(stats + s.running_var, s.cout);
      y = batchnorm_forward<T>(y, p.gamma(i), p.beta(i), rm, rv, mode, cc ? &cc->bn : nullptr);
      y = relu_forward(y);
      if (cc) cc->output = y;
    }
    return y;
  }

  Tensor4<T> run(const Tensor4<T>& x) {
    const UNetConfig& cfg = p.cfg;
    const UNetLayout& L = p.layout;
    if (x.c != 1 || x.h != cfg.input_size || x.w != cfg.input_size)
      throw DataError("network input shape " + x.shape_string() + " does not match input_size " +
                      std::to_string(cfg.input_size));
    const int D = cfg.depth;
    if (cache) {
      cache->n_learnable = L.n_learnable;
      cache->n = x.n;
      cache->input_size = x.h;
      cache->convs.assign(L.convs.size(), {});
      cache->pool_argmax.assign(D, {});
      cache->enc_h.assign(D, 0);
      cache->z_channels.assign(D, 0);
    }
    std::vector<Tensor4<T>> skip(D), pooled(D);
    Tensor4<T> cur = x;
    for (int l = 0; l < D; ++l) {
      cur = conv(L.enc[l], cur);
      cur = conv(L.enc[l] + 1, cur);
      if (cache) cache->enc_h[l] = cur.h;
      skip[l] = cur;
      pooled[l] = maxpool2_forward(cur, cache ? &cache->pool_argmax[l] : nullptr);
      cur = pooled[l];
    }
    Tensor4<T> z = conv(L.bottleneck, cur);
    z = conv(L.bottleneck + 1, z);
    for (int l = D - 1; l >= 0; --l) {
      if (cfg.has_bridge()) {
        if (cfg.bridge == BridgeCombine::Add) {
          add_inplace(z, conv(L.bridge[l], pooled[l]));
        } else {
          z = concat_channels(z, pooled[l]);
        }
      }
      if (cache) cache->z_channels[l] = z.c;
      z = concat_channels(upsample2_forward(z), skip[l]);
      z = conv(L.dec[l], z);
      z = conv(L.dec[l] + 1, z);
    }
    return conv(L.final_conv, z);
  }
};

}  // namespace

template <class T>
Tensor4<T> unet_forward(UNetParams<T>& params, const Tensor4<T>& x, Mode mode, UNetCache<T>* cache) {
  Forward<T> f{params, mode == Mode::Train ? &params.buffers : nullptr, mode, cache};
  return f.run(x);
}

template <class T>
Tensor4<T> unet_predict(const UNetParams<T>& params, const Tensor4<T>& x) {
  Forward<T> f{params, nullptr, Mode::Eval, nullptr};
  return f.run(x);
}

template <class T>
std::vector<T> unet_backward(const UNetParams<T>& params, const UNetCache<T>& cache, const Tensor4<T>& dout) {
  const UNetConfig& cfg = params.cfg;
  const UNetLayout& L = params.layout;
  const int D = cfg.depth;
  if (cache.n_learnable != L.n_learnable || cache.convs.size() != L.convs.size() ||
      static_cast<int>(cache.pool_argmax.size()) != D)
    throw std::invalid_argument("network cache does not match parameters");
  if (dout.n != cache.n || dout.c != 1 || dout.h != cache.input_size || dout.w != cache.input_size)
    throw std::invalid_argument("upstream gradient shape does not match the cached forward pass");
  for (int i = 0; i < static_cast<int>(L.convs.size()); ++i)
    if (L.convs[i].bn && cache.convs[i].bn.xhat.empty())
      throw std::invalid_argument("network cache is not from a train-mode forward pass");

  std::vector<T> grads(L.n_learnable, T(0));
  auto back = [&](int i, const Tensor4<T>& dy, bool need_dx) {
    const ConvSpec& s = L.convs[i];
    const ConvCache<T>& cc = cache.convs[i];
    Tensor4<T> d;
    if (s.bn) {
      d = relu_backward(cc.output, dy);
      d = batchnorm_backward<T>(cc.bn, params.gamma(i), d, std::span<T>(grads.data() + s.gamma, s.cout),
                                std::span<T>(grads.data() + s.beta, s.cout));
    }
    Tensor4<T> dx;
    conv2d_backward<T>(cc.input, params.weight(i), s.cout, s.k, s.bn ? d : dy,
                       std::span<T>(grads.data() + s.weight, s.weight_count()),
                       std::span<T>(grads.data() + s.bias, s.cout), need_dx ? &dx : nullptr);
    return dx;
  };

  std::vector<Tensor4<T>> dskip(D), dpooled(D);
  Tensor4<T> dz = back(L.final_conv, dout, true);
  for (int l = 0; l < D; ++l) {
    dz = back(L.dec[l] + 1, dz, true);
    Tensor4<T> du = back(L.dec[l], dz, true);
    Tensor4<T> dup;
    split_channels(du, cache.z_channels[l], dup, dskip[l]);
    dz = upsample2_backward(dup);
    if (cfg.has_bridge()) {
      if (cfg.bridge == BridgeCombine::Add) {
        dpooled[l] = back(L.bridge[l], dz, true);
      } else {
        Tensor4<T> dzz;
        split_channels(dz, dz.c - cfg.channels(l), dzz, dpooled[l]);
        dz = std::move(dzz);
      }
    }
  }
  dz = back(L.bottleneck + 1, dz, true);
  Tensor4<T> dcur = back(L.bottleneck, dz, true);
  for (int l = D - 1; l >= 0; --l) {
    if (cfg.has_bridge()) add_inplace(dcur, dpooled[l]);
    Tensor4<T> de = maxpool2_backward(cache.pool_argmax[l], dcur, cache.enc_h[l], cache.enc_h[l]);
    add_inplace(de, dskip[l]);
    de = back(L.enc[l] + 1, de, true);
    if (l > 0) dcur = back(L.enc[l], de, true);
    else back(L.enc[l], de, false);
  }
  return grads;
}

template <class T>
LossResult<T> mse_loss(const Tensor4<T>& pred, const Tensor4<T>& label) {
  if (!pred.same_shape(label))
    throw std::invalid_argument("loss shape mismatch " + pred.shape_string() + " vs " + label.shape_string());
  LossResult<T> r;
  r.grad = Tensor4<T>(pred.n, pred.c, pred.h, pred.w);
  const double n = static_cast<double>(pred.size());
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - label.data[i];
    s += d * d;
    r.grad.data[i] = static_cast<T>(2.0 * d / n);
  }
  r.loss = s / n;
  return r;
}

#define SCT_INSTANTIATE_UNET(T)                                                                     \
  template struct UNetParams<T>;                                                                    \
  template UNetParams<T> init_unet<T>(const UNetConfig&, std::uint64_t);                            \
  template Tensor4<T> unet_forward(UNetParams<T>&, const Tensor4<T>&, Mode, UNetCache<T>*);         \
  template Tensor4<T> unet_predict(const UNetParams<T>&, const Tensor4<T>&);                        \
  template std::vector<T> unet_backward(const UNetParams<T>&, const UNetCache<T>&, const Tensor4<T>&); \
  template LossResult<T> mse_loss(const Tensor4<T>&, const Tensor4<T>&);

SCT_INSTANTIATE_UNET(float)
SCT_INSTANTIATE_UNET(double)
template UNetParams<double> convert_params<double, float>(const UNetParams<float>&);
template UNetParams<float> convert_params<float, double>(const UNetParams<double>&);

}  // namespace sct::nn
