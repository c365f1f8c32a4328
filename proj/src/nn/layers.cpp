#include "sct/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <type_traits>

#include "sct/simd/kernels.hpp"

namespace sct::nn {

namespace {

template <class T>
void axpy(T a, const T* x, T* y, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    simd::kernels().axpy(a, x, y, n);
  } else {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
  }
}

template <class T>
T dot(const T* x, const T* y, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    return simd::kernels().dot(x, y, n);
  } else {
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
  }
}

// Copies each (h, w) plane into a zero-ringed (h+2, w+2) plane.
template <class T>
std::vector<T> pad_planes(const T* src, int planes, int h, int w) {
  const int wp = w + 2;
  const std::size_t lp = static_cast<std::size_t>(h + 2) * wp;
  std::vector<T> out(lp * planes, T(0));
  for (int p = 0; p < planes; ++p) {
    const T* s = src + static_cast<std::size_t>(p) * h * w;
    T* d = out.data() + lp * p;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) d[static_cast<std::size_t>(y + 1) * wp + x + 1] = s[static_cast<std::size_t>(y) * w + x];
  }
  return out;
}

void check_conv_args(int cin, int cout, int k, std::size_t wsize, std::size_t bsize) {
  if (k != 1 && k != 3) throw std::invalid_argument("conv kernel size must be 1 or 3");
  if (cout <= 0) throw std::invalid_argument("conv output channels must be positive");
  if (wsize != static_cast<std::size_t>(cout) * cin * k * k) throw std::invalid_argument("conv weight size mismatch");
  if (bsize != static_cast<std::size_t>(cout)) throw std::invalid_argument("conv bias size mismatch");
}

}  // namespace

template <class T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, int k) {
  check_conv_args(x.c, cout, k, weight.size(), bias.size());
  Tensor4<T> y(x.n, cout, x.h, x.w);
  const std::size_t hw = x.plane_size();
  if (k == 1) {
    for (int n = 0; n < x.n; ++n)
      for (int co = 0; co < cout; ++co) {
        T* out = y.plane(n, co);
        for (std::size_t i = 0; i < hw; ++i) out[i] = bias[co];
        for (int ci = 0; ci < x.c; ++ci) axpy(weight[static_cast<std::size_t>(co) * x.c + ci], x.plane(n, ci), out, hw);
      }
    return y;
  }
  const int wp = x.w + 2;
  const std::size_t lp = static_cast<std::size_t>(x.h + 2) * wp;
  const std::size_t q0 = wp + 1;
  const std::size_t len = static_cast<std::size_t>(x.h) * wp - 2;
  std::vector<T> acc(len);
  for (int n = 0; n < x.n; ++n) {
    const std::vector<T> padded = pad_planes(x.plane(n, 0), x.c, x.h, x.w);
    for (int co = 0; co < cout; ++co) {
      std::fill(acc.begin(), acc.end(), T(0));
      for (int ci = 0; ci < x.c; ++ci) {
        const T* src = padded.data() + lp * ci + q0;
        const T* wk = weight.data() + (static_cast<std::size_t>(co) * x.c + ci) * 9;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) axpy(wk[(dy + 1) * 3 + dx + 1], src + dy * wp + dx, acc.data(), len);
      }
      T* out = y.plane(n, co);
      for (int r = 0; r < x.h; ++r)
        for (int c = 0; c < x.w; ++c) out[static_cast<std::size_t>(r) * x.w + c] = acc[static_cast<std::size_t>(r) * wp + c] + bias[co];
    }
  }
  return y;
}

template <class T>
void conv2d_backward(const Tensor4<T>& x, std::span<const T> weight, int cout, int k, const Tensor4<T>& dy,
                     std::span<T> dweight, std::span<T> dbias, Tensor4<T>* dx) {
  check_conv_args(x.c, cout, k, weight.size(), dbias.size());
  if (dweight.size() != weight.size()) throw std::invalid_argument("conv weight gradient size mismatch");
  if (dy.n != x.n || dy.c != cout || dy.h != x.h || dy.w != x.w) throw std::invalid_argument("conv upstream gradient shape mismatch");
  if (dx) *dx = Tensor4<T>(x.n, x.c, x.h, x.w);
  const std::size_t hw = x.plane_size();
  for (int n = 0; n < x.n; ++n)
    for (int co = 0; co < cout; ++co) {
      const T* g = dy.plane(n, co);
      T s = 0;
      for (std::size_t i = 0; i < hw; ++i) s += g[i];
      dbias[co] += s;
    }
  if (k == 1) {
    for (int n = 0; n < x.n; ++n)
      for (int co = 0; co < cout; ++co) {
        const T* g = dy.plane(n, co);
        for (int ci = 0; ci < x.c; ++ci) {
          const std::size_t wi = static_cast<std::size_t>(co) * x.c + ci;
          dweight[wi] += dot(g, x.plane(n, ci), hw);
          if (dx) axpy(weight[wi], g, dx->plane(n, ci), hw);
        }
      }
    return;
  }
  const int wp = x.w + 2;
  const std::size_t lp = static_cast<std::size_t>(x.h + 2) * wp;
  const std::size_t q0 = wp + 1;
  const std::size_t len = static_cast<std::size_t>(x.h) * wp - 2;
  for (int n = 0; n < x.n; ++n) {
    const std::vector<T> padded = pad_planes(x.plane(n, 0), x.c, x.h, x.w);
    const std::vector<T> gpad = pad_planes(dy.plane(n, 0), cout, x.h, x.w);
    std::vector<T> dpad;
    if (dx) dpad.assign(lp * x.c, T(0));
    for (int co = 0; co < cout; ++co) {
      const T* g = gpad.data() + lp * co + q0;
      for (int ci = 0; ci < x.c; ++ci) {
        const T* src = padded.data() + lp * ci + q0;
        const std::size_t wbase = (static_cast<std::size_t>(co) * x.c + ci) * 9;
        for (int ky = -1; ky <= 1; ++ky)
          for (int kx = -1; kx <= 1; ++kx) {
            const std::size_t wi = wbase + (ky + 1) * 3 + kx + 1;
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(ky) * wp + kx;
            dweight[wi] += dot(g, src + off, len);
            if (dx) axpy(weight[wi], g, dpad.data() + lp * ci + q0 + off, len);
          }
      }
    }
    if (dx)
      for (int ci = 0; ci < x.c; ++ci) {
        const T* s = dpad.data() + lp * ci;
        T* d = dx->plane(n, ci);
        for (int r = 0; r < x.h; ++r)
          for (int c = 0; c < x.w; ++c) d[static_cast<std::size_t>(r) * x.w + c] = s[static_cast<std::size_t>(r + 1) * wp + c + 1];
      }
  }
}

template <class T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                             std::span<T> running_mean, std::span<T> running_var, Mode mode, BatchNormCache<T>* cache) {
  const auto c = static_cast<std::size_t>(x.c);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c)
    throw std::invalid_argument("batchnorm parameter size mismatch");
  Tensor4<T> y(x.n, x.c, x.h, x.w);
  const std::size_t hw = x.plane_size();
  if (mode == Mode::Eval) {
    for (int ch = 0; ch < x.c; ++ch) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + kBatchNormEps);
      const T scale = static_cast<T>(gamma[ch] * inv);
      const T shift = static_cast<T>(beta[ch] - gamma[ch] * running_mean[ch] * inv);
      for (int n = 0; n < x.n; ++n) {
        const T* s = x.plane(n, ch);
        T* d = y.plane(n, ch);
        for (std::size_t i = 0; i < hw; ++i) d[i] = s[i] * scale + shift;
      }
    }
    return y;
  }
  const double m = static_cast<double>(x.n) * hw;
  if (m < 2) throw std::invalid_argument("batchnorm training needs at least two values per channel");
  if (cache) {
    cache->xhat.assign(x.size(), T(0));
    cache->inv_std.assign(c, T(0));
    cache->n = x.n, cache->c = x.c, cache->h = x.h, cache->w = x.w;
  }
  for (int ch = 0; ch < x.c; ++ch) {
    double sum = 0;
    for (int n = 0; n < x.n; ++n) {
      const T* s = x.plane(n, ch);
      for (std::size_t i = 0; i < hw; ++i) sum += s[i];
    }
    const double mean = sum / m;
    double ss = 0;
    for (int n = 0; n < x.n; ++n) {
      const T* s = x.plane(n, ch);
      for (std::size_t i = 0; i < hw; ++i) ss += (s[i] - mean) * (s[i] - mean);
    }
    const double var = ss / m;
    const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
    for (int n = 0; n < x.n; ++n) {
      const T* s = x.plane(n, ch);
      T* d = y.plane(n, ch);
      T* xh = cache ? cache->xhat.data() + (static_cast<std::size_t>(n) * x.c + ch) * hw : nullptr;
      for (std::size_t i = 0; i < hw; ++i) {
        const T v = static_cast<T>((s[i] - mean) * inv);
        if (xh) xh[i] = v;
        d[i] = gamma[ch] * v + beta[ch];
      }
    }
    if (cache) cache->inv_std[ch] = static_cast<T>(inv);
    running_mean[ch] = static_cast<T>((1 - kBatchNormMomentum) * running_mean[ch] + kBatchNormMomentum * mean);
    running_var[ch] = static_cast<T>((1 - kBatchNormMomentum) * running_var[ch] + kBatchNormMomentum * var * m / (m - 1));
  }
  return y;
}

template <class T>
Tensor4<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma, const Tensor4<T>& dy,
                              std::span<T> dgamma, std::span<T> dbeta) {
  if (dy.n != cache.n || dy.c != cache.c || dy.h != cache.h || dy.w != cache.w || cache.xhat.size() != dy.size())
    throw std::invalid_argument("batchnorm cache does not match upstream gradient");
  Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
  const std::size_t hw = dy.plane_size();
  const double m = static_cast<double>(dy.n) * hw;
  for (int ch = 0; ch < dy.c; ++ch) {
    double sdy = 0, sdyx = 0;
    for (int n = 0; n < dy.n; ++n) {
      const T* g = dy.plane(n, ch);
      const T* xh = cache.xhat.data() + (static_cast<std::size_t>(n) * dy.c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sdy += g[i];
        sdyx += static_cast<double>(g[i]) * xh[i];
      }
    }
    dgamma[ch] += static_cast<T>(sdyx);
    dbeta[ch] += static_cast<T>(sdy);
    const double k = gamma[ch] * static_cast<double>(cache.inv_std[ch]) / m;
    for (int n = 0; n < dy.n; ++n) {
      const T* g = dy.plane(n, ch);
      const T* xh = cache.xhat.data() + (static_cast<std::size_t>(n) * dy.c + ch) * hw;
      T* d = dx.plane(n, ch);
      for (std::size_t i = 0; i < hw; ++i) d[i] = static_cast<T>(k * (m * g[i] - sdy - xh[i] * sdyx));
    }
  }
  return dx;
}

template <class T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
  Tensor4<T> y = x;
  for (auto& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

template <class T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy) {
  if (!y.same_shape(dy)) throw std::invalid_argument("relu gradient shape mismatch");
  Tensor4<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(y.data[i] > T(0))) dx.data[i] = T(0);
  return dx;
}

template <class T>
Tensor4<T> maxpool2_forward(const Tensor4<T>& x, std::vector<int>* argmax) {
  if (x.h % 2 || x.w % 2) throw std::invalid_argument("maxpool input must have even height and width, got " + x.shape_string());
  Tensor4<T> y(x.n, x.c, x.h / 2, x.w / 2);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < x.n; ++n)
    for (int ch = 0; ch < x.c; ++ch) {
      const T* s = x.plane(n, ch);
      const int base = static_cast<int>((static_cast<std::size_t>(n) * x.c + ch) * x.plane_size());
      for (int r = 0; r < y.h; ++r)
        for (int c = 0; c < y.w; ++c, ++o) {
          int best = (2 * r) * x.w + 2 * c;
          T bv = s[best];
          for (int k = 1; k < 4; ++k) {
            const int idx = (2 * r + k / 2) * x.w + 2 * c + k % 2;
            if (s[idx] > bv) bv = s[idx], best = idx;
          }
          y.data[o] = bv;
          if (argmax) (*argmax)[o] = base + best;
        }
    }
  return y;
}

template <class T>
Tensor4<T> maxpool2_backward(const std::vector<int>& argmax, const Tensor4<T>& dy, int in_h, int in_w) {
  if (argmax.size() != dy.size() || in_h != 2 * dy.h || in_w != 2 * dy.w)
    throw std::invalid_argument("maxpool backward shape mismatch");
  Tensor4<T> dx(dy.n, dy.c, in_h, in_w);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data[argmax[i]] += dy.data[i];
  return dx;
}

template <class T>
Tensor4<T> upsample2_forward(const Tensor4<T>& x) {
  Tensor4<T> y(x.n, x.c, x.h * 2, x.w * 2);
  for (int n = 0; n < x.n; ++n)
    for (int ch = 0; ch < x.c; ++ch) {
      const T* s = x.plane(n, ch);
      T* d = y.plane(n, ch);
      for (int r = 0; r < y.h; ++r)
        for (int c = 0; c < y.w; ++c) d[static_cast<std::size_t>(r) * y.w + c] = s[static_cast<std::size_t>(r / 2) * x.w + c / 2];
    }
  return y;
}

template <class T>
Tensor4<T> upsample2_backward(const Tensor4<T>& dy) {
  if (dy.h % 2 || dy.w % 2) throw std::invalid_argument("upsample gradient must have even height and width");
  Tensor4<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
  for (int n = 0; n < dy.n; ++n)
    for (int ch = 0; ch < dy.c; ++ch) {
      const T* s = dy.plane(n, ch);
      T* d = dx.plane(n, ch);
      for (int r = 0; r < dy.h; ++r)
        for (int c = 0; c < dy.w; ++c) d[static_cast<std::size_t>(r / 2) * dx.w + c / 2] += s[static_cast<std::size_t>(r) * dy.w + c];
    }
  return dx;
}

template <class T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("concat shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  Tensor4<T> y(a.n, a.c + b.c, a.h, a.w);
  const std::size_t hw = a.plane_size();
  for (int n = 0; n < a.n; ++n) {
    std::copy_n(a.plane(n, 0), hw * a.c, y.plane(n, 0));
    std::copy_n(b.plane(n, 0), hw * b.c, y.plane(n, a.c));
  }
  return y;
}

template <class T>
void split_channels(const Tensor4<T>& d, int ca, Tensor4<T>& da, Tensor4<T>& db) {
  if (ca <= 0 || ca >= d.c) throw std::invalid_argument("split point out of range");
  da = Tensor4<T>(d.n, ca, d.h, d.w);
  db = Tensor4<T>(d.n, d.c - ca, d.h, d.w);
  const std::size_t hw = d.plane_size();
  for (int n = 0; n < d.n; ++n) {
    std::copy_n(d.plane(n, 0), hw * ca, da.plane(n, 0));
    std::copy_n(d.plane(n, ca), hw * (d.c - ca), db.plane(n, 0));
  }
}

template <class T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  Tensor4<T> y = a;
  add_inplace(y, b);
  return y;
}

template <class T>
void add_inplace(Tensor4<T>& into, const Tensor4<T>& b) {
  if (!into.same_shape(b)) throw std::invalid_argument("add shape mismatch " + into.shape_string() + " vs " + b.shape_string());
  for (std::size_t i = 0; i < b.size(); ++i) into.data[i] += b.data[i];
}

#define SCT_INSTANTIATE_LAYERS(T)                                                                                   \
  template Tensor4<T> conv2d_forward(const Tensor4<T>&, std::span<const T>, std::span<const T>, int, int);          \
  template void conv2d_backward(const Tensor4<T>&, std::span<const T>, int, int, const Tensor4<T>&, std::span<T>,  \
                                std::span<T>, Tensor4<T>*);                                                         \
  template Tensor4<T> batchnorm_forward(const Tensor4<T>&, std::span<const T>, std::span<const T>, std::span<T>,    \
                                        std::span<T>, Mode, BatchNormCache<T>*);                                    \
  template Tensor4<T> batchnorm_backward(const BatchNormCache<T>&, std::span<const T>, const Tensor4<T>&,          \
                                         std::span<T>, std::span<T>);                                               \
  template Tensor4<T> relu_forward(const Tensor4<T>&);                                                              \
  template Tensor4<T> relu_backward(const Tensor4<T>&, const Tensor4<T>&);                                          \
  template Tensor4<T> maxpool2_forward(const Tensor4<T>&, std::vector<int>*);                                       \
  template Tensor4<T> maxpool2_backward(const std::vector<int>&, const Tensor4<T>&, int, int);                      \
  template Tensor4<T> upsample2_forward(const Tensor4<T>&);                                                         \
  template Tensor4<T> upsample2_backward(const Tensor4<T>&);                                                        \
  template Tensor4<T> concat_channels(const Tensor4<T>&, const Tensor4<T>&);                                        \
  template void split_channels(const Tensor4<T>&, int, Tensor4<T>&, Tensor4<T>&);                                   \
  template Tensor4<T> add(const Tensor4<T>&, const Tensor4<T>&);                                                    \
  template void add_inplace(Tensor4<T>&, const Tensor4<T>&);

SCT_INSTANTIATE_LAYERS(float)
SCT_INSTANTIATE_LAYERS(double)

}  // namespace sct::nn
