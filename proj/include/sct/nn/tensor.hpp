#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sct::nn {

/// Dense (batch, channels, height, width) array, row-major with width fastest.
template <class T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
    if (n_ <= 0 || c_ <= 0 || h_ <= 0 || w_ <= 0) throw std::invalid_argument("tensor dimensions must be positive");
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
  T* plane(int in, int ic) { return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane_size(); }
  const T* plane(int in, int ic) const { return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane_size(); }
  T& at(int in, int ic, int y, int x) { return plane(in, ic)[static_cast<std::size_t>(y) * w + x]; }
  T at(int in, int ic, int y, int x) const { return plane(in, ic)[static_cast<std::size_t>(y) * w + x]; }

  bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_string() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

}  // namespace sct::nn
