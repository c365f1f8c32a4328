#include <cmath>

#include "sct/simd/kernels.hpp"
#include "march_range.hpp"

namespace sct::simd {
namespace {

void axpy_scalar(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

float dot_scalar(const float* x, const float* y, std::size_t n) {
  // Eight interleaved partial sums, same association as the vector variant.
  float acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += x[i + l] * y[i + l];
  }
  for (int l = 0; i < n; ++i, ++l) acc[l] += x[i] * y[i];
  return ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
}

inline float sample_bilinear(const float* image, int width, float col, float row) {
  const float fc = std::floor(col);
  const float fr = std::floor(row);
  const int c0 = static_cast<int>(fc);
  const int r0 = static_cast<int>(fr);
  const float tc = col - fc;
  const float tr = row - fr;
  auto px = [&](int r, int c) -> float {
    if (r < 0 || c < 0 || r >= width || c >= width) return 0.0f;
    return image[static_cast<std::size_t>(r) * width + c];
  };
  const float top = px(r0, c0) + tc * (px(r0, c0 + 1) - px(r0, c0));
  const float bot = px(r0 + 1, c0) + tc * (px(r0 + 1, c0 + 1) - px(r0 + 1, c0));
  return top + tr * (bot - top);
}

}  // namespace

namespace detail {

void project_bins_scalar(const float* image, int width, const ViewMarch& v, int k_begin, int k_end, float* out) {
  for (int k = k_begin; k < k_end; ++k) {
    const float ck = v.col0 + static_cast<float>(k) * v.col_per_bin;
    const float rk = v.row0 + static_cast<float>(k) * v.row_per_bin;
    int lo = 0, hi = v.n_steps - 1;
    detail::clip_linear(ck, v.col_per_step, static_cast<float>(width), lo, hi);
    detail::clip_linear(rk, v.row_per_step, static_cast<float>(width), lo, hi);
    float acc = 0.0f;
    for (int m = lo; m <= hi; ++m) {
      const float fm = static_cast<float>(m);
      const float col = ck + fm * v.col_per_step;
      const float row = rk + fm * v.row_per_step;
      if (col <= -1.0f || row <= -1.0f || col >= static_cast<float>(width) || row >= static_cast<float>(width)) continue;
      acc += sample_bilinear(image, width, col, row);
    }
    out[k] = acc * v.step_mm;
  }
}

void backproject_cols_scalar(const float* q, int n_bins, const RowBackprojection& b, float* out, int c_begin,
                             int c_end) {
  for (int c = c_begin; c < c_end; ++c) {
    const float u = static_cast<float>(b.bin0 + c * b.bin_per_col);
    const float fu = std::floor(u);
    const int i0 = static_cast<int>(fu);
    const float t = u - fu;
    const float v0 = (i0 >= 0 && i0 < n_bins) ? q[i0] : 0.0f;
    const float v1 = (i0 + 1 >= 0 && i0 + 1 < n_bins) ? q[i0 + 1] : 0.0f;
    out[c] += b.weight * (v0 + t * (v1 - v0));
  }
}

}  // namespace detail

namespace {

void project_view_scalar(const float* image, int width, const ViewMarch& v, int n_bins, float* out) {
  detail::project_bins_scalar(image, width, v, 0, n_bins, out);
}

void backproject_row_scalar(const float* q, int n_bins, const RowBackprojection& b, float* out, int width) {
  detail::backproject_cols_scalar(q, n_bins, b, out, 0, width);
}

}  // namespace

namespace detail {
const KernelTable kScalarTable{Isa::Scalar, axpy_scalar, dot_scalar, project_view_scalar, backproject_row_scalar};
}

}  // namespace sct::simd
