#pragma once

#include <algorithm>
#include <cmath>

#include "sct/simd/kernels.hpp"

namespace sct::simd::detail {

/// Step indices [lo, hi] (inclusive, possibly empty when lo > hi) for which
/// a + m * b may lie strictly inside (-1, limit). Conservative by one step.
inline void clip_linear(float a, float b, float limit, int& lo, int& hi) {
  if (b == 0.0f) {
    if (!(a > -1.0f && a < limit)) hi = lo - 1;
    return;
  }
  double t0 = (-1.0 - a) / b;
  double t1 = (limit - a) / b;
  if (t0 > t1) std::swap(t0, t1);
  t0 = std::clamp(t0, -1e9, 1e9);
  t1 = std::clamp(t1, -1e9, 1e9);
  lo = std::max(lo, static_cast<int>(std::floor(t0)) - 1);
  hi = std::min(hi, static_cast<int>(std::ceil(t1)) + 1);
}

// Scalar reference loops over a sub-range, shared with the vector tails so
// both variants round identically.
void project_bins_scalar(const float* image, int width, const ViewMarch& v, int k_begin, int k_end, float* out);
void backproject_cols_scalar(const float* q, int n_bins, const RowBackprojection& b, float* out, int c_begin,
                             int c_end);

}  // namespace sct::simd::detail
