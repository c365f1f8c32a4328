// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "march_range.hpp"
#include "sct/simd/kernels.hpp"

namespace sct::simd {
namespace {

void axpy_avx2(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m256 y0 = _mm256_loadu_ps(y + i);
    __m256 y1 = _mm256_loadu_ps(y + i + 8);
    y0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), y0);
    y1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i + 8), y1);
    _mm256_storeu_ps(y + i, y0);
    _mm256_storeu_ps(y + i + 8, y1);
  }
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, acc);
  for (int l = 0; i < n; ++i, ++l) lanes[l] = std::fma(x[i], y[i], lanes[l]);
  return ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6])) + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]));
}

// Masked gather of image[r * width + c] for in-grid lanes, zero elsewhere.
inline __m256 gather_px(const float* image, __m256i r, __m256i c, __m256i w) {
  const __m256i neg1 = _mm256_set1_epi32(-1);
  const __m256i ok = _mm256_and_si256(_mm256_and_si256(_mm256_cmpgt_epi32(r, neg1), _mm256_cmpgt_epi32(c, neg1)),
                                      _mm256_and_si256(_mm256_cmpgt_epi32(w, r), _mm256_cmpgt_epi32(w, c)));
  const __m256i idx = _mm256_add_epi32(_mm256_mullo_epi32(r, w), c);
  return _mm256_mask_i32gather_ps(_mm256_setzero_ps(), image, _mm256_and_si256(idx, ok), _mm256_castsi256_ps(ok), 4);
}

void project_view_avx2(const float* image, int width, const ViewMarch& v, int n_bins, float* out) {
  const __m256i w = _mm256_set1_epi32(width);
  const __m256i one_i = _mm256_set1_epi32(1);
  const __m256 fw = _mm256_set1_ps(static_cast<float>(width));
  const __m256 neg1 = _mm256_set1_ps(-1.0f);
  const __m256 cstep = _mm256_set1_ps(v.col_per_step);
  const __m256 rstep = _mm256_set1_ps(v.row_per_step);
  const __m256 lane = _mm256_setr_ps(0, 1, 2, 3, 4, 5, 6, 7);

  int k = 0;
  for (; k + 8 <= n_bins; k += 8) {
    const __m256 fk = _mm256_add_ps(_mm256_set1_ps(static_cast<float>(k)), lane);
    const __m256 ck = _mm256_add_ps(_mm256_set1_ps(v.col0), _mm256_mul_ps(fk, _mm256_set1_ps(v.col_per_bin)));
    const __m256 rk = _mm256_add_ps(_mm256_set1_ps(v.row0), _mm256_mul_ps(fk, _mm256_set1_ps(v.row_per_bin)));
    alignas(32) float cks[8], rks[8];
    _mm256_store_ps(cks, ck);
    _mm256_store_ps(rks, rk);
    int lo = v.n_steps, hi = -1;
    for (int l = 0; l < 8; ++l) {
      int llo = 0, lhi = v.n_steps - 1;
      detail::clip_linear(cks[l], v.col_per_step, static_cast<float>(width), llo, lhi);
      detail::clip_linear(rks[l], v.row_per_step, static_cast<float>(width), llo, lhi);
      if (llo <= lhi) {
        lo = std::min(lo, llo);
        hi = std::max(hi, lhi);
      }
    }
    __m256 acc = _mm256_setzero_ps();
    for (int m = lo; m <= hi; ++m) {
      const __m256 fm = _mm256_set1_ps(static_cast<float>(m));
      const __m256 col = _mm256_add_ps(ck, _mm256_mul_ps(fm, cstep));
      const __m256 row = _mm256_add_ps(rk, _mm256_mul_ps(fm, rstep));
      const __m256 inside = _mm256_and_ps(
          _mm256_and_ps(_mm256_cmp_ps(col, neg1, _CMP_GT_OQ), _mm256_cmp_ps(row, neg1, _CMP_GT_OQ)),
          _mm256_and_ps(_mm256_cmp_ps(col, fw, _CMP_LT_OQ), _mm256_cmp_ps(row, fw, _CMP_LT_OQ)));
      if (_mm256_movemask_ps(inside) == 0) continue;
      const __m256 fc = _mm256_floor_ps(col);
      const __m256 fr = _mm256_floor_ps(row);
      const __m256 tc = _mm256_sub_ps(col, fc);
      const __m256 tr = _mm256_sub_ps(row, fr);
      // Outside lanes are clamped before conversion; their result is masked to zero below.
      const __m256i c0 = _mm256_cvttps_epi32(_mm256_blendv_ps(neg1, fc, inside));
      const __m256i r0 = _mm256_cvttps_epi32(_mm256_blendv_ps(neg1, fr, inside));
      const __m256i c1 = _mm256_add_epi32(c0, one_i);
      const __m256i r1 = _mm256_add_epi32(r0, one_i);
      const __m256 p00 = gather_px(image, r0, c0, w);
      const __m256 p01 = gather_px(image, r0, c1, w);
      const __m256 p10 = gather_px(image, r1, c0, w);
      const __m256 p11 = gather_px(image, r1, c1, w);
      const __m256 top = _mm256_add_ps(p00, _mm256_mul_ps(tc, _mm256_sub_ps(p01, p00)));
      const __m256 bot = _mm256_add_ps(p10, _mm256_mul_ps(tc, _mm256_sub_ps(p11, p10)));
      const __m256 val = _mm256_add_ps(top, _mm256_mul_ps(tr, _mm256_sub_ps(bot, top)));
      acc = _mm256_add_ps(acc, _mm256_and_ps(val, inside));
    }
    _mm256_storeu_ps(out + k, _mm256_mul_ps(acc, _mm256_set1_ps(v.step_mm)));
  }
  detail::project_bins_scalar(image, width, v, k, n_bins, out);
}

void backproject_row_avx2(const float* q, int n_bins, const RowBackprojection& b, float* out, int width) {
  const __m256i nb = _mm256_set1_epi32(n_bins);
  const __m256i neg1 = _mm256_set1_epi32(-1);
  const __m256i one = _mm256_set1_epi32(1);
  const __m256 weight = _mm256_set1_ps(b.weight);
  const __m256d lane_lo = _mm256_setr_pd(0, 1, 2, 3);
  const __m256d lane_hi = _mm256_setr_pd(4, 5, 6, 7);
  const __m256d bin0 = _mm256_set1_pd(b.bin0);
  const __m256d step = _mm256_set1_pd(b.bin_per_col);

  auto gather = [&](__m256i i) {
    const __m256i ok = _mm256_and_si256(_mm256_cmpgt_epi32(i, neg1), _mm256_cmpgt_epi32(nb, i));
    return _mm256_mask_i32gather_ps(_mm256_setzero_ps(), q, _mm256_and_si256(i, ok), _mm256_castsi256_ps(ok), 4);
  };

  int c = 0;
  for (; c + 8 <= width; c += 8) {
    const __m256d base = _mm256_set1_pd(static_cast<double>(c));
    const __m128 ulo = _mm256_cvtpd_ps(_mm256_add_pd(bin0, _mm256_mul_pd(_mm256_add_pd(base, lane_lo), step)));
    const __m128 uhi = _mm256_cvtpd_ps(_mm256_add_pd(bin0, _mm256_mul_pd(_mm256_add_pd(base, lane_hi), step)));
    const __m256 u = _mm256_set_m128(uhi, ulo);
    const __m256 fu = _mm256_floor_ps(u);
    const __m256 t = _mm256_sub_ps(u, fu);
    // Clamp far-out lanes so the integer conversion cannot overflow; they gather zero.
    const __m256 fu_c = _mm256_min_ps(_mm256_max_ps(fu, _mm256_set1_ps(-2.0f)), _mm256_set1_ps(static_cast<float>(n_bins + 1)));
    const __m256i i0 = _mm256_cvttps_epi32(fu_c);
    const __m256 v0 = gather(i0);
    const __m256 v1 = gather(_mm256_add_epi32(i0, one));
    const __m256 val = _mm256_add_ps(v0, _mm256_mul_ps(t, _mm256_sub_ps(v1, v0)));
    _mm256_storeu_ps(out + c, _mm256_add_ps(_mm256_loadu_ps(out + c), _mm256_mul_ps(weight, val)));
  }
  detail::backproject_cols_scalar(q, n_bins, b, out, c, width);
}

}  // namespace

namespace detail {
const KernelTable kAvx2Table{Isa::Avx2, axpy_avx2, dot_avx2, project_view_avx2, backproject_row_avx2};
}

}  // namespace sct::simd
