// Scalar and AVX2 kernels must agree. Projection and backprojection use the
// same arithmetic order in both variants and are compared bit for bit; the
// FMA-based axpy/dot are compared with a relative tolerance.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "sct/rng.hpp"
#include "sct/simd/kernels.hpp"

using namespace sct;
using namespace sct::simd;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

}  // namespace

TEST_CASE("dispatch reports a usable table") {
  const auto& k = kernels();
  CHECK(available(k.isa));
  CHECK(available(Isa::Scalar));
  MESSAGE("active SIMD variant: " << to_string(k.isa));
}

TEST_CASE("axpy and dot: vector variant matches scalar reference") {
  if (!available(Isa::Avx2)) return;
  const auto& ref = kernels_for(Isa::Scalar);
  const auto& vec = kernels_for(Isa::Avx2);
  Rng rng(7);
  for (std::size_t n : {0u, 1u, 7u, 8u, 15u, 16u, 17u, 33u, 1000u, 16900u}) {
    const auto x = random_vec(rng, n);
    auto y_ref = random_vec(rng, n);
    auto y_vec = y_ref;
    ref.axpy(0.37f, x.data(), y_ref.data(), n);
    vec.axpy(0.37f, x.data(), y_vec.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y_vec[i] == doctest::Approx(y_ref[i]).epsilon(1e-6));

    double exact = 0.0, mag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      exact += static_cast<double>(x[i]) * y_ref[i];
      mag += std::abs(static_cast<double>(x[i]) * y_ref[i]);
    }
    const float d_ref = ref.dot(x.data(), y_ref.data(), n);
    const float d_vec = vec.dot(x.data(), y_ref.data(), n);
    CHECK(std::abs(d_ref - exact) <= 1e-6 * (mag + 1.0));
    CHECK(std::abs(d_vec - exact) <= 1e-6 * (mag + 1.0));
  }
}

TEST_CASE("project_view: vector variant is bit-identical to scalar") {
  if (!available(Isa::Avx2)) return;
  const auto& ref = kernels_for(Isa::Scalar);
  const auto& vec = kernels_for(Isa::Avx2);
  Rng rng(11);
  for (int width : {8, 30, 64}) {
    const auto image = random_vec(rng, static_cast<std::size_t>(width) * width, 0.0, 2.0);
    for (double theta : {0.0, 0.3, 0.785398, 1.5707963, 2.9}) {
      const int bins = static_cast<int>(std::ceil(std::sqrt(2.0) * width)) | 1;
      ViewMarch m{};
      const double c = std::cos(theta), s = std::sin(theta);
      const double t0 = -0.5 * (bins - 1), u0 = -width;
      m.col0 = static_cast<float>(width / 2 + t0 * c - u0 * s);
      m.row0 = static_cast<float>(width / 2 - (t0 * s + u0 * c));
      m.col_per_bin = static_cast<float>(c);
      m.row_per_bin = static_cast<float>(-s);
      m.col_per_step = static_cast<float>(-0.5 * s);
      m.row_per_step = static_cast<float>(-0.5 * c);
      m.n_steps = 4 * width + 1;
      m.step_mm = 0.5f;
      std::vector<float> a(bins), b(bins);
      ref.project_view(image.data(), width, m, bins, a.data());
      vec.project_view(image.data(), width, m, bins, b.data());
      CHECK(a == b);
    }
  }
}

TEST_CASE("backproject_row: vector variant is bit-identical to scalar") {
  if (!available(Isa::Avx2)) return;
  const auto& ref = kernels_for(Isa::Scalar);
  const auto& vec = kernels_for(Isa::Avx2);
  Rng rng(13);
  const int bins = 91;
  const auto q = random_vec(rng, bins);
  for (int width : {5, 8, 64, 67}) {
    for (double slope : {1.0, -0.7, 0.0, 0.31}) {
      RowBackprojection row{};
      row.bin0 = 45.0 - slope * width / 2 + 0.123;
      row.bin_per_col = slope;
      row.weight = 0.0123f;
      auto a = random_vec(rng, width);
      auto b = a;
      ref.backproject_row(q.data(), bins, row, a.data(), width);
      vec.backproject_row(q.data(), bins, row, b.data(), width);
      CHECK(a == b);
    }
  }
  // Rows that leave the detector on both sides read zeros.
  RowBackprojection far{};
  far.bin0 = -500.0;
  far.bin_per_col = 100.0;
  far.weight = 1.0f;
  std::vector<float> a(16, 0.0f), b(16, 0.0f);
  ref.backproject_row(q.data(), bins, far, a.data(), 16);
  vec.backproject_row(q.data(), bins, far, b.data(), 16);
  CHECK(a == b);
}
