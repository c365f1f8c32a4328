#pragma once

// Data-parallel inner loops shared by the projector, the backprojector and the
// convolution layers. Every kernel has a scalar reference implementation and,
// on x86-64, an AVX2+FMA variant. The active table is chosen once at first use
// from CPU features and the SCT_SIMD environment variable (scalar|avx2|auto).

#include <cstddef>
#include <string_view>

namespace sct::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);

/// Parameters of one parallel-beam view for ray marching.
///
/// Sample m of ray k sits at continuous pixel coordinates
///   col = col0 + k * col_per_bin + m * col_per_step
///   row = row0 + k * row_per_bin + m * row_per_step
/// and the ray sum is multiplied by step_mm. Pixel (r, c) holds the value at
/// integer coordinates (r, c); samples are bilinear with zero outside the grid.
struct ViewMarch {
  float col0, row0;
  float col_per_bin, row_per_bin;
  float col_per_step, row_per_step;
  int n_steps;
  float step_mm;
};

/// One image row of pixel-driven backprojection with linear detector interpolation.
/// Column c reads the filtered projection at continuous bin index bin0 + c * bin_per_col
/// (zero outside [0, n_bins - 1]) and adds weight * value into out[c].
struct RowBackprojection {
  double bin0;
  double bin_per_col;
  float weight;
};

struct KernelTable {
  Isa isa;
  /// y[i] += a * x[i]
  void (*axpy)(float a, const float* x, float* y, std::size_t n);
  /// sum_i x[i] * y[i]
  float (*dot)(const float* x, const float* y, std::size_t n);
  /// Ray sums for bins [0, n_bins) of one view.
  void (*project_view)(const float* image, int width, const ViewMarch& march, int n_bins, float* out);
  void (*backproject_row)(const float* filtered, int n_bins, const RowBackprojection& row, float* out, int width);
};

/// The table selected for this process.
const KernelTable& kernels();

/// True when the ISA is compiled in and supported by the running CPU.
bool available(Isa isa);

/// Table for a specific ISA; throws std::runtime_error when unavailable.
const KernelTable& kernels_for(Isa isa);

namespace detail {
extern const KernelTable kScalarTable;
#if defined(SCT_HAVE_AVX2_TU)
extern const KernelTable kAvx2Table;
#endif
}  // namespace detail

}  // namespace sct::simd
