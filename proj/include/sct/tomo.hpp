#pragma once

// 2D parallel-beam acquisition model: ray-marched forward projection, view
// subsampling, filtered backprojection and display windowing.
//
// Coordinates: the rotation axis passes through the center of pixel
// (width/2, width/2). x grows with the column index, y grows toward row 0.
// View angle theta measures the detector axis (cos theta, sin theta); rays
// travel along (-sin theta, cos theta). Detector bin k sits at
// t = (k - (n_bins - 1) / 2) * detector_spacing.

#include <filesystem>
#include <string_view>
#include <vector>

#include "sct/image.hpp"

namespace sct::tomo {

struct ProjectionGeometry {
  int n_views = 0;
  int detector_bins = 0;
  double detector_spacing = 1.0;  // mm
  std::vector<double> angles;     // radians, evenly spaced on [0, pi)

  /// n_views evenly spaced angles on [0, pi) and detector_bins covering the
  /// image diagonal: smallest odd integer >= ceil(sqrt(2) * width).
  static ProjectionGeometry parallel(int n_views, int image_width, double pixel_size);

  /// Throws DataError on an inconsistent geometry.
  void validate() const;
};

int default_detector_bins(int image_width);

struct Sinogram {
  ProjectionGeometry geometry;
  std::vector<float> values;  // n_views x detector_bins, row-major, HU*mm

  const float* view(int v) const { return values.data() + static_cast<std::size_t>(v) * geometry.detector_bins; }
  float* view(int v) { return values.data() + static_cast<std::size_t>(v) * geometry.detector_bins; }
  void validate() const;
};

struct WindowSpec {
  double level = -600.0;  // HU
  double width = 1700.0;  // HU
};

/// Lung window used throughout: width 1700, level -600 HU.
inline constexpr WindowSpec kLungWindow{-600.0, 1700.0};

enum class Filter { RamLak, Hann };
Filter filter_from_string(std::string_view name);
std::string_view to_string(Filter f);

/// Line integrals along every (angle, bin) ray by bilinear ray marching with a
/// half-pixel step. The image must be HU-tagged.
Sinogram forward_project(const ImageGrid& image, const ProjectionGeometry& geometry);

/// Keeps rows k * (full_views / n_views). Rows are copied bit for bit.
Sinogram subsample_sinogram(const Sinogram& full, int n_views);

/// Ramp-filtered (optionally Hann-apodized) pixel-driven backprojection
/// scaled by pi / n_views. Output pixel size equals the detector spacing.
ImageGrid fbp_reconstruct(const Sinogram& sinogram, int out_size, Filter filter = Filter::RamLak);

/// Clip to [level - width/2, level + width/2] and map affinely onto [0, 1].
ImageGrid apply_window(const ImageGrid& hu, const WindowSpec& window);

void write_sinogram(const std::filesystem::path& path, const Sinogram& sinogram);
Sinogram read_sinogram(const std::filesystem::path& path);

}  // namespace sct::tomo
