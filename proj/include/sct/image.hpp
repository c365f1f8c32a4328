#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sct {

/// Residual holds a difference of two normalized images, in [-1, 1].
enum class UnitTag { HU, Normalized, Residual };

std::string_view to_string(UnitTag tag);
UnitTag unit_tag_from_string(std::string_view s);

/// Square 2D scalar field, row-major, row 0 at the top.
///
/// Invariants (checked by validate()): width == height, width positive and
/// even, all values finite, normalized images lie in [0, 1].
struct ImageGrid {
  int width = 0;
  int height = 0;
  double pixel_size = 1.0;  // mm per pixel
  UnitTag unit = UnitTag::HU;
  std::vector<float> values;

  ImageGrid() = default;
  ImageGrid(int size, double pixel_size_mm, UnitTag tag, float fill = 0.0f);

  std::size_t size() const { return values.size(); }
  float& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
  float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }

  /// Throws DataError when an invariant is violated.
  void validate() const;
};

/// Binary segmentation on an image grid; one byte per pixel (0 or 1).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool get(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
  void set(int row, int col, bool on = true) {
    bits[static_cast<std::size_t>(row) * width + col] = on ? 1 : 0;
  }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool same_shape(const Mask& other) const { return width == other.width && height == other.height; }
};

/// Run-length encoding over row-major pixel indices: [start0, len0, start1, len1, ...].
std::vector<std::int64_t> mask_to_rle(const Mask& mask);

/// Throws DataError when a run falls outside the grid or runs overlap/unsorted.
Mask mask_from_rle(int width, int height, std::span<const std::int64_t> rle);

/// Number of 8-connected components of set pixels.
int count_components(const Mask& mask);

}  // namespace sct
