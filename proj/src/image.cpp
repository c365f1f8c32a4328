#include "sct/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sct/error.hpp"

namespace sct {

std::string_view to_string(UnitTag tag) {
  switch (tag) {
    case UnitTag::HU: return "HU";
    case UnitTag::Normalized: return "normalized";
    case UnitTag::Residual: return "residual";
  }
  return "?";
}

UnitTag unit_tag_from_string(std::string_view s) {
  if (s == "HU") return UnitTag::HU;
  if (s == "normalized") return UnitTag::Normalized;
  if (s == "residual") return UnitTag::Residual;
  throw DataError("unknown unit_tag '" + std::string(s) + "'");
}

ImageGrid::ImageGrid(int size, double pixel_size_mm, UnitTag tag, float fill)
    : width(size), height(size), pixel_size(pixel_size_mm), unit(tag),
      values(static_cast<std::size_t>(size) * size, fill) {}

void ImageGrid::validate() const {
  if (width != height) throw DataError("image is not square");
  if (width <= 0 || width % 2 != 0) throw DataError("image width must be positive and even");
  if (!(pixel_size > 0.0) || !std::isfinite(pixel_size)) throw DataError("pixel size must be positive");
  if (values.size() != static_cast<std::size_t>(width) * height) throw DataError("image value count mismatch");
  for (float v : values) {
    if (!std::isfinite(v)) throw DataError("image contains non-finite values");
    if (unit == UnitTag::Normalized && (v < 0.0f || v > 1.0f)) {
      throw DataError("normalized image value outside [0, 1]");
    }
    if (unit == UnitTag::Residual && (v < -1.0f || v > 1.0f)) throw DataError("residual image value outside [-1, 1]");
  }
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

std::vector<std::int64_t> mask_to_rle(const Mask& mask) {
  std::vector<std::int64_t> rle;
  const auto n = static_cast<std::int64_t>(mask.bits.size());
  std::int64_t i = 0;
  while (i < n) {
    if (!mask.bits[i]) {
      ++i;
      continue;
    }
    std::int64_t j = i;
    while (j < n && mask.bits[j]) ++j;
    rle.push_back(i);
    rle.push_back(j - i);
    i = j;
  }
  return rle;
}

Mask mask_from_rle(int width, int height, std::span<const std::int64_t> rle) {
  if (width <= 0 || height <= 0) throw DataError("mask dimensions must be positive");
  if (rle.size() % 2 != 0) throw DataError("mask RLE must contain start/length pairs");
  Mask mask(width, height);
  const auto n = static_cast<std::int64_t>(mask.bits.size());
  std::int64_t prev_end = 0;
  for (std::size_t k = 0; k < rle.size(); k += 2) {
    const std::int64_t start = rle[k];
    const std::int64_t len = rle[k + 1];
    if (start < 0 || len <= 0 || start > n - len) throw DataError("mask run outside grid bounds");
    if (start < prev_end) throw DataError("mask runs overlap or are unsorted");
    std::fill_n(mask.bits.begin() + start, len, std::uint8_t{1});
    prev_end = start + len;
  }
  return mask;
}

int count_components(const Mask& mask) {
  std::vector<int> label(mask.bits.size(), 0);
  std::vector<std::pair<int, int>> stack;
  int components = 0;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * mask.width + c;
      if (!mask.bits[idx] || label[idx]) continue;
      ++components;
      label[idx] = components;
      stack.emplace_back(r, c);
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= mask.height || nx >= mask.width) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * mask.width + nx;
            if (mask.bits[nidx] && !label[nidx]) {
              label[nidx] = components;
              stack.emplace_back(ny, nx);
            }
          }
        }
      }
    }
  }
  return components;
}

}  // namespace sct
