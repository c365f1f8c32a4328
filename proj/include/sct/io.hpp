#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sct/image.hpp"

namespace sct::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Sidecar header path for a raw or PNG payload: "<path>.json".
fs::path sidecar_path(const fs::path& payload);

std::string read_text(const fs::path& path);
std::vector<std::uint8_t> read_bytes(const fs::path& path);

/// Writes via a temporary file plus rename so readers never see partial output.
void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes);
void write_text(const fs::path& path, const std::string& text);
json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);

/// Little-endian float32 payload plus JSON header sidecar.
void write_raw_f32(const fs::path& path, std::span<const float> values, const json& header);
std::vector<float> read_raw_f32(const fs::path& path, std::size_t expected_count);

/// Raw image: header {width, height, pixel_size_mm, unit_tag}.
void write_raw_image(const fs::path& path, const ImageGrid& image);
ImageGrid read_raw_image(const fs::path& path);
ImageGrid read_raw_image(const fs::path& path, const json& header);

/// Mask file: JSON {width, height, rle}.
void write_mask(const fs::path& path, const Mask& mask);
Mask read_mask(const fs::path& path);
json mask_to_json(const Mask& mask);
Mask mask_from_json(const json& j);

/// 16-bit grayscale PNG with sidecar {pixel_size_mm, hu_slope, hu_intercept, unit_tag}.
/// Stored value s maps back to s * hu_slope + hu_intercept.
void write_png16(const fs::path& path, const ImageGrid& image);
ImageGrid read_png16(const fs::path& path);

/// 8-bit grayscale PNG bytes, no ancillary chunks. Input must be normalized.
std::vector<std::uint8_t> encode_png8(const ImageGrid& normalized);
/// Decode an 8-bit grayscale PNG into (width, height, pixels).
struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};
Gray8 decode_png8(std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace sct::io
