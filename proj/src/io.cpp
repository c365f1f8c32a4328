#include "sct/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sct/error.hpp"

namespace sct::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

fs::path sidecar_path(const fs::path& payload) {
  fs::path p = payload;
  p += ".json";
  return p;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_raw_f32(const fs::path& path, std::span<const float> values, const json& header) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto u = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    std::memcpy(bytes.data() + 4 * i, &u, 4);
  }
  write_bytes(path, bytes);
  write_json(sidecar_path(path), header);
}

std::vector<float> read_raw_f32(const fs::path& path, std::size_t expected_count) {
  const auto bytes = read_bytes(path);
  if (bytes.size() != expected_count * 4) {
    throw DataError("raw file " + path.string() + " has " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expected_count * 4));
  }
  std::vector<float> values(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    values[i] = std::bit_cast<float>(u);
  }
  return values;
}

void write_raw_image(const fs::path& path, const ImageGrid& image) {
  image.validate();
  json header = {{"width", image.width},
                 {"height", image.height},
                 {"pixel_size_mm", image.pixel_size},
                 {"unit_tag", std::string(to_string(image.unit))}};
  write_raw_f32(path, image.values, header);
}

ImageGrid read_raw_image(const fs::path& path) { return read_raw_image(path, read_json(sidecar_path(path))); }

ImageGrid read_raw_image(const fs::path& path, const json& header) {
  ImageGrid image;
  try {
    image.width = header.at("width").get<int>();
    image.height = header.at("height").get<int>();
    image.pixel_size = header.at("pixel_size_mm").get<double>();
    image.unit = unit_tag_from_string(header.at("unit_tag").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError("bad raw image header for " + path.string() + ": " + e.what());
  }
  if (image.width != image.height) throw DataError("raw image header width != height");
  if (image.width <= 0) throw DataError("raw image header has non-positive size");
  image.values = read_raw_f32(path, static_cast<std::size_t>(image.width) * image.height);
  image.validate();
  return image;
}

json mask_to_json(const Mask& mask) {
  return {{"width", mask.width}, {"height", mask.height}, {"rle", mask_to_rle(mask)}};
}

Mask mask_from_json(const json& j) {
  try {
    const auto rle = j.at("rle").get<std::vector<std::int64_t>>();
    return mask_from_rle(j.at("width").get<int>(), j.at("height").get<int>(), rle);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad mask JSON: ") + e.what());
  }
}

void write_mask(const fs::path& path, const Mask& mask) { write_json(path, mask_to_json(mask)); }

Mask read_mask(const fs::path& path) { return mask_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// PNG

namespace {

struct MemWriter {
  std::vector<std::uint8_t> bytes;
};

struct MemReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

void png_mem_write(png_structp png, png_bytep data, png_size_t len) {
  auto* w = static_cast<MemWriter*>(png_get_io_ptr(png));
  w->bytes.insert(w->bytes.end(), data, data + len);
}

void png_mem_flush(png_structp) {}

void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->pos + len > r->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(out, r->bytes.data() + r->pos, len);
  r->pos += len;
}

// Rows are big-endian per the PNG spec for 16-bit depth.
std::vector<std::uint8_t> encode_gray(int width, int height, int depth, const std::vector<std::uint8_t>& rows) {
  MemWriter writer;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("png_create_info_struct failed");
  }
  const int bytes_per_px = depth / 8;
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) {
    row_ptrs[r] = const_cast<png_bytep>(rows.data() + static_cast<std::size_t>(r) * width * bytes_per_px);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG encoding failed");
  }
  png_set_write_fn(png, &writer, png_mem_write, png_mem_flush);
  png_set_IHDR(png, info, width, height, depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(writer.bytes);
}

struct DecodedGray {
  int width = 0;
  int height = 0;
  int depth = 0;
  std::vector<std::uint8_t> rows;
};

DecodedGray decode_gray(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw DataError("not a PNG stream");
  MemReader reader{bytes, 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("png_create_info_struct failed");
  }
  DecodedGray* out = new DecodedGray();
  std::vector<png_bytep>* row_ptrs = new std::vector<png_bytep>();
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    delete out;
    delete row_ptrs;
    throw DataError("PNG decoding failed");
  }
  png_set_read_fn(png, &reader, png_mem_read);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) png_error(png, "expected grayscale PNG");
  out->width = static_cast<int>(png_get_image_width(png, info));
  out->height = static_cast<int>(png_get_image_height(png, info));
  out->depth = png_get_bit_depth(png, info);
  if (out->depth != 8 && out->depth != 16) png_error(png, "unsupported bit depth");
  const std::size_t stride = static_cast<std::size_t>(out->width) * (out->depth / 8);
  out->rows.resize(stride * out->height);
  row_ptrs->resize(out->height);
  for (int r = 0; r < out->height; ++r) (*row_ptrs)[r] = out->rows.data() + r * stride;
  png_read_image(png, row_ptrs->data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  DecodedGray result = std::move(*out);
  delete out;
  delete row_ptrs;
  return result;
}

}  // namespace

void write_png16(const fs::path& path, const ImageGrid& image) {
  image.validate();
  double slope = 1.0, intercept = -1024.0;
  if (image.unit == UnitTag::Normalized) {
    slope = 1.0 / 65535.0;
    intercept = 0.0;
  } else if (image.unit == UnitTag::Residual) {
    slope = 2.0 / 65535.0;
    intercept = -1.0;
  }
  std::vector<std::uint8_t> rows(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double s = std::clamp(std::round((image.values[i] - intercept) / slope), 0.0, 65535.0);
    const auto u = static_cast<std::uint16_t>(s);
    rows[2 * i] = static_cast<std::uint8_t>(u >> 8);
    rows[2 * i + 1] = static_cast<std::uint8_t>(u & 0xFF);
  }
  const auto bytes = encode_gray(image.width, image.height, 16, rows);
  write_bytes(path, bytes);
  write_json(sidecar_path(path), {{"pixel_size_mm", image.pixel_size},
                                  {"hu_slope", slope},
                                  {"hu_intercept", intercept},
                                  {"unit_tag", std::string(to_string(image.unit))}});
}

ImageGrid read_png16(const fs::path& path) {
  const json side = read_json(sidecar_path(path));
  const auto decoded = decode_gray(read_bytes(path));
  if (decoded.depth != 16) throw DataError("expected a 16-bit PNG: " + path.string());
  if (decoded.width != decoded.height) throw DataError("PNG image is not square: " + path.string());
  ImageGrid image;
  try {
    image = ImageGrid(decoded.width, side.at("pixel_size_mm").get<double>(),
                      unit_tag_from_string(side.at("unit_tag").get<std::string>()));
    const double slope = side.at("hu_slope").get<double>();
    const double intercept = side.at("hu_intercept").get<double>();
    for (std::size_t i = 0; i < image.size(); ++i) {
      const unsigned s = (static_cast<unsigned>(decoded.rows[2 * i]) << 8) | decoded.rows[2 * i + 1];
      image.values[i] = static_cast<float>(s * slope + intercept);
    }
  } catch (const json::exception& e) {
    throw DataError("bad PNG sidecar for " + path.string() + ": " + e.what());
  }
  image.validate();
  return image;
}

std::vector<std::uint8_t> encode_png8(const ImageGrid& normalized) {
  if (normalized.unit != UnitTag::Normalized) throw DataError("encode_png8 expects a normalized image");
  std::vector<std::uint8_t> rows(normalized.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = static_cast<std::uint8_t>(std::lround(std::clamp(normalized.values[i], 0.0f, 1.0f) * 255.0f));
  }
  return encode_gray(normalized.width, normalized.height, 8, rows);
}

Gray8 decode_png8(std::span<const std::uint8_t> bytes) {
  auto decoded = decode_gray(bytes);
  if (decoded.depth != 8) throw DataError("expected an 8-bit PNG");
  return {decoded.width, decoded.height, std::move(decoded.rows)};
}

// ---------------------------------------------------------------------------
// base64

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += (i + 1 < bytes.size()) ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = value(c);
    if (v < 0) throw DataError("invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

}  // namespace sct::io
