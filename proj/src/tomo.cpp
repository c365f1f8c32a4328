#include "sct/tomo.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "sct/error.hpp"
#include "sct/io.hpp"
#include "sct/simd/kernels.hpp"

namespace sct::tomo {

namespace {
constexpr double kPi = std::numbers::pi;
}

int default_detector_bins(int image_width) {
  int bins = static_cast<int>(std::ceil(std::sqrt(2.0) * image_width));
  if (bins % 2 == 0) ++bins;
  return bins;
}

ProjectionGeometry ProjectionGeometry::parallel(int n_views, int image_width, double pixel_size) {
  if (n_views <= 0) throw DataError("geometry needs at least one view");
  ProjectionGeometry g;
  g.n_views = n_views;
  g.detector_bins = default_detector_bins(image_width);
  g.detector_spacing = pixel_size;
  g.angles.resize(n_views);
  for (int v = 0; v < n_views; ++v) g.angles[v] = kPi * v / n_views;
  return g;
}

void ProjectionGeometry::validate() const {
  if (angles.empty()) throw DataError("empty angle list");
  if (static_cast<int>(angles.size()) != n_views) throw DataError("n_views does not match the angle list");
  if (detector_bins <= 0 || detector_bins % 2 == 0) throw DataError("detector_bins must be positive and odd");
  if (!(detector_spacing > 0.0)) throw DataError("detector spacing must be positive");
  if (angles.front() < 0.0 || angles.back() >= kPi) throw DataError("angles must lie in [0, pi)");
  for (std::size_t i = 1; i < angles.size(); ++i) {
    if (!(angles[i] > angles[i - 1])) throw DataError("angles must be strictly increasing");
  }
  if (angles.size() > 2) {
    const double step = kPi / n_views;
    for (std::size_t i = 1; i < angles.size(); ++i) {
      if (std::abs(angles[i] - angles[i - 1] - step) > 1e-9) throw DataError("angles must be evenly spaced on [0, pi)");
    }
  }
}

void Sinogram::validate() const {
  geometry.validate();
  if (values.size() != static_cast<std::size_t>(geometry.n_views) * geometry.detector_bins) {
    throw DataError("sinogram shape does not match its geometry");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw DataError("sinogram contains non-finite values");
  }
}

Filter filter_from_string(std::string_view name) {
  if (name == "ram-lak") return Filter::RamLak;
  if (name == "hann") return Filter::Hann;
  throw UsageError("unknown filter '" + std::string(name) + "' (expected ram-lak or hann)");
}

std::string_view to_string(Filter f) { return f == Filter::RamLak ? "ram-lak" : "hann"; }

Sinogram forward_project(const ImageGrid& image, const ProjectionGeometry& geometry) {
  if (image.width != image.height) throw DataError("forward_project: image is not square");
  if (geometry.angles.empty()) throw DataError("forward_project: empty angle list");
  image.validate();
  if (image.unit != UnitTag::HU) throw DataError("forward_project expects an HU-tagged image");
  geometry.validate();

  const int width = image.width;
  const double p = image.pixel_size;
  const double s = geometry.detector_spacing;
  const double center = width / 2;
  const double h = 0.5 * p;
  const double reach = (width / 2.0 + 1.0) * std::sqrt(2.0) * p;
  const int half_steps = static_cast<int>(std::ceil(reach / h));
  const double u0 = -half_steps * h;
  const double t0 = -0.5 * (geometry.detector_bins - 1) * s;

  Sinogram sino;
  sino.geometry = geometry;
  sino.values.assign(static_cast<std::size_t>(geometry.n_views) * geometry.detector_bins, 0.0f);
  const auto& k = simd::kernels();
  for (int v = 0; v < geometry.n_views; ++v) {
    const double c = std::cos(geometry.angles[v]);
    const double sn = std::sin(geometry.angles[v]);
    simd::ViewMarch march{};
    march.col0 = static_cast<float>(center + (t0 * c - u0 * sn) / p);
    march.row0 = static_cast<float>(center - (t0 * sn + u0 * c) / p);
    march.col_per_bin = static_cast<float>(s * c / p);
    march.row_per_bin = static_cast<float>(-s * sn / p);
    march.col_per_step = static_cast<float>(-h * sn / p);
    march.row_per_step = static_cast<float>(-h * c / p);
    march.n_steps = 2 * half_steps + 1;
    march.step_mm = static_cast<float>(h);
    k.project_view(image.values.data(), width, march, geometry.detector_bins, sino.view(v));
  }
  return sino;
}

Sinogram subsample_sinogram(const Sinogram& full, int n_views) {
  const int total = full.geometry.n_views;
  if (n_views <= 0) throw DataError("subsample: view count must be positive");
  if (n_views > total) throw DataError("subsample: requested more views than available");
  if (total % n_views != 0) throw DataError("subsample: view count does not divide the full view count");
  const int stride = total / n_views;
  Sinogram out;
  out.geometry = full.geometry;
  out.geometry.n_views = n_views;
  out.geometry.angles.resize(n_views);
  out.values.resize(static_cast<std::size_t>(n_views) * full.geometry.detector_bins);
  for (int k = 0; k < n_views; ++k) {
    out.geometry.angles[k] = full.geometry.angles[static_cast<std::size_t>(k) * stride];
    std::copy_n(full.view(k * stride), full.geometry.detector_bins, out.view(k));
  }
  return out;
}

namespace {

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

// Frequency response of the band-limited ramp, built from its spatial kernel
// so the zero-frequency term is correct for a finite detector.
std::vector<double> ramp_response(int n_fft, double spacing, Filter filter) {
  std::vector<double> kernel(n_fft, 0.0);
  kernel[0] = 1.0 / (4.0 * spacing * spacing);
  for (int n = 1; n < n_fft / 2; ++n) {
    if (n % 2 == 1) {
      const double v = -1.0 / (n * n * kPi * kPi * spacing * spacing);
      kernel[n] = v;
      kernel[n_fft - n] = v;
    }
  }
  if ((n_fft / 2) % 2 == 1) kernel[n_fft / 2] = -1.0 / ((n_fft / 2) * (n_fft / 2) * kPi * kPi * spacing * spacing);

  const int n_freq = n_fft / 2 + 1;
  std::vector<std::complex<double>> spectrum(n_freq);
  {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_plan plan = fftw_plan_dft_r2c_1d(n_fft, kernel.data(), reinterpret_cast<fftw_complex*>(spectrum.data()),
                                          FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  std::vector<double> response(n_freq);
  for (int f = 0; f < n_freq; ++f) {
    double r = spectrum[f].real();
    if (filter == Filter::Hann) r *= 0.5 * (1.0 + std::cos(2.0 * kPi * f / n_fft));
    response[f] = r;
  }
  return response;
}

}  // namespace

ImageGrid fbp_reconstruct(const Sinogram& sino, int out_size, Filter filter) {
  if (sino.geometry.n_views < 2) throw DataError("fbp_reconstruct needs at least two views");
  if (out_size <= 0 || out_size % 2 != 0) throw DataError("fbp_reconstruct: output size must be positive and even");
  sino.validate();

  const auto& g = sino.geometry;
  const int bins = g.detector_bins;
  int n_fft = 1;
  while (n_fft < 2 * bins) n_fft *= 2;
  const int n_freq = n_fft / 2 + 1;
  const auto response = ramp_response(n_fft, g.detector_spacing, filter);

  std::vector<double> line(n_fft);
  std::vector<std::complex<double>> spec(n_freq);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_plan_mutex());
    fwd = fftw_plan_dft_r2c_1d(n_fft, line.data(), reinterpret_cast<fftw_complex*>(spec.data()), FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(n_fft, reinterpret_cast<fftw_complex*>(spec.data()), line.data(), FFTW_ESTIMATE);
  }

  // Filtered projection q = spacing * (h conv p), truncated back to the detector.
  std::vector<float> filtered(static_cast<std::size_t>(g.n_views) * bins);
  const double scale = g.detector_spacing / n_fft;
  for (int v = 0; v < g.n_views; ++v) {
    std::fill(line.begin(), line.end(), 0.0);
    const float* row = sino.view(v);
    for (int b = 0; b < bins; ++b) line[b] = row[b];
    fftw_execute(fwd);
    for (int f = 0; f < n_freq; ++f) spec[f] *= response[f];
    fftw_execute(inv);
    float* out = filtered.data() + static_cast<std::size_t>(v) * bins;
    for (int b = 0; b < bins; ++b) out[b] = static_cast<float>(line[b] * scale);
  }
  {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }

  const double p = g.detector_spacing;
  const double s = g.detector_spacing;
  const double center = out_size / 2;
  const double mid_bin = 0.5 * (bins - 1);
  ImageGrid image(out_size, p, UnitTag::HU, 0.0f);
  const auto& k = simd::kernels();
  const float weight = static_cast<float>(kPi / g.n_views);
  for (int v = 0; v < g.n_views; ++v) {
    const double c = std::cos(g.angles[v]);
    const double sn = std::sin(g.angles[v]);
    const float* q = filtered.data() + static_cast<std::size_t>(v) * bins;
    for (int r = 0; r < out_size; ++r) {
      const double y = (center - r) * p;
      simd::RowBackprojection row{};
      row.bin0 = (-center * p * c + y * sn) / s + mid_bin;
      row.bin_per_col = p * c / s;
      row.weight = weight;
      k.backproject_row(q, bins, row, &image.at(r, 0), out_size);
    }
  }
  for (float val : image.values) {
    if (!std::isfinite(val)) throw NumericError("fbp_reconstruct produced non-finite values");
  }
  return image;
}

ImageGrid apply_window(const ImageGrid& hu, const WindowSpec& window) {
  if (!(window.width > 0.0)) throw DataError("window width must be positive");
  if (hu.unit != UnitTag::HU) throw DataError("apply_window expects an HU-tagged image");
  const double lo = window.level - window.width / 2.0;
  const double hi = window.level + window.width / 2.0;
  ImageGrid out = hu;
  out.unit = UnitTag::Normalized;
  for (float& v : out.values) v = static_cast<float>((std::clamp(static_cast<double>(v), lo, hi) - lo) / window.width);
  return out;
}

void write_sinogram(const std::filesystem::path& path, const Sinogram& sino) {
  sino.validate();
  io::json header = {{"width", sino.geometry.detector_bins},
                     {"height", sino.geometry.n_views},
                     {"detector_spacing_mm", sino.geometry.detector_spacing},
                     {"angles", sino.geometry.angles},
                     {"unit_tag", "HU*mm"}};
  io::write_raw_f32(path, sino.values, header);
}

Sinogram read_sinogram(const std::filesystem::path& path) {
  const auto header = io::read_json(io::sidecar_path(path));
  Sinogram sino;
  try {
    sino.geometry.detector_bins = header.at("width").get<int>();
    sino.geometry.n_views = header.at("height").get<int>();
    sino.geometry.detector_spacing = header.at("detector_spacing_mm").get<double>();
    sino.geometry.angles = header.at("angles").get<std::vector<double>>();
  } catch (const io::json::exception& e) {
    throw DataError("bad sinogram header for " + path.string() + ": " + e.what());
  }
  sino.values = io::read_raw_f32(path, static_cast<std::size_t>(sino.geometry.n_views) * sino.geometry.detector_bins);
  sino.validate();
  return sino;
}

}  // namespace sct::tomo
