#include "sct/metrics.hpp"

#include <cmath>
#include <vector>

#include "sct/error.hpp"

namespace sct::metrics {

namespace {

void check_pair(const ImageGrid& a, const ImageGrid& b) {
  if (a.width != b.width || a.height != b.height || a.values.size() != b.values.size())
    throw DataError("images differ in shape");
  if (a.unit != b.unit) throw DataError("images differ in unit");
}

// Valid-region separable filter; out has size (h - k + 1) x (w - k + 1).
std::vector<double> filter_valid(const std::vector<double>& in, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * in[static_cast<std::size_t>(r) * w + c + i];
      tmp[static_cast<std::size_t>(r) * ow + c] = s;
    }
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(r + i) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = s;
    }
  return out;
}

}  // namespace

double mse(const ImageGrid& a, const ImageGrid& b) {
  check_pair(a, b);
  if (a.values.empty()) throw DataError("mse of empty images");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - b.values[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

void SsimConfig::validate() const {
  if (window < 1 || window % 2 == 0) throw UsageError("ssim window must be a positive odd size");
  if (!(sigma > 0) || !(k1 > 0) || !(k2 > 0) || !(dynamic_range > 0))
    throw UsageError("ssim sigma, K1, K2 and dynamic range must be positive");
}

double ssim(const ImageGrid& a, const ImageGrid& b, const SsimConfig& cfg) {
  cfg.validate();
  check_pair(a, b);
  if (a.width < cfg.window || a.height < cfg.window)
    throw DataError("image " + std::to_string(a.width) + "x" + std::to_string(a.height) + " is smaller than the " +
                    std::to_string(cfg.window) + "-pixel ssim window");
  std::vector<double> k(cfg.window);
  double ks = 0;
  for (int i = 0; i < cfg.window; ++i) {
    const double x = i - (cfg.window - 1) / 2.0;
    ks += k[i] = std::exp(-x * x / (2 * cfg.sigma * cfg.sigma));
  }
  for (double& v : k) v /= ks;

  const std::size_t n = a.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a.values[i];
    y[i] = b.values[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const int w = a.width, h = a.height;
  const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k);
  const auto sxx = filter_valid(xx, w, h, k), syy = filter_valid(yy, w, h, k), sxy = filter_valid(xy, w, h, k);
  const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2), c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double dice(const Mask& a, const Mask& b) {
  if (!a.same_shape(b) || a.bits.size() != b.bits.size()) throw DataError("masks differ in shape");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na == 0 || nb == 0 || both == 0) return 0.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::TP: return "TP";
    case Outcome::FP: return "FP";
    case Outcome::TN: return "TN";
    case Outcome::FN: return "FN";
  }
  return "?";
}

Outcome classify_annotation(const Mask& reader_mask, const Mask& truth_mask, bool diseased) {
  if (!reader_mask.same_shape(truth_mask)) throw DataError("annotation mask does not match the truth mask shape");
  if (!diseased) return reader_mask.empty() ? Outcome::TN : Outcome::FP;
  for (std::size_t i = 0; i < reader_mask.bits.size(); ++i)
    if (reader_mask.bits[i] && truth_mask.bits[i]) return Outcome::TP;
  return Outcome::FN;
}

void ConfusionCounts::add(Outcome o) {
  switch (o) {
    case Outcome::TP: ++tp; break;
    case Outcome::FP: ++fp; break;
    case Outcome::TN: ++tn; break;
    case Outcome::FN: ++fn; break;
  }
}

DiagnosticStats diagnostic_stats(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0) throw DataError("confusion counts must be non-negative");
  auto ratio = [](long num, long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  return {ratio(c.tp, c.tp + c.fn), ratio(c.tn, c.tn + c.fp), ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
          ratio(c.tn, c.tn + c.fn)};
}

}  // namespace sct::metrics
