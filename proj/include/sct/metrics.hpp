#pragma once

// Image-quality and segmentation metrics, reader-outcome classification and
// diagnostic statistics.

#include <optional>
#include <string>

#include "sct/image.hpp"

namespace sct::metrics {

/// Mean squared difference. Throws DataError on shape or unit mismatch.
double mse(const ImageGrid& a, const ImageGrid& b);

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  void validate() const;
};

/// Mean of the local SSIM map over the valid region (no padding), Gaussian
/// weighted. Throws DataError when the image is smaller than the window.
double ssim(const ImageGrid& a, const ImageGrid& b, const SsimConfig& cfg = {});

/// 2|A and B| / (|A| + |B|); zero when either mask is empty or they do not overlap.
double dice(const Mask& a, const Mask& b);

enum class Outcome { TP, FP, TN, FN };
std::string to_string(Outcome o);

/// Diseased: any overlap with the truth mask is a TP, otherwise FN.
/// Healthy: an empty reader mask is a TN, anything marked is a FP.
Outcome classify_annotation(const Mask& reader_mask, const Mask& truth_mask, bool diseased);

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;

  void add(Outcome o);
  long total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Each value is empty when its denominator is zero.
struct DiagnosticStats {
  std::optional<double> sensitivity, specificity, f1, npv;
};

DiagnosticStats diagnostic_stats(const ConfusionCounts& c);

}  // namespace sct::metrics
