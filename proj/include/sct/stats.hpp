#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sct::stats {

struct PairedSample {
  std::string cluster_id;
  double processed = 0;
  double sparse = 0;
};

struct WilcoxonResult {
  double statistic = 0;  // sum of signed midranks
  double variance = 0;   // sum over clusters of squared cluster rank sums
  double z = 0;
  double p_value = 1;
  int n_clusters = 0;    // clusters with at least one nonzero difference
  int n_nonzero = 0;
};

/// Cluster-adjusted signed-rank test on processed - sparse differences.
/// Zero differences are dropped and ties get midranks; each cluster
/// contributes the sum of its signed ranks, and the two-sided p-value comes
/// from the normal approximation. With one observation per cluster this is the
/// ordinary tie-corrected Wilcoxon signed-rank test.
///
/// Empty when the test is undefined: fewer than two clusters with a nonzero
/// difference, or all differences zero. Throws DataError on non-finite input.
std::optional<WilcoxonResult> clustered_wilcoxon(std::span<const PairedSample> samples);

struct MeanCi {
  double mean = 0;
  std::optional<double> low, high;  // empty for n < 2
  std::size_t n = 0;
};

/// Sample mean with a two-sided Student-t confidence interval.
/// Throws DataError on empty or non-finite input.
MeanCi mean_ci(std::span<const double> values, double level = 0.95);

}  // namespace sct::stats
