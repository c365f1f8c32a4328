#include "sct/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "sct/error.hpp"

namespace sct::stats {

namespace {

// Ties up to floating-point noise, so that e.g. 0.7 - 0.5 and 0.9 - 0.7 share a rank.
bool same_magnitude(double a, double b) {
  const double x = std::abs(a), y = std::abs(b);
  return std::abs(x - y) <= 1e-9 * std::max(x, y);
}

}  // namespace

std::optional<WilcoxonResult> clustered_wilcoxon(std::span<const PairedSample> samples) {
  struct Diff {
    double value;
    std::size_t cluster;
  };
  std::map<std::string, std::size_t> cluster_index;
  std::vector<Diff> diffs;
  for (const auto& s : samples) {
    if (!std::isfinite(s.processed) || !std::isfinite(s.sparse))
      throw DataError("non-finite value in paired sample of cluster '" + s.cluster_id + "'");
    const double d = s.processed - s.sparse;
    if (d == 0.0) continue;
    const auto [it, inserted] = cluster_index.emplace(s.cluster_id, cluster_index.size());
    diffs.push_back({d, it->second});
  }
  if (cluster_index.size() < 2) return std::nullopt;

  std::vector<std::size_t> order(diffs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(diffs[a].value) < std::abs(diffs[b].value); });
  std::vector<double> rank(diffs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && same_magnitude(diffs[order[j + 1]].value, diffs[order[i]].value)) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }

  std::vector<double> cluster_sum(cluster_index.size(), 0.0);
  for (std::size_t i = 0; i < diffs.size(); ++i) cluster_sum[diffs[i].cluster] += diffs[i].value > 0 ? rank[i] : -rank[i];

  WilcoxonResult r;
  r.n_clusters = static_cast<int>(cluster_index.size());
  r.n_nonzero = static_cast<int>(diffs.size());
  for (double s : cluster_sum) {
    r.statistic += s;
    r.variance += s * s;
  }
  // Every cluster sum is zero: the statistic is exactly zero as well.
  r.z = r.variance > 0 ? r.statistic / std::sqrt(r.variance) : 0.0;
  r.p_value = std::min(1.0, std::erfc(std::abs(r.z) / std::sqrt(2.0)));
  return r;
}

MeanCi mean_ci(std::span<const double> values, double level) {
  if (values.empty()) throw DataError("mean of an empty sample");
  if (!(level > 0 && level < 1)) throw UsageError("confidence level must be in (0, 1)");
  MeanCi out;
  out.n = values.size();
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("non-finite value in sample");
    out.mean += v;
  }
  out.mean /= static_cast<double>(out.n);
  if (out.n < 2) return out;
  double ss = 0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double se = std::sqrt(ss / static_cast<double>(out.n - 1) / static_cast<double>(out.n));
  const boost::math::students_t dist(static_cast<double>(out.n - 1));
  const double t = boost::math::quantile(boost::math::complement(dist, (1 - level) / 2));
  out.low = out.mean - t * se;
  out.high = out.mean + t * se;
  return out;
}

}  // namespace sct::stats
