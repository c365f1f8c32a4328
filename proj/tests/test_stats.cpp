#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sct/error.hpp"
#include "sct/rng.hpp"
#include "sct/stats.hpp"

using namespace sct::stats;

namespace {

std::vector<PairedSample> singleton_samples(const std::vector<double>& diffs) {
  std::vector<PairedSample> out;
  for (std::size_t i = 0; i < diffs.size(); ++i) out.push_back({"c" + std::to_string(i), diffs[i], 0.0});
  return out;
}

std::vector<double> midranks_of_abs(const std::vector<double>& d) {
  std::vector<double> r(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double below = 0, equal = 0;
    for (double x : d) {
      if (std::abs(x) < std::abs(d[i])) ++below;
      if (std::abs(x) == std::abs(d[i])) ++equal;
    }
    r[i] = below + (equal + 1) / 2.0;
  }
  return r;
}

// Exact two-sided signed-rank p-value: enumerate all 2^n sign assignments.
double exact_signed_rank_p(const std::vector<double>& d) {
  const auto r = midranks_of_abs(d);
  double observed = 0;
  for (std::size_t i = 0; i < d.size(); ++i) observed += d[i] > 0 ? r[i] : -r[i];
  const std::size_t n = d.size();
  long hits = 0;
  for (std::size_t mask = 0; mask < (1u << n); ++mask) {
    double t = 0;
    for (std::size_t i = 0; i < n; ++i) t += (mask >> i & 1) ? r[i] : -r[i];
    if (std::abs(t) >= std::abs(observed) - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(1u << n);
}

// Cluster-level sign-flip permutation p-value of the summed signed ranks.
double cluster_flip_p(const std::vector<std::vector<double>>& clusters) {
  std::vector<double> all;
  for (const auto& c : clusters) all.insert(all.end(), c.begin(), c.end());
  const auto r = midranks_of_abs(all);
  std::vector<double> sums;
  std::size_t k = 0;
  for (const auto& c : clusters) {
    double s = 0;
    for (double d : c) s += d > 0 ? r[k++] : -r[k++];
    sums.push_back(s);
  }
  double observed = 0;
  for (double s : sums) observed += s;
  long hits = 0;
  const std::size_t n = sums.size();
  for (std::size_t mask = 0; mask < (1u << n); ++mask) {
    double t = 0;
    for (std::size_t i = 0; i < n; ++i) t += (mask >> i & 1) ? sums[i] : -sums[i];
    if (std::abs(t) >= std::abs(observed) - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(1u << n);
}

}  // namespace

TEST_CASE("singleton clusters agree with the exact signed-rank test") {
  const std::vector<double> d{1, 2, 3, -1, -2, 4, 5, -3, 6, 7};
  const auto r = clustered_wilcoxon(singleton_samples(d));
  REQUIRE(r.has_value());
  const double exact = exact_signed_rank_p(d);
  MESSAGE("normal approximation p = " << r->p_value << ", exact p = " << exact);
  CHECK(std::abs(r->p_value - exact) < 0.02);
  CHECK(r->n_clusters == 10);
  CHECK(r->n_nonzero == 10);
}

TEST_CASE("singleton clusters reduce to the tie-corrected signed-rank statistic") {
  // Ordinary Wilcoxon: W+ - n(n+1)/4 over sqrt(n(n+1)(2n+1)/24 - sum(t^3 - t)/48).
  const std::vector<double> d{0.5, -1.5, 2.0, 2.0, -2.0, 3.0, 0.0, 4.5, 4.5, -0.25, 6.0};
  const auto r = clustered_wilcoxon(singleton_samples(d));
  REQUIRE(r.has_value());
  std::vector<double> nz;
  for (double x : d)
    if (x != 0) nz.push_back(x);
  const auto ranks = midranks_of_abs(nz);
  const double n = static_cast<double>(nz.size());
  double w_plus = 0;
  for (std::size_t i = 0; i < nz.size(); ++i)
    if (nz[i] > 0) w_plus += ranks[i];
  const double ties = (27 - 3) + (8 - 2);  // |2| three times, |4.5| twice
  const double z = (w_plus - n * (n + 1) / 4) / std::sqrt(n * (n + 1) * (2 * n + 1) / 24 - ties / 48);
  CHECK(r->z == doctest::Approx(z).epsilon(1e-12));
  CHECK(r->p_value == doctest::Approx(std::erfc(std::abs(z) / std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("antisymmetric clusters give statistic 0 and p = 1") {
  std::vector<PairedSample> s;
  for (int c = 0; c < 6; ++c) {
    s.push_back({"s" + std::to_string(c), 1.0 + c, 0.0});
    s.push_back({"s" + std::to_string(c), 0.0, 1.0 + c});
  }
  s.push_back({"s9", 3.0, 0.0});
  s.push_back({"s9", 0.0, 3.0});
  const auto r = clustered_wilcoxon(s);
  REQUIRE(r.has_value());
  CHECK(r->statistic == 0.0);
  CHECK(r->p_value == doctest::Approx(1.0));
}

TEST_CASE("one-direction dominance across 5 clusters of 3") {
  std::vector<std::vector<double>> clusters;
  std::vector<PairedSample> s;
  double v = 1;
  for (int c = 0; c < 5; ++c) {
    clusters.emplace_back();
    for (int k = 0; k < 3; ++k, ++v) {
      clusters.back().push_back(v);
      s.push_back({"subject" + std::to_string(c), 10 + v, 10});
    }
  }
  const auto r = clustered_wilcoxon(s);
  REQUIRE(r.has_value());
  const double perm = cluster_flip_p(clusters);
  MESSAGE("clustered p = " << r->p_value << ", cluster sign-flip p = " << perm);
  CHECK(r->p_value < 0.05);
  CHECK(std::abs(r->p_value - perm) < 0.02);
  CHECK(r->n_clusters == 5);
}

TEST_CASE("p-value is invariant to cluster relabeling and positive rescaling") {
  sct::Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PairedSample> s;
    for (int c = 0; c < 8; ++c)
      for (int k = 0; k < 3; ++k)
        s.push_back({"c" + std::to_string(c), std::round(rng.uniform(0, 5)), std::round(rng.uniform(0, 5))});
    const auto base = clustered_wilcoxon(s);
    if (!base) continue;
    auto relabeled = s;
    for (auto& x : relabeled) x.cluster_id = "z" + x.cluster_id + "q";
    std::reverse(relabeled.begin(), relabeled.end());
    auto scaled = s;
    for (auto& x : scaled) x.processed *= 3.7, x.sparse *= 3.7;
    CHECK(clustered_wilcoxon(relabeled)->p_value == doctest::Approx(base->p_value).epsilon(1e-12));
    CHECK(clustered_wilcoxon(scaled)->p_value == doctest::Approx(base->p_value).epsilon(1e-12));
    CHECK(base->p_value >= 0.0);
    CHECK(base->p_value <= 1.0);
  }
}

TEST_CASE("undefined cases are signalled") {
  std::vector<PairedSample> zeros{{"a", 1, 1}, {"b", 2, 2}, {"c", 3, 3}};
  CHECK_FALSE(clustered_wilcoxon(zeros).has_value());
  std::vector<PairedSample> one{{"a", 1, 0}, {"a", 2, 0}, {"b", 3, 3}};
  CHECK_FALSE(clustered_wilcoxon(one).has_value());
  std::vector<PairedSample> bad{{"a", NAN, 0}, {"b", 1, 0}};
  CHECK_THROWS_AS(clustered_wilcoxon(bad), sct::DataError);
}

TEST_CASE("mean with Student-t interval") {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  const auto m = mean_ci(v);
  CHECK(m.mean == 5.0);
  // sd = sqrt(32/7); t(0.975, 7) = 2.364624251592785
  const double half = 2.364624251592785 * std::sqrt(32.0 / 7.0) / std::sqrt(8.0);
  CHECK(*m.low == doctest::Approx(5.0 - half).epsilon(1e-10));
  CHECK(*m.high == doctest::Approx(5.0 + half).epsilon(1e-10));
  const auto single = mean_ci(std::vector<double>{3.0});
  CHECK(single.mean == 3.0);
  CHECK_FALSE(single.low.has_value());
  CHECK_THROWS_AS(mean_ci(std::vector<double>{}), sct::DataError);
}
