#pragma once

// Monte-Carlo summaries: batch-means standard errors, one-sample KS against a
// centred normal, chi-square comparisons and total-variation distance of
// histograms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "lcoal/detail/numerics.hpp"
#include "lcoal/errors.hpp"

namespace lcoal::stats {

/// Estimate with a standard error from batch means.
struct Estimate {
  double value = 0.0;
  double se = 0.0;

  /// |value - target| in standard errors (infinite when se = 0 and off target).
  double z(double target) const {
    const double d = std::fabs(value - target);
    if (se > 0.0) return d / se;
    return d == 0.0 ? 0.0 : detail::kInf;
  }
  bool within(double target, double k_se) const { return z(target) <= k_se; }
};

inline double mean(std::span<const double> x) {
  detail::CompensatedSum s;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s.value() / static_cast<double>(x.size());
}

/// Unbiased sample covariance.
inline double covariance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::DomainError, "covariance needs two equal samples of size >= 2");
  const double mx = mean(x);
  const double my = mean(y);
  detail::CompensatedSum s;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s.value() / static_cast<double>(x.size() - 1);
}

inline double variance(std::span<const double> x) { return covariance(x, x); }

namespace detail {

// Splits [0, n) into `batches` contiguous, nearly equal ranges, applies stat
// to each, and returns the overall statistic with the batch-means error.
template <class Stat>
Estimate batched(std::size_t n, std::size_t batches, Stat&& stat) {
  if (batches < 2) throw Error(ErrorCode::DomainError, "need at least two batches");
  if (n < 2 * batches) throw Error(ErrorCode::DomainError, "too few samples for the batch count");
  std::vector<double> per(batches);
  for (std::size_t i = 0; i < batches; ++i) per[i] = stat(i * n / batches, (i + 1) * n / batches);
  const double spread = std::sqrt(variance(per) / static_cast<double>(batches));
  return {stat(0, n), spread};
}

}  // namespace detail

inline constexpr std::size_t kDefaultBatches = 20;

inline Estimate batch_mean(std::span<const double> x, std::size_t batches = kDefaultBatches) {
  return detail::batched(x.size(), batches, [&](std::size_t a, std::size_t b) { return mean(x.subspan(a, b - a)); });
}

inline Estimate batch_covariance(std::span<const double> x, std::span<const double> y,
                                 std::size_t batches = kDefaultBatches) {
  if (x.size() != y.size()) throw Error(ErrorCode::DomainError, "covariance samples differ in size");
  return detail::batched(x.size(), batches, [&](std::size_t a, std::size_t b) {
    return covariance(x.subspan(a, b - a), y.subspan(a, b - a));
  });
}

inline Estimate batch_variance(std::span<const double> x, std::size_t batches = kDefaultBatches) {
  return batch_covariance(x, x, batches);
}

/// Kolmogorov tail Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample KS against N(0, variance). The p-value uses the asymptotic
/// Kolmogorov law with Stephens' finite-n correction.
inline KsResult ks_normal(std::span<const double> sample, double variance_ref) {
  if (sample.empty()) throw Error(ErrorCode::DomainError, "KS on an empty sample");
  if (!(variance_ref > 0.0)) throw Error(ErrorCode::DomainError, "KS reference variance must be > 0");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const boost::math::normal_distribution<double> ref(0.0, std::sqrt(variance_ref));
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = boost::math::cdf(ref, x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

using Histogram = std::map<std::int64_t, std::uint64_t>;

inline Histogram histogram(std::span<const std::int64_t> x) {
  Histogram h;
  for (auto v : x) ++h[v];
  return h;
}

inline double total_variation(const Histogram& a, const Histogram& b) {
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [k, v] : a) na += static_cast<double>(v);
  for (const auto& [k, v] : b) nb += static_cast<double>(v);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::DomainError, "TV distance of an empty histogram");
  std::map<std::int64_t, double> diff;
  for (const auto& [k, v] : a) diff[k] += static_cast<double>(v) / na;
  for (const auto& [k, v] : b) diff[k] -= static_cast<double>(v) / nb;
  double s = 0.0;
  for (const auto& [k, d] : diff) s += std::fabs(d);
  return 0.5 * s;
}

struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

inline double chi_square_sf(double stat, double dof) {
  if (dof <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), stat));
}

/// Two-sample chi-square homogeneity test of two histograms on the union of
/// their supports.
inline ChiSquareResult chi_square_two_sample(const Histogram& a, const Histogram& b) {
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [k, v] : a) na += static_cast<double>(v);
  for (const auto& [k, v] : b) nb += static_cast<double>(v);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::DomainError, "chi-square on an empty histogram");
  std::map<std::int64_t, std::pair<double, double>> cells;
  for (const auto& [k, v] : a) cells[k].first = static_cast<double>(v);
  for (const auto& [k, v] : b) cells[k].second = static_cast<double>(v);
  const double ka = std::sqrt(nb / na);
  const double kb = std::sqrt(na / nb);
  ChiSquareResult r;
  for (const auto& [k, ab] : cells) {
    const double d = ka * ab.first - kb * ab.second;
    r.statistic += d * d / (ab.first + ab.second);
  }
  r.dof = static_cast<double>(cells.size()) - 1.0;
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

/// Pearson goodness of fit of observed counts against probabilities. Cells
/// with expected count below `min_expected` are pooled into one.
inline ChiSquareResult chi_square_gof(const Histogram& observed, const std::map<std::int64_t, double>& probs,
                                      double min_expected = 5.0) {
  double n = 0.0;
  for (const auto& [k, v] : observed) n += static_cast<double>(v);
  if (n == 0.0) throw Error(ErrorCode::DomainError, "chi-square on an empty histogram");
  ChiSquareResult r;
  double pooled_obs = n;
  double pooled_exp = n;
  int cells = 0;
  for (const auto& [k, p] : probs) {
    const double e = n * p;
    if (e < min_expected) continue;
    const auto it = observed.find(k);
    const double o = it == observed.end() ? 0.0 : static_cast<double>(it->second);
    r.statistic += (o - e) * (o - e) / e;
    pooled_obs -= o;
    pooled_exp -= e;
    ++cells;
  }
  if (pooled_exp >= min_expected || pooled_obs > 0.0) {
    const double e = std::max(pooled_exp, 1e-300);
    r.statistic += (pooled_obs - e) * (pooled_obs - e) / e;
    ++cells;
  }
  r.dof = static_cast<double>(cells - 1);
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

}  // namespace lcoal::stats
