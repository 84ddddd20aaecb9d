#pragma once

// Rate functionals of a Lambda-coalescent with a Kingman part:
//   Psi(q)   = c q(q-1)/2 + (1-c) Psi_1(q),
//   Psi_1(q) = int (q y - 1 + (1-y)^q) / y^2  Lambda_1(dy),
//   Psi*(q)  = int (q y - 1 + exp(-q y)) / y^2 Lambda(dy),
// and the collision rates lambda_{b,k} = int r^(k-2) (1-r)^(b-k) Lambda(dr).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "lcoal/detail/lru_cache.hpp"
#include "lcoal/detail/numerics.hpp"
#include "lcoal/errors.hpp"
#include "lcoal/measure.hpp"
#include "lcoal/quadrature.hpp"

namespace lcoal {

namespace kernels {

// Below this value of q*y the kernels switch to their Taylor expansions.
inline constexpr double kTaylorCutoff = 1e-4;

/// (q y - 1 + (1-y)^q) / y^2 with q = 1 + d, continuously extended to
/// q(q-1)/2 at y = 0. Taking the excess d keeps full precision near q = 1.
inline double psi_excess(double d, double y) noexcept {
  const double q = 1.0 + d;
  if (q * y < kTaylorCutoff) {
    const double c2 = q * d / 2.0;
    const double c3 = c2 * (d - 1.0) / 3.0;
    const double c4 = c3 * (d - 2.0) / 4.0;
    return c2 - c3 * y + c4 * y * y;
  }
  if (y >= 1.0) return d;
  return (d * y + (1.0 - y) * std::expm1(d * std::log1p(-y))) / (y * y);
}

inline double psi(double q, double y) noexcept { return psi_excess(q - 1.0, y); }

/// (q y - 1 + e^(-q y)) / y^2, continuously extended to q^2/2 at y = 0.
inline double psi_star(double q, double y) noexcept {
  const double qy = q * y;
  if (qy < kTaylorCutoff) {
    const double q2 = q * q;
    return q2 / 2.0 - q2 * q * y / 6.0 + q2 * q2 * y * y / 24.0;
  }
  return (qy + std::expm1(-qy)) / (y * y);
}

}  // namespace kernels

/// Total rates C(b,k) lambda_{b,k} for k = 2..b with b blocks present.
struct TransitionRow {
  std::int64_t b = 0;
  // rates[i] is the rate of a k = i + 2 merger. The vector may stop short of
  // k = b when the remaining tail is below 1e-14 of the total.
  std::vector<double> rates;
  double total = 0.0;

  double rate(std::int64_t k) const noexcept {
    const auto i = k - 2;
    if (i < 0 || i >= static_cast<std::int64_t>(rates.size())) return 0.0;
    return rates[static_cast<std::size_t>(i)];
  }
  std::int64_t k_max() const noexcept { return static_cast<std::int64_t>(rates.size()) + 1; }

  /// sum_k (k-1) * rate(k); equals Psi(b).
  double mean_decrement() const noexcept {
    detail::CompensatedSum s;
    for (std::size_t i = 0; i < rates.size(); ++i) s += static_cast<double>(i + 1) * rates[i];
    return s.value();
  }
};

namespace detail {

// log of y^(k-2) (1-y)^(b-k); handles the atom at y = 1.
inline double atom_log_term(double y, std::int64_t b, std::int64_t k) noexcept {
  double lt = static_cast<double>(k - 2) * std::log(y);
  if (b > k) {
    if (y >= 1.0) return -kInf;
    lt += static_cast<double>(b - k) * std::log1p(-y);
  }
  return lt;
}

// log of E[r^(k-2) (1-r)^(b-k)] under Beta(alpha, beta).
inline double beta_log_term(double alpha, double beta, double log_norm, std::int64_t b, std::int64_t k) noexcept {
  return log_beta(alpha + static_cast<double>(k - 2), beta + static_cast<double>(b - k)) - log_norm;
}

inline std::vector<double> scale_cuts(double q) {
  std::vector<double> cuts;
  for (int j = -3; j <= 3; ++j) {
    const double y = std::pow(10.0, j) / q;
    if (y > 0.0 && y < 1.0) cuts.push_back(y);
  }
  return cuts;
}

}  // namespace detail

class RateFunctional {
 public:
  explicit RateFunctional(DrivingMeasure measure, std::size_t row_cache_capacity = 100000,
                          quad::Options quad_opt = default_quadrature())
      : measure_(std::move(measure)),
        quad_opt_(quad_opt),
        rows_(std::make_shared<RowCache>(row_cache_capacity)) {
    for (const BetaComponent& bc : measure_.betas()) beta_log_norm_.push_back(detail::log_beta(bc.alpha, bc.beta));
  }

  // Tighter than the speed tolerance, since Psi sits inside outer integrals.
  static quad::Options default_quadrature() {
    quad::Options o;
    o.rel_tol = 1e-12;
    return o;
  }

  const DrivingMeasure& measure() const noexcept { return measure_; }
  double c() const noexcept { return measure_.kingman_mass(); }
  const quad::Options& quadrature_options() const noexcept { return quad_opt_; }

  double psi(double q) const {
    if (!(q >= 1.0)) throw Error(ErrorCode::DomainError, "psi requires q >= 1");
    return psi_excess(q - 1.0);
  }

  /// Psi(1 + d) for d >= 0.
  double psi_excess(double d) const {
    if (!(d >= 0.0)) throw Error(ErrorCode::DomainError, "psi requires q >= 1");
    return c() * (1.0 + d) * d / 2.0 + psi_non_kingman_excess(d);
  }

  /// (1 - c) * Psi_1(q), the contribution of the non-Kingman part.
  double psi_non_kingman(double q) const {
    if (!(q >= 1.0)) throw Error(ErrorCode::DomainError, "psi requires q >= 1");
    return psi_non_kingman_excess(q - 1.0);
  }

  double psi_non_kingman_excess(double d) const {
    if (!(d >= 0.0)) throw Error(ErrorCode::DomainError, "psi requires q >= 1");
    if (measure_.is_pure_kingman() || d == 0.0) return 0.0;
    const auto cuts = detail::scale_cuts(1.0 + d);
    return integrate_non_kingman(measure_, [d](double y) { return kernels::psi_excess(d, y); }, cuts, quad_opt_);
  }

  double psi1(double q) const {
    if (measure_.is_pure_kingman()) {
      if (!(q >= 1.0)) throw Error(ErrorCode::DomainError, "psi requires q >= 1");
      return 0.0;
    }
    return psi_non_kingman(q) / measure_.non_kingman_mass();
  }

  double psi_star(double q) const {
    if (!(q >= 0.0)) throw Error(ErrorCode::DomainError, "psi_star requires q >= 0");
    return c() * q * q / 2.0 + psi_star_non_kingman(q);
  }

  double psi_star_non_kingman(double q) const {
    if (!(q >= 0.0)) throw Error(ErrorCode::DomainError, "psi_star requires q >= 0");
    if (measure_.is_pure_kingman() || q == 0.0) return 0.0;
    const auto cuts = detail::scale_cuts(q);
    return integrate_non_kingman(measure_, [q](double y) { return kernels::psi_star(q, y); }, cuts, quad_opt_);
  }

  double psi1_over_q32(double q) const {
    if (!(q >= 2.0)) throw Error(ErrorCode::DomainError, "psi1_over_q32 requires q >= 2");
    return psi1(q) / (q * std::sqrt(q));
  }

  double lambda_bk(std::int64_t b, std::int64_t k) const {
    if (b < 2 || k < 2 || k > b) throw Error(ErrorCode::DomainError, "lambda_bk requires 2 <= k <= b");
    detail::CompensatedSum s;
    if (k == 2) s += c();
    for (const Atom& a : measure_.atoms()) s += a.weight * std::exp(detail::atom_log_term(a.location, b, k));
    for (std::size_t j = 0; j < measure_.betas().size(); ++j) {
      const BetaComponent& bc = measure_.betas()[j];
      s += bc.weight * std::exp(detail::beta_log_term(bc.alpha, bc.beta, beta_log_norm_[j], b, k));
    }
    return s.value();
  }

  std::shared_ptr<const TransitionRow> transition_row(std::int64_t b) const {
    if (b < 2) throw Error(ErrorCode::DomainError, "transition_row requires b >= 2");
    if (auto hit = rows_->get(b)) return *hit;
    auto row = std::make_shared<const TransitionRow>(build_row(b));
    rows_->put(b, row);
    return row;
  }

  std::size_t cached_rows() const { return rows_->size(); }

 private:
  using RowCache = detail::LruCache<std::int64_t, std::shared_ptr<const TransitionRow>>;

  TransitionRow build_row(std::int64_t b) const {
    TransitionRow row;
    row.b = b;
    row.rates.reserve(static_cast<std::size_t>(b - 1));
    detail::CompensatedSum total;

    const bool can_truncate = measure_.atoms_only();
    double last_mode = 2.0;
    for (const Atom& a : measure_.atoms()) {
      last_mode = std::max(last_mode, std::floor(static_cast<double>(b + 1) * a.location));
    }

    for (std::int64_t k = 2; k <= b; ++k) {
      const double log_c = detail::log_choose(b, k);
      detail::CompensatedSum r;
      if (k == 2) r += c() * static_cast<double>(b) * static_cast<double>(b - 1) / 2.0;
      for (const Atom& a : measure_.atoms()) {
        r += a.weight * std::exp(log_c + detail::atom_log_term(a.location, b, k));
      }
      for (std::size_t j = 0; j < measure_.betas().size(); ++j) {
        const BetaComponent& bc = measure_.betas()[j];
        r += bc.weight * std::exp(log_c + detail::beta_log_term(bc.alpha, bc.beta, beta_log_norm_[j], b, k));
      }
      const double rk = r.value();
      row.rates.push_back(rk);
      total += rk;
      // Past every atom's mode the binomial terms decrease, so the tail is at
      // most (b - k) times the current term.
      if (can_truncate && k > 2 && static_cast<double>(k) > last_mode &&
          rk * static_cast<double>(b - k) < 1e-14 * total.value()) {
        break;
      }
    }
    row.total = total.value();
    return row;
  }

  DrivingMeasure measure_;
  quad::Options quad_opt_;
  std::vector<double> beta_log_norm_;
  std::shared_ptr<RowCache> rows_;
};

/// Psi_1(q) / q^(3/2) along a geometric grid. The estimate of
/// A = lim Psi_1(q)/q^(3/2) is the value at the largest grid point; the last
/// two successive differences indicate how settled it is.
struct GrowthConstantEstimate {
  std::vector<double> grid;
  std::vector<double> values;
  double estimate = 0.0;
  double last_difference = 0.0;
  double previous_difference = 0.0;
};

inline GrowthConstantEstimate estimate_growth_constant(const RateFunctional& rf, std::span<const double> grid) {
  GrowthConstantEstimate out;
  out.grid.assign(grid.begin(), grid.end());
  std::sort(out.grid.begin(), out.grid.end());
  for (double q : out.grid) out.values.push_back(rf.psi1_over_q32(q));
  const std::size_t n = out.values.size();
  if (n > 0) out.estimate = out.values.back();
  if (n > 1) out.last_difference = out.values[n - 1] - out.values[n - 2];
  if (n > 2) out.previous_difference = out.values[n - 2] - out.values[n - 3];
  return out;
}

inline GrowthConstantEstimate estimate_growth_constant(const RateFunctional& rf) {
  constexpr std::array<double, 6> grid{1e3, 1e4, 1e5, 1e6, 1e7, 1e8};
  return estimate_growth_constant(rf, grid);
}

}  // namespace lcoal
