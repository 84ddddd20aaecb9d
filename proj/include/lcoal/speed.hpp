#pragma once

// Speed of coming down from infinity: v_t solves t = int_{v_t}^inf dq / Psi(q)
// (v* uses Psi* instead), and w_t = 2 / (c t).

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>

#include "lcoal/errors.hpp"
#include "lcoal/quadrature.hpp"
#include "lcoal/rates.hpp"

namespace lcoal {

enum class SpeedVariant { V, V_STAR, W };

inline const char* to_string(SpeedVariant v) noexcept {
  switch (v) {
    case SpeedVariant::V: return "V";
    case SpeedVariant::V_STAR: return "V_STAR";
    case SpeedVariant::W: return "W";
  }
  return "?";
}

class SpeedFunction {
 public:
  SpeedFunction(RateFunctional rf, SpeedVariant variant, double tolerance = 1e-10)
      : rf_(std::move(rf)), variant_(variant), tolerance_(tolerance), state_(std::make_shared<State>()) {
    if (!(tolerance > 0.0 && tolerance < 1e-2)) throw Error(ErrorCode::DomainError, "speed tolerance out of range");
  }

  const RateFunctional& rates() const noexcept { return rf_; }
  SpeedVariant variant() const noexcept { return variant_; }
  double tolerance() const noexcept { return tolerance_; }
  double c() const noexcept { return rf_.c(); }

  double w(double t) const {
    if (!(t > 0.0)) throw Error(ErrorCode::DomainError, "w requires t > 0");
    return 2.0 / (c() * t);
  }

  /// T(v) = int_v^inf dq / Psi(q) (or Psi*). Undefined for the W variant.
  double time_to(double v) const {
    require_integral_variant();
    const double q0 = floor_value();
    if (!(v > q0)) throw Error(ErrorCode::DomainError, "time_to requires v above the lower end of the domain");
    const double x = std::log(v - q0);
    const int j0 = static_cast<int>(std::floor(x / std::log(10.0))) + 1;
    const int j_end = std::max(j0, tail_exponent());

    double total = partial(x, j0 * std::log(10.0));
    for (int j = j0; j < j_end; ++j) total += panel(j);
    total += kingman_tail(q0 + std::pow(10.0, j_end));
    return total;
  }

  /// v_t for t > 0; memoized per exact t.
  double solve(double t) const {
    if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorCode::DomainError, "solve requires finite t > 0");
    if (variant_ == SpeedVariant::W) return w(t);
    {
      std::lock_guard lock(state_->mu);
      auto it = state_->solutions.find(t);
      if (it != state_->solutions.end()) return it->second;
    }
    const double v = solve_uncached(t);
    std::lock_guard lock(state_->mu);
    state_->solutions.emplace(t, v);
    return v;
  }

  double operator()(double t) const { return solve(t); }

 private:
  struct State {
    std::mutex mu;
    std::map<int, double> panels;
    std::map<double, double> solutions;
    std::once_flag tail_once;
    int tail_exponent = 0;
  };

  void require_integral_variant() const {
    if (variant_ == SpeedVariant::W) throw Error(ErrorCode::DomainError, "W speed is closed-form");
  }

  double floor_value() const noexcept { return variant_ == SpeedVariant::V ? 1.0 : 0.0; }

  // Psi(q0 + d), taking the excess d over the lower end of the domain.
  double rate_excess(double d) const {
    return variant_ == SpeedVariant::V ? rf_.psi_excess(d) : rf_.psi_star(d);
  }

  double non_kingman_share(double q) const {
    const double c = this->c();
    if (variant_ == SpeedVariant::V) return rf_.psi_non_kingman(q) / (c * q * (q - 1.0) / 2.0);
    return rf_.psi_star_non_kingman(q) / (c * q * q / 2.0);
  }

  // Analytic integral of 1 / (c q(q-1)/2) (or 1 / (c q^2/2)) over [M, inf).
  double kingman_tail(double m) const {
    const double c = this->c();
    if (variant_ == SpeedVariant::V) return -(2.0 / c) * std::log1p(-1.0 / m);
    return 2.0 / (c * m);
  }

  // Smallest decade exponent j with M = q0 + 10^j where the non-Kingman part
  // of the rate is below `tolerance` of the Kingman part.
  int tail_exponent() const {
    std::call_once(state_->tail_once, [this] {
      const double q0 = floor_value();
      for (int j = 1; j <= 300; ++j) {
        const double m = q0 + std::pow(10.0, j);
        if (non_kingman_share(m) < tolerance_) {
          state_->tail_exponent = j;
          return;
        }
      }
      state_->tail_exponent = -1;
    });
    if (state_->tail_exponent < 0) {
      throw Error(ErrorCode::ConvergenceFailure, "no cut-off M found where the Kingman part dominates");
    }
    return state_->tail_exponent;
  }

  quad::Options panel_options() const {
    quad::Options o;
    o.rel_tol = tolerance_;
    return o;
  }

  // Integral of (q - q0) / Psi(q) ds over s in [a, b], q = q0 + e^s.
  double partial(double a, double b) const {
    if (!(b > a)) return 0.0;
    auto f = [this](double s) {
      const double d = std::exp(s);
      return d / rate_excess(d);
    };
    return quad::integrate(f, a, b, panel_options()).value;
  }

  double panel(int j) const {
    {
      std::lock_guard lock(state_->mu);
      auto it = state_->panels.find(j);
      if (it != state_->panels.end()) return it->second;
    }
    const double ln10 = std::log(10.0);
    const double value = partial(j * ln10, (j + 1) * ln10);
    std::lock_guard lock(state_->mu);
    state_->panels.emplace(j, value);
    return value;
  }

  double solve_uncached(double t) const {
    const double q0 = floor_value();
    const double wt = w(t);
    // Root-find in x = log(v - q0), where T is smooth and monotone.
    double lo = std::log(std::max(q0 + 1e-9, 0.1 * wt) - q0);
    double hi = std::log(10.0 * wt - q0);
    if (!(hi > lo)) hi = lo + std::log(10.0);
    auto f = [&](double x) { return time_to(q0 + std::exp(x)) - t; };

    double f_lo = f(lo);
    for (int i = 0; f_lo < 0.0; ++i) {
      if (i > 60) throw Error(ErrorCode::ConvergenceFailure, "could not bracket v from below");
      hi = lo;
      lo -= std::log(10.0);
      f_lo = f(lo);
    }
    double f_hi = f(hi);
    for (int i = 0; f_hi > 0.0; ++i) {
      if (i > 60) throw Error(ErrorCode::ConvergenceFailure, "could not bracket v from above");
      lo = hi;
      f_lo = f_hi;
      hi += std::log(10.0);
      f_hi = f(hi);
    }

    double x = std::clamp(std::log(std::max(wt, q0 * 1.0 + 1e-9) - q0), lo, hi);
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    const double target = 0.1 * tolerance_ * t;
    double best_x = x;
    double best_err = detail::kInf;
    for (int iter = 0; iter < 200; ++iter) {
      const double fx = f(x);
      if (std::fabs(fx) < best_err) {
        best_err = std::fabs(fx);
        best_x = x;
      }
      if (std::fabs(fx) <= target) break;
      if (fx > 0.0) {
        lo = x;
      } else {
        hi = x;
      }
      const double d = std::exp(x);
      const double slope = -d / rate_excess(d);
      double next = x - fx / slope;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (hi - lo < 1e-15 * std::max(1.0, std::fabs(x))) break;
      x = next;
    }
    if (best_err > tolerance_ * t) {
      std::ostringstream os;
      os << "|T(v) - t| = " << best_err << " above tolerance at t = " << t;
      throw Error(ErrorCode::ConvergenceFailure, os.str());
    }
    return q0 + std::exp(best_x);
  }

  RateFunctional rf_;
  SpeedVariant variant_;
  double tolerance_;
  std::shared_ptr<State> state_;
};

/// (c t / 2) v_t - 1 scaled by t^(-1/2). Tends to -(2 sqrt 2)/(3 sqrt c) (1-c) A
/// as t -> 0 when Psi_1(q) / q^(3/2) -> A.
inline double speed_drift_ratio(const SpeedFunction& sf, double t) {
  if (sf.variant() != SpeedVariant::V) throw Error(ErrorCode::DomainError, "speed_drift_ratio needs the V speed");
  const double v = sf.solve(t);
  return (sf.c() * t / 2.0 * v - 1.0) / std::sqrt(t);
}

/// The constant -(2 sqrt 2)/(3 sqrt c) (1 - c) multiplying A in the drift.
inline double drift_coefficient(const DrivingMeasure& m) {
  return -(2.0 * std::sqrt(2.0)) / (3.0 * std::sqrt(m.kingman_mass())) * m.non_kingman_mass();
}

/// v_t / v*_t - 1.
inline double v_vstar_gap(const SpeedFunction& v, const SpeedFunction& v_star, double t) {
  if (v.variant() != SpeedVariant::V || v_star.variant() != SpeedVariant::V_STAR) {
    throw Error(ErrorCode::DomainError, "v_vstar_gap needs a V and a V_STAR speed");
  }
  return v.solve(t) / v_star.solve(t) - 1.0;
}

inline double v_vstar_gap(const RateFunctional& rf, double t, double tolerance = 1e-10) {
  return v_vstar_gap(SpeedFunction(rf, SpeedVariant::V, tolerance), SpeedFunction(rf, SpeedVariant::V_STAR, tolerance), t);
}

}  // namespace lcoal
