#pragma once

// The Gaussian limit Z_t = (1 / (sqrt 2 t)) int_0^t u dW_u, Z_0 = 0, and its
// sqrt(c) multiple. Var Z_t = t/6 and Cov(Z_s, Z_t) = (s ^ t)^3 / (6 s t).

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lcoal/errors.hpp"
#include "lcoal/rng.hpp"

namespace lcoal {

struct LimitPath {
  std::vector<double> grid;
  std::vector<double> values;
  double scale_c = 1.0;
};

namespace detail {

inline void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw Error(ErrorCode::BadGrid, "empty time grid");
  double prev = 0.0;
  for (double t : grid) {
    if (!(t > prev) || !std::isfinite(t)) throw Error(ErrorCode::BadGrid, "grid must be positive and strictly increasing");
    prev = t;
  }
}

inline void check_scale(double scale_c) {
  if (!(scale_c >= 0.0 && scale_c <= 1.0)) throw Error(ErrorCode::DomainError, "scale_c must lie in [0, 1]");
}

}  // namespace detail

/// Exact draw of sqrt(scale_c) Z on the grid: H_t = int_0^t u dW_u has
/// independent increments of variance (b^3 - a^3)/3.
inline LimitPath sample_limit_path(std::span<const double> grid, double scale_c, Rng& rng) {
  detail::check_grid(grid);
  detail::check_scale(scale_c);
  LimitPath p{{grid.begin(), grid.end()}, std::vector<double>(grid.size()), scale_c};
  const double s = std::sqrt(scale_c);
  double h = 0.0;
  double prev3 = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    const double t3 = t * t * t;
    h += std::sqrt((t3 - prev3) / 3.0) * rng.normal();
    prev3 = t3;
    p.values[i] = s * h / (std::sqrt(2.0) * t);
  }
  return p;
}

inline double limit_covariance(double s, double t, double scale_c = 1.0) {
  if (!(s > 0.0 && t > 0.0)) throw Error(ErrorCode::DomainError, "limit_covariance needs s, t > 0");
  detail::check_scale(scale_c);
  const double m = std::min(s, t);
  return scale_c * m * m * m / (6.0 * s * t);
}

struct EulerOptions {
  double step = 1e-4;
  // Drop the -Z/s drift (gives W/sqrt 2 plus the start value).
  bool drift = true;
};

/// Euler-Maruyama for dZ = -Z/s ds + dW/sqrt 2 from Z_{t1} ~ N(0, t1/6), with
/// t1 the first grid point. Near s = t1 the step is capped at s/100 so the
/// explicit scheme stays stable when t1 is small.
inline LimitPath euler_sde_path(std::span<const double> grid, double scale_c, Rng& rng, const EulerOptions& opt = {}) {
  detail::check_grid(grid);
  detail::check_scale(scale_c);
  if (grid.front() < 1e-6) throw Error(ErrorCode::BadGrid, "Euler grid must start at t >= 1e-6");
  if (!(opt.step > 0.0)) throw Error(ErrorCode::BadGrid, "Euler step must be positive");
  LimitPath p{{grid.begin(), grid.end()}, std::vector<double>(grid.size()), scale_c};
  if (scale_c == 0.0) return p;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  double s = grid.front();
  double z = std::sqrt(s / 6.0) * rng.normal();
  p.values[0] = z;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double target = grid[i];
    while (s < target) {
      double h = std::min(opt.step, 0.01 * s);
      if (s + h > target || target - (s + h) < 1e-12 * target) h = target - s;
      const double dw = std::sqrt(h) * rng.normal();
      z += (opt.drift ? -z / s * h : 0.0) + inv_sqrt2 * dw;
      s += h;
    }
    s = target;
    p.values[i] = z;
  }
  const double k = std::sqrt(scale_c);
  for (double& v : p.values) v *= k;
  return p;
}

}  // namespace lcoal
