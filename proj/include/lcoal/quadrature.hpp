#pragma once

// Globally adaptive Gauss-Kronrod (10/21 points) over a list of panels. The
// nodes and weights come from Boost; the rule is applied here because Boost
// 1.74 reports the error estimate without the interval half-width.

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <span>
#include <sstream>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lcoal/errors.hpp"

namespace lcoal::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;
  double l1 = 0.0;
  int intervals = 0;
};

struct Options {
  double rel_tol = 1e-10;
  int max_intervals = 2000;
};

namespace detail {

struct Piece {
  double a, b, value, error, l1;
  bool operator<(const Piece& o) const noexcept { return error < o.error; }
};

template <class F>
Piece rule(F& f, double a, double b) {
  const auto& kx = boost::math::quadrature::gauss_kronrod<double, 21>::abscissa();
  const auto& kw = boost::math::quadrature::gauss_kronrod<double, 21>::weights();
  const auto& gw = boost::math::quadrature::gauss<double, 10>::weights();
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double f0 = f(mid);
  double kron = kw[0] * f0;
  double gauss = 0.0;
  double l1 = kw[0] * std::fabs(f0);
  for (std::size_t i = 1; i < kx.size(); ++i) {
    const double fl = f(mid - half * kx[i]);
    const double fr = f(mid + half * kx[i]);
    kron += kw[i] * (fl + fr);
    l1 += kw[i] * (std::fabs(fl) + std::fabs(fr));
    // Odd Kronrod nodes are the Gauss nodes.
    if (i % 2 == 1) gauss += gw[i / 2] * (fl + fr);
  }
  const double err = std::fabs(kron - gauss) * half;
  return {a, b, kron * half, std::max(err, 2.0 * std::numeric_limits<double>::epsilon() * l1 * half), l1 * half};
}

}  // namespace detail

/// Integrates f over consecutive panels [edges[i], edges[i+1]].
template <class F>
Result integrate_panels(F&& f, std::span<const double> edges, const Options& opt = {}) {
  std::priority_queue<detail::Piece> heap;
  double value = 0.0;
  double error = 0.0;
  double l1 = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (!(edges[i + 1] > edges[i])) continue;
    detail::Piece p = detail::rule(f, edges[i], edges[i + 1]);
    value += p.value;
    error += p.error;
    l1 += p.l1;
    heap.push(p);
  }
  int intervals = static_cast<int>(heap.size());
  // Roundoff floor: below this the error estimates are noise.
  auto done = [&] { return error <= std::max(opt.rel_tol * l1, 1e-15 * l1); };
  while (!heap.empty() && !done() && intervals < opt.max_intervals) {
    const detail::Piece p = heap.top();
    heap.pop();
    const double mid = 0.5 * (p.a + p.b);
    if (!(mid > p.a && mid < p.b)) {
      // Interval cannot be split further; keep its contribution as is.
      continue;
    }
    const detail::Piece left = detail::rule(f, p.a, mid);
    const detail::Piece right = detail::rule(f, mid, p.b);
    value += left.value + right.value - p.value;
    error += left.error + right.error - p.error;
    l1 += left.l1 + right.l1 - p.l1;
    heap.push(left);
    heap.push(right);
    ++intervals;
  }
  // Re-sum to shed the drift of the running updates.
  value = 0.0;
  error = 0.0;
  l1 = 0.0;
  std::vector<detail::Piece> rest;
  while (!heap.empty()) {
    rest.push_back(heap.top());
    heap.pop();
  }
  std::sort(rest.begin(), rest.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
  for (const auto& p : rest) {
    value += p.value;
    error += p.error;
    l1 += p.l1;
  }
  if (!std::isfinite(value)) throw Error(ErrorCode::QuadratureFailure, "non-finite integral");
  if (error > 10.0 * std::max(opt.rel_tol * l1, 1e-15 * l1) && error > 1e-300) {
    std::ostringstream os;
    os << "error estimate " << error << " exceeds tolerance " << opt.rel_tol << " relative to L1 norm " << l1
       << " after " << intervals << " intervals";
    throw Error(ErrorCode::QuadratureFailure, os.str());
  }
  return {value, error, l1, intervals};
}

template <class F>
Result integrate(F&& f, double a, double b, const Options& opt = {}) {
  const double edges[2] = {a, b};
  return integrate_panels(std::forward<F>(f), std::span<const double>(edges, 2), opt);
}

/// Sorted, deduplicated panel edges from [a, b] plus interior cut points.
inline std::vector<double> make_edges(double a, double b, std::span<const double> cuts) {
  std::vector<double> edges{a, b};
  for (double c : cuts) {
    if (c > a && c < b) edges.push_back(c);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace lcoal::quad
