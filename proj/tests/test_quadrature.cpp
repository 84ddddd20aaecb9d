#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "lcoal/errors.hpp"
#include "lcoal/quadrature.hpp"

using namespace lcoal;

TEST(Quadrature, Polynomials) {
  const auto r = quad::integrate([](double x) { return x * x * x - 2.0 * x; }, -1.0, 3.0);
  EXPECT_NEAR(r.value, 20.0 - 8.0, 1e-12);
}

TEST(Quadrature, SmoothOscillatory) {
  const auto r = quad::integrate([](double x) { return std::cos(20.0 * x); }, 0.0, 1.0);
  EXPECT_NEAR(r.value, std::sin(20.0) / 20.0, 1e-13);
}

TEST(Quadrature, EndpointSingularity) {
  const auto r = quad::integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, {1e-10, 2000});
  EXPECT_NEAR(r.value, 2.0, 1e-8);
}

// A tiny interval whose integrand is huge: the error estimate must scale with
// the interval width, or refinement never terminates.
TEST(Quadrature, ErrorScalesWithWidth) {
  const double a = 1e-9;
  const double b = 2e-9;
  const auto r = quad::integrate([](double x) { return 1e12 * x; }, a, b);
  EXPECT_NEAR(r.value, 0.5e12 * (b * b - a * a), 1e-12 * r.value);
  EXPECT_LE(r.intervals, 2);
}

TEST(Quadrature, PanelsSumToWhole) {
  auto f = [](double x) { return std::exp(-x) * std::sin(x); };
  const std::vector<double> cuts{0.1, 1.0, 5.0};
  const auto edges = quad::make_edges(0.0, 10.0, cuts);
  const auto r = quad::integrate_panels(f, edges);
  const double exact = 0.5 * (1.0 - std::exp(-10.0) * (std::sin(10.0) + std::cos(10.0)));
  EXPECT_NEAR(r.value, exact, 1e-13);
}

TEST(Quadrature, NonFiniteThrows) {
  try {
    quad::integrate([](double x) { return x > 0.5 ? std::nan("") : 1.0; }, 0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::QuadratureFailure);
  }
}

TEST(Quadrature, UnresolvableThrows) {
  quad::Options opt;
  opt.max_intervals = 8;
  try {
    quad::integrate([](double x) { return std::sin(1.0 / x); }, 1e-6, 1.0, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::QuadratureFailure);
  }
}
