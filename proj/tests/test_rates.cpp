#include <cmath>
#include <numbers>
#include <thread>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include "lcoal/rates.hpp"

using namespace lcoal;

namespace {

const DrivingMeasure kKingman = DrivingMeasure::kingman();
const DrivingMeasure kAtom06 = DrivingMeasure::validate(0.5, {{0.6, 0.5}});
const DrivingMeasure kAtom1 = DrivingMeasure::validate(0.5, {{1.0, 0.5}});
const DrivingMeasure kUniform = DrivingMeasure::validate(0.5, {}, {{1.0, 1.0, 0.5}});
const DrivingMeasure kCritical = DrivingMeasure::validate(0.5, {}, {{0.5, 1.5, 0.5}});
const DrivingMeasure kMixed = DrivingMeasure::validate(0.3, {{0.2, 0.1}, {1.0, 0.1}}, {{0.5, 1.5, 0.3}, {2.0, 3.0, 0.2}});

std::vector<DrivingMeasure> all_measures() { return {kKingman, kAtom06, kAtom1, kUniform, kCritical, kMixed}; }

// (qy - 1 + (1-y)^q) / y^2 in long double, by its binomial series when qy is
// small.
long double direct_integrand(long double q, long double y) {
  if (q * y < 1e-3L) {
    long double term = q * (q - 1) / 2;
    long double s = term;
    for (int j = 3; j < 12; ++j) {
      term *= -(q - j + 1) * y / j;
      s += term;
    }
    return s;
  }
  return (q * y + std::expm1(q * std::log1p(-y))) / (y * y);
}

long double beta_density(long double a, long double b, long double y) {
  return std::pow(y, a - 1) * std::pow(1 - y, b - 1) / boost::math::beta(a, b);
}

// Psi_1 for a single Beta(a, b) by tanh-sinh on the raw integrand.
double psi1_beta_direct(double a, double b, double q) {
  boost::math::quadrature::tanh_sinh<long double> ts;
  auto f = [&](long double y) { return direct_integrand(q, y) * beta_density(a, b, y); };
  const long double split = 1.0L / q;
  return static_cast<double>(ts.integrate(f, 0.0L, split, 1e-14L) + ts.integrate(f, split, 1.0L, 1e-14L));
}

// Psi_1(q) = q(q-1) int int_0^1 int_0^1 s (1 - r s y)^(q-2) dr ds Lambda_1(dy),
// with the r integral done in closed form, leaving
// q int (1/y) int_0^1 (1 - (1 - s y)^(q-1)) ds Lambda_1(dy).
long double inner_s(long double q, long double y) {
  boost::math::quadrature::tanh_sinh<long double> ts;
  auto g = [&](long double s) { return -std::expm1((q - 1) * std::log1p(-s * y)); };
  const long double knee = std::min(1.0L, 1.0L / (q * y));
  long double v = ts.integrate(g, 0.0L, knee, 1e-13L);
  if (knee < 1.0L) v += ts.integrate(g, knee, 1.0L, 1e-13L);
  return q * v / y;
}

double psi1_beta_double_integral(double a, double b, double q) {
  boost::math::quadrature::tanh_sinh<long double> ts;
  auto f = [&](long double y) { return inner_s(q, y) * beta_density(a, b, y); };
  const long double split = 1.0L / q;
  return static_cast<double>(ts.integrate(f, 0.0L, split, 1e-11L) + ts.integrate(f, split, 1.0L, 1e-11L));
}

std::vector<double> q_grid() { return {1.0, 1.5, 2.0, 3.0, 7.5, 10.0, 50.0, 100.0, 1e3, 1e4, 1e5, 1e6}; }

}  // namespace

TEST(Rates, PsiExamples) {
  EXPECT_DOUBLE_EQ(RateFunctional(kKingman).psi(3.0), 3.0);
  EXPECT_NEAR(RateFunctional(kAtom1).psi(2.0), 1.0, 1e-14);
  EXPECT_THROW(RateFunctional(kKingman).psi(0.5), Error);
}

TEST(Rates, PsiCriticalBetaMatchesDirectQuadrature) {
  const RateFunctional rf(kCritical);
  const double q = 1e4;
  const double oracle = 0.5 * q * (q - 1) / 2 + 0.5 * psi1_beta_direct(0.5, 1.5, q);
  EXPECT_NEAR(rf.psi(q), oracle, 1e-8 * oracle);
}

TEST(Rates, Psi1MatchesDoubleIntegralForm) {
  for (auto [a, b] : {std::pair{0.5, 1.5}, {1.0, 1.0}, {2.0, 3.0}}) {
    const RateFunctional rf(DrivingMeasure::validate(0.5, {}, {{a, b, 0.5}}));
    for (double q : {2.0, 10.0, 100.0, 1e3, 1e4}) {
      const double oracle = psi1_beta_double_integral(a, b, q);
      EXPECT_NEAR(rf.psi1(q), oracle, 1e-6 * oracle) << a << ',' << b << " q=" << q;
    }
  }
}

TEST(Rates, Psi1AtomClosedForm) {
  const RateFunctional rf(kAtom06);
  for (double q : q_grid()) {
    const double y = 0.6;
    const double exact = (q * y - 1.0 + std::pow(1.0 - y, q)) / (y * y);
    EXPECT_NEAR(rf.psi1(q), exact, 1e-13 * std::max(1.0, exact)) << q;
  }
}

TEST(Rates, PsiStarExamples) {
  EXPECT_DOUBLE_EQ(RateFunctional(kKingman).psi_star(2.0), 2.0);
  for (const auto& m : all_measures()) EXPECT_EQ(RateFunctional(m).psi_star(0.0), 0.0);
  EXPECT_NEAR(RateFunctional(kAtom1).psi_star(1.0), 0.25 + 0.5 * std::exp(-1.0), 1e-14);
  EXPECT_NEAR(RateFunctional(kAtom1).psi_star(1.0), 0.4339397, 1e-7);
  EXPECT_THROW(RateFunctional(kKingman).psi_star(-1.0), Error);
}

TEST(Rates, PsiShapeInvariants) {
  for (const auto& m : all_measures()) {
    const RateFunctional rf(m);
    EXPECT_EQ(rf.psi(1.0), 0.0);
    double prev = 0.0;
    double prev_ratio = 0.0;
    for (double q = 1.25; q < 1e6; q *= 1.7) {
      const double p = rf.psi(q);
      EXPECT_GT(p, prev) << q;
      EXPECT_GE(p / q, prev_ratio * (1 - 1e-12)) << q;
      prev = p;
      prev_ratio = p / q;
    }
  }
}

TEST(Rates, PsiStarSandwich) {
  for (const auto& m : all_measures()) {
    const RateFunctional rf(m);
    for (double q = 1.0; q <= 1e6; q *= 1.5) {
      const double gap = rf.psi_star(q) - rf.psi(q);
      EXPECT_GE(gap, 0.0) << q;
      // Pure Kingman sits on the bound; the gap is a difference of O(q^2) terms.
      EXPECT_LE(gap, q / 2 + 1e-13 * rf.psi_star(q)) << q;
    }
  }
}

TEST(Rates, QuadraticGrowth) {
  for (const auto& m : all_measures()) {
    const RateFunctional rf(m);
    double prev_dev = 1.0;
    double prev_psi1 = 1.0;
    for (double q : {1e2, 1e3, 1e4, 1e5, 1e6}) {
      const double dev = std::fabs(rf.psi(q) / (q * q) - rf.c() / 2);
      EXPECT_LT(dev, prev_dev) << q;
      prev_dev = dev;
      if (!m.is_pure_kingman()) {
        const double r = rf.psi1(q) / (q * q);
        EXPECT_LT(r, prev_psi1) << q;
        prev_psi1 = r;
      }
    }
    EXPECT_LT(prev_dev, 1e-2);
  }
}

TEST(Rates, Psi1OverQ32) {
  EXPECT_EQ(RateFunctional(kKingman).psi1_over_q32(100.0), 0.0);
  const RateFunctional atom(kAtom06);
  const double a4 = atom.psi1_over_q32(1e4);
  const double a5 = atom.psi1_over_q32(1e5);
  const double a6 = atom.psi1_over_q32(1e6);
  // Psi_1(q) ~ q / y for an atom at y.
  EXPECT_NEAR(a6, 1.0 / (0.6 * std::sqrt(1e6)), 1e-8);
  EXPECT_GT(a4, a5);
  EXPECT_GT(a5, a6);
  EXPECT_NEAR(a5 / a6, std::sqrt(10.0), 1e-2);
}

// For Beta(1/2, 3/2), Psi_1(q) / q^(3/2) -> Gamma(-3/2) / B(1/2, 3/2) = 8 / (3 sqrt(pi)).
TEST(Rates, GrowthConstantOfCriticalBeta) {
  const double exact = 8.0 / (3.0 * std::sqrt(std::numbers::pi));
  const auto est = estimate_growth_constant(RateFunctional(kCritical));
  EXPECT_NEAR(est.estimate, exact, 1e-3 * exact);
  EXPECT_LT(std::fabs(est.last_difference), std::fabs(est.previous_difference));
  for (double v : est.values) EXPECT_GT(v, 0.0);
}

TEST(Rates, LambdaExamples) {
  const RateFunctional k(kKingman);
  EXPECT_EQ(k.lambda_bk(10, 2), 1.0);
  EXPECT_EQ(k.lambda_bk(10, 3), 0.0);
  EXPECT_NEAR(RateFunctional(DrivingMeasure::validate(0.5, {{0.5, 0.5}})).lambda_bk(4, 3), 0.125, 1e-15);
  EXPECT_NEAR(RateFunctional(kUniform).lambda_bk(5, 4), 0.5 / 12.0, 1e-15);
  EXPECT_THROW(k.lambda_bk(4, 5), Error);
  EXPECT_THROW(k.lambda_bk(1, 1), Error);
}

TEST(Rates, LambdaMatchesQuadrature) {
  const RateFunctional rf(kMixed);
  boost::math::quadrature::tanh_sinh<double> ts;
  for (auto [b, k] : {std::pair{5, 2}, {5, 4}, {20, 7}, {60, 3}, {60, 60}}) {
    double oracle = k == 2 ? kMixed.kingman_mass() : 0.0;
    for (const auto& a : kMixed.atoms()) oracle += a.weight * std::pow(a.location, k - 2) * std::pow(1 - a.location, b - k);
    for (const auto& bc : kMixed.betas()) {
      oracle += bc.weight * ts.integrate([&](double r) {
        return std::pow(r, k - 2) * std::pow(1 - r, b - k) * std::pow(r, bc.alpha - 1) * std::pow(1 - r, bc.beta - 1) /
               boost::math::beta(bc.alpha, bc.beta);
      }, 0.0, 1.0, 1e-13);
    }
    EXPECT_NEAR(rf.lambda_bk(b, k), oracle, 1e-10 * oracle) << b << ',' << k;
  }
}

TEST(Rates, TransitionRowExamples) {
  const auto row_ptr = RateFunctional(kKingman).transition_row(4);
  const auto& row = *row_ptr;
  EXPECT_EQ(row.rate(2), 6.0);
  EXPECT_EQ(row.rate(3), 0.0);
  EXPECT_EQ(row.rate(4), 0.0);
  EXPECT_EQ(row.total, 6.0);
  const auto atom_ptr = RateFunctional(kAtom1).transition_row(3);
  const auto& atom = *atom_ptr;
  EXPECT_NEAR(atom.rate(2), 1.5, 1e-15);
  EXPECT_NEAR(atom.rate(3), 0.5, 1e-15);
  EXPECT_NEAR(atom.total, 2.0, 1e-15);
}

TEST(Rates, MeanDecrementIdentity) {
  for (const auto& m : all_measures()) {
    const RateFunctional rf(m);
    for (std::int64_t b : {2, 3, 5, 10, 50, 200, 1000, 5000}) {
      const auto row_ptr = rf.transition_row(b);
      const auto& row = *row_ptr;
      EXPECT_NEAR(row.mean_decrement(), rf.psi(static_cast<double>(b)), 1e-8 * rf.psi(static_cast<double>(b))) << b;
      for (double r : row.rates) EXPECT_GE(r, 0.0);
      EXPECT_GT(row.total, 0.0);
    }
  }
}

TEST(Rates, RowCacheIsBoundedAndThreadSafe) {
  const RateFunctional rf(kMixed, 16);
  std::vector<double> serial;
  for (int b = 2; b < 200; ++b) serial.push_back(RateFunctional(kMixed).transition_row(b)->total);
  std::vector<std::vector<double>> got(4);
  std::vector<std::thread> pool;
  for (int w = 0; w < 4; ++w) {
    pool.emplace_back([&, w] {
      for (int b = 2; b < 200; ++b) got[static_cast<std::size_t>(w)].push_back(rf.transition_row(b)->total);
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& g : got) EXPECT_EQ(g, serial);
  EXPECT_LE(rf.cached_rows(), 16u);
}
