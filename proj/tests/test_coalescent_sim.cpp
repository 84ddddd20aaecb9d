#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "lcoal/coalescent_sim.hpp"
#include "lcoal/speed.hpp"
#include "lcoal/stats.hpp"

using namespace lcoal;

namespace {

const DrivingMeasure kKingman = DrivingMeasure::kingman();
const DrivingMeasure kAtom06 = DrivingMeasure::validate(0.5, {{0.6, 0.5}});
const DrivingMeasure kAtom1 = DrivingMeasure::validate(0.5, {{1.0, 0.5}});
const DrivingMeasure kMixed = DrivingMeasure::validate(0.3, {{0.2, 0.1}, {1.0, 0.1}}, {{0.5, 1.5, 0.3}, {2.0, 3.0, 0.2}});

constexpr std::uint64_t kSeed = 777;

SimConfig config(const DrivingMeasure& m, std::int64_t n0, double t_end, std::uint64_t stream,
                 Backend backend = Backend::CHAIN) {
  SimConfig cfg{m};
  cfg.n0 = n0;
  cfg.t_end = t_end;
  cfg.backend = backend;
  cfg.stream = {kSeed, stream};
  return cfg;
}

// First-jump sizes k over many chain runs.
stats::Histogram first_jumps(const DrivingMeasure& m, std::int64_t n0, int reps, Backend backend) {
  stats::Histogram h;
  for (int r = 0; r < reps; ++r) {
    const auto p = simulate(config(m, n0, 1e9, static_cast<std::uint64_t>(r), backend));
    ++h[n0 - p.counts.front() + 1];
  }
  return h;
}

}  // namespace

TEST(JumpKernel, MatchesTransitionRows) {
  for (const auto& m : {kKingman, kAtom06, kAtom1, kMixed}) {
    const RateFunctional rf(m);
    const JumpKernel kernel(m, 400);
    for (std::int64_t b : {2, 3, 5, 30, 400}) {
      const auto row = rf.transition_row(b);
      EXPECT_NEAR(kernel.total(b), row->total, 1e-12 * row->total) << b;
      for (std::int64_t k = 2; k <= b; ++k) {
        EXPECT_NEAR(kernel.probability(b, k), row->rate(k) / row->total, 1e-11) << b << ',' << k;
      }
    }
  }
}

TEST(JumpKernel, SampledJumpSizesFollowTheRow) {
  const JumpKernel kernel(kMixed, 20);
  const auto row = RateFunctional(kMixed).transition_row(20);
  Rng rng(StreamId{kSeed, 1});
  stats::Histogram h;
  for (int i = 0; i < 100000; ++i) ++h[kernel.sample_k(20, rng)];
  std::map<std::int64_t, double> probs;
  for (std::int64_t k = 2; k <= 20; ++k) probs[k] = row->rate(k) / row->total;
  EXPECT_GT(stats::chi_square_gof(h, probs).p_value, 0.01);
}

TEST(Chain, TwoKingmanBlocksMergeAtRateOne) {
  std::vector<double> times;
  for (int r = 0; r < 10000; ++r) {
    const auto p = simulate_chain(config(kKingman, 2, 1e9, static_cast<std::uint64_t>(r)));
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p.counts[0], 1);
    times.push_back(p.times[0]);
  }
  const auto m = stats::batch_mean(times);
  EXPECT_TRUE(m.within(1.0, 3.0)) << m.value << " +- " << m.se;
  const double tail = static_cast<double>(std::count_if(times.begin(), times.end(), [](double t) { return t > 1.0; }));
  EXPECT_NEAR(tail / 1e4, std::exp(-1.0), 3.0 * std::sqrt(0.25 / 1e4));
}

TEST(Chain, KingmanTimeToMrca) {
  const std::int64_t n = 20;
  std::vector<double> times;
  const JumpKernel kernel(kKingman, n);
  for (int r = 0; r < 10000; ++r) {
    const auto p = simulate_chain(config(kKingman, n, 1e9, static_cast<std::uint64_t>(r)), kernel);
    EXPECT_EQ(p.counts.back(), 1);
    times.push_back(p.times.back());
  }
  const auto m = stats::batch_mean(times);
  EXPECT_TRUE(m.within(2.0 * (1.0 - 1.0 / n), 3.0)) << m.value << " +- " << m.se;
}

TEST(Chain, FirstJumpWithAtomAtOne) {
  const auto row = RateFunctional(kAtom1).transition_row(5);
  EXPECT_NEAR(row->rate(5) / row->total, 0.5 / (0.5 * 10 + 0.5), 1e-15);
  std::map<std::int64_t, double> probs;
  for (std::int64_t k = 2; k <= 5; ++k) probs[k] = row->rate(k) / row->total;
  const auto h = first_jumps(kAtom1, 5, 100000, Backend::CHAIN);
  EXPECT_GT(stats::chi_square_gof(h, probs).p_value, 0.01);
}

TEST(Chain, PathInvariantsAndDeterminism) {
  const auto cfg = config(kMixed, 500, 0.5, 3);
  const auto a = simulate_chain(cfg);
  const auto b = simulate_chain(cfg);
  EXPECT_EQ(a.times, b.times);
  EXPECT_EQ(a.counts, b.counts);
  for (std::size_t i = 1; i < a.size(); ++i) {
    EXPECT_GT(a.times[i], a.times[i - 1]);
    EXPECT_LT(a.counts[i], a.counts[i - 1]);
  }
  EXPECT_LE(a.times.back(), 0.5);
  const auto other = simulate_chain(config(kMixed, 500, 0.5, 4));
  EXPECT_NE(other.times, a.times);
}

TEST(Chain, CountAtIsRightContinuous) {
  const auto p = simulate_chain(config(kAtom06, 50, 1.0, 5));
  ASSERT_GE(p.size(), 2u);
  EXPECT_EQ(p.count_at(0.0), 50);
  EXPECT_EQ(p.count_at(std::nextafter(p.times[0], 0.0)), 50);
  EXPECT_EQ(p.count_at(p.times[0]), p.counts[0]);
  EXPECT_EQ(p.count_at(p.times[1]), p.counts[1]);
}

TEST(Chain, FastCountsAgreeWithPath) {
  const JumpKernel kernel(kMixed, 300);
  const std::vector<double> times{0.01, 0.05, 0.1, 0.3, 0.9};
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto cfg = config(kMixed, 300, 1.0, s);
    cfg.start_time = 0.005;
    const auto p = simulate_chain(cfg, kernel);
    const auto fast = chain_counts_at(kernel, 300, 0.005, times, cfg.stream);
    for (std::size_t i = 0; i < times.size(); ++i) EXPECT_EQ(fast[i], p.count_at(times[i]));
  }
}

// E[(t/2) N_t] -> 1 and E[((t/2) N_t - 1)^2] = O(t) for Kingman coming down
// from a large n0.
TEST(Chain, KingmanSpeedLaw) {
  const std::int64_t n0 = 20000;
  const JumpKernel kernel(kKingman, n0);
  const double start = SpeedFunction(RateFunctional(kKingman), SpeedVariant::V).time_to(static_cast<double>(n0));
  const std::vector<double> times{1e-3, 1e-2};
  std::vector<std::vector<double>> dev(times.size());
  for (std::uint64_t r = 0; r < 2000; ++r) {
    const auto c = chain_counts_at(kernel, n0, start, times, {kSeed, r});
    for (std::size_t i = 0; i < times.size(); ++i) dev[i].push_back(times[i] / 2 * static_cast<double>(c[i]) - 1);
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    EXPECT_LT(std::fabs(stats::mean(dev[i])), 0.05 * std::sqrt(t) + 0.5 * t) << t;
    double m2 = 0.0;
    for (double d : dev[i]) m2 += d * d;
    EXPECT_LT(m2 / dev[i].size() / t, 0.5) << t;
  }
}

TEST(Chain, Errors) {
  EXPECT_THROW(simulate_chain(config(kKingman, 1, 1.0, 0)), Error);
  auto bad = config(kKingman, 10, 1.0, 0);
  bad.start_time = 2.0;
  EXPECT_THROW(simulate_chain(bad), Error);
  const JumpKernel kernel(kKingman, 10);
  const std::vector<double> t{0.1};
  EXPECT_THROW(chain_counts_at(kernel, 11, 0.0, t, {}), Error);
}

TEST(Chain, CsvAndMetadata) {
  const auto cfg = config(kAtom06, 10, 1.0, 2);
  const auto p = simulate_chain(cfg);
  std::ostringstream os;
  p.write_csv(os);
  EXPECT_EQ(os.str().rfind("time,count\n", 0), 0u);
  const auto meta = path_metadata(cfg, p);
  EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), kSeed);
  EXPECT_EQ(meta.at("n0").get<std::int64_t>(), 10);
}

TEST(Paintbox, TotalRateMatchesRow) {
  const auto m = DrivingMeasure::validate(0.5, {{0.5, 0.5}});
  // Kingman 0.5 C(2,2) plus (0.5 / 0.25) P(Bin(2, 0.5) = 2).
  EXPECT_NEAR(0.5 + 0.5 / 0.25 * detail::binomial_at_least_two(2, 0.5), 1.0, 1e-15);
  EXPECT_NEAR(RateFunctional(m).transition_row(2)->total, 1.0, 1e-15);
  std::vector<double> times;
  for (int r = 0; r < 10000; ++r) times.push_back(simulate(config(m, 2, 1e9, r, Backend::PAINTBOX_ORACLE)).times[0]);
  EXPECT_TRUE(stats::batch_mean(times).within(1.0, 3.0));
}

TEST(Paintbox, BinomialAtLeastTwo) {
  for (std::int64_t b : {2, 3, 10, 100, 5000}) {
    for (double y : {1e-6, 1e-3, 0.05, 0.5, 0.99, 1.0}) {
      double exact = 0.0;
      for (std::int64_t k = 2; k <= b; ++k) exact += std::exp(detail::log_choose(b, k) + k * std::log(y) + (b - k) * std::log1p(-y));
      if (y == 1.0) exact = 1.0;
      EXPECT_NEAR(detail::binomial_at_least_two(b, y), exact, 1e-10 * exact + 1e-300) << b << ' ' << y;
    }
  }
}

TEST(Paintbox, ConditionedColouringLaw) {
  // One case per branch: rejection (P >= 0.1) and direct inversion.
  for (auto [b, y] : {std::pair<std::int64_t, double>{12, 0.3}, {40, 0.002}}) {
    const double p2 = detail::binomial_at_least_two(b, y);
    Rng rng(StreamId{kSeed, 9});
    stats::Histogram h;
    for (int i = 0; i < 100000; ++i) ++h[detail::sample_colouring(b, y, p2, rng)];
    std::map<std::int64_t, double> probs;
    for (std::int64_t k = 2; k <= b; ++k) {
      probs[k] = std::exp(detail::log_choose(b, k) + k * std::log(y) + (b - k) * std::log1p(-y)) / p2;
    }
    EXPECT_GT(stats::chi_square_gof(h, probs).p_value, 0.01) << b << ' ' << y;
  }
}

// E f = k(k-1) int_0^y int_0^r (1-u)^(k-2) du dr and E f^2 = k(k-1) y^2 - E f,
// for f = (xi - 1)^+ with xi ~ Bin(k, y).
TEST(Paintbox, DecrementMoments) {
  const std::int64_t k = 7;
  const double y = 0.3;
  boost::math::quadrature::tanh_sinh<double> ts;
  const double kk = static_cast<double>(k * (k - 1));
  const double first = kk * ts.integrate([&](double r) {
    return ts.integrate([&](double u) { return std::pow(1 - u, k - 2); }, 0.0, r);
  }, 0.0, y);
  EXPECT_NEAR(first, k * y - 1 + std::pow(1 - y, k), 1e-12);
  const double second = kk * y * y - first;
  Rng rng(StreamId{kSeed, 11});
  std::vector<double> f;
  std::vector<double> f2;
  for (int i = 0; i < 1000000; ++i) {
    const auto d = static_cast<double>(sample_paintbox_decrement(k, y, rng));
    f.push_back(d);
    f2.push_back(d * d);
  }
  EXPECT_TRUE(stats::batch_mean(f).within(first, 3.0));
  EXPECT_TRUE(stats::batch_mean(f2).within(second, 3.0));
}

TEST(Paintbox, MatchesChainInLaw) {
  const std::int64_t n0 = 30;
  const JumpKernel kernel(kAtom06, n0);
  const std::vector<double> t{0.2};
  std::vector<std::int64_t> chain;
  std::vector<std::int64_t> paint;
  for (std::uint64_t r = 0; r < 100000; ++r) {
    chain.push_back(chain_counts_at(kernel, n0, 0.0, t, {kSeed, r})[0]);
    paint.push_back(simulate(config(kAtom06, n0, 0.2, r + (1ULL << 40), Backend::PAINTBOX_ORACLE)).count_at(0.2));
  }
  EXPECT_LT(stats::total_variation(stats::histogram(chain), stats::histogram(paint)), 0.02);
}

TEST(Paintbox, FirstJumpWithAtomAtOne) {
  const auto row = RateFunctional(kAtom1).transition_row(5);
  std::map<std::int64_t, double> probs;
  for (std::int64_t k = 2; k <= 5; ++k) probs[k] = row->rate(k) / row->total;
  const auto h = first_jumps(kAtom1, 5, 100000, Backend::PAINTBOX_ORACLE);
  EXPECT_GT(stats::chi_square_gof(h, probs).p_value, 0.01);
}

TEST(Paintbox, Errors) {
  const auto beta = DrivingMeasure::validate(0.5, {}, {{1.0, 1.0, 0.5}});
  try {
    simulate(config(beta, 10, 1.0, 0, Backend::PAINTBOX_ORACLE));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedMeasure);
  }
  EXPECT_THROW(simulate(config(kAtom06, 1001, 1.0, 0, Backend::PAINTBOX_ORACLE)), Error);
}

TEST(Partition, KingmanPairMergesAtRateOne) {
  const RateFunctional rf(kKingman);
  std::vector<double> times;
  for (std::uint64_t r = 0; r < 10000; ++r) times.push_back(simulate_partition_oracle(rf, 2, 1e9, {kSeed, r}).counts.times[0]);
  EXPECT_TRUE(stats::batch_mean(times).within(1.0, 3.0));
}

TEST(Partition, MatchesChainInLaw) {
  const RateFunctional rf(kAtom06);
  const JumpKernel kernel(kAtom06, 6);
  const std::vector<double> t{0.5};
  std::vector<std::int64_t> chain;
  std::vector<std::int64_t> part;
  for (std::uint64_t r = 0; r < 100000; ++r) {
    chain.push_back(chain_counts_at(kernel, 6, 0.0, t, {kSeed, r})[0]);
    part.push_back(simulate_partition_oracle(rf, 6, 0.5, {kSeed, r + (3ULL << 40)}).counts.count_at(0.5));
  }
  EXPECT_GT(stats::chi_square_two_sample(stats::histogram(chain), stats::histogram(part)).p_value, 0.01);
}

TEST(Partition, DirectFullMerge) {
  const RateFunctional rf(kAtom1);
  const auto row = rf.transition_row(5);
  const double p = row->rate(5) / row->total;
  int full = 0;
  const int reps = 100000;
  for (std::uint64_t r = 0; r < reps; ++r) full += simulate_partition_oracle(rf, 5, 1e9, {kSeed, r}).counts.counts[0] == 1;
  EXPECT_NEAR(full / double(reps), p, 3.0 * std::sqrt(p * (1 - p) / reps));
}

TEST(Partition, KeepsAPartition) {
  const auto p = simulate_partition_oracle(RateFunctional(kMixed), 12, 1e9, {kSeed, 1}, true);
  ASSERT_EQ(p.partitions.size(), p.counts.size());
  for (std::size_t i = 0; i < p.partitions.size(); ++i) {
    const auto& part = p.partitions[i];
    EXPECT_EQ(static_cast<std::int64_t>(part.size()), p.counts.counts[i]);
    std::vector<int> all;
    for (const auto& blk : part) all.insert(all.end(), blk.begin(), blk.end());
    std::sort(all.begin(), all.end());
    for (int j = 0; j < 12; ++j) EXPECT_EQ(all[static_cast<std::size_t>(j)], j + 1);
  }
}

TEST(Partition, Errors) {
  const RateFunctional rf(kKingman);
  EXPECT_THROW(simulate_partition_oracle(rf, 51, 1.0, {}), Error);
  EXPECT_THROW(simulate_partition_oracle(rf, 1, 1.0, {}), Error);
}
