#pragma once

// Per-replicate random streams. Each stream is keyed by (seed, stream index)
// alone, so replicate i draws the same numbers whatever thread runs it and
// whatever ran before it.

#include <cmath>
#include <cstdint>
#include <random>

namespace lcoal {

struct StreamId {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(StreamId id) : id_(id), engine_(make_engine(id)) {}
  Rng(std::uint64_t seed, std::uint64_t index) : Rng(StreamId{seed, index}) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  StreamId id() const noexcept { return id_; }

  /// Uniform on (0, 1); never returns 0 or 1.
  double uniform() {
    for (;;) {
      const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  /// Exponential with the given rate.
  double exponential(double rate) { return -std::log(uniform()) / rate; }

  double normal() { return normal_(engine_); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::mt19937_64 make_engine(StreamId id) {
    std::seed_seq seq{static_cast<std::uint32_t>(id.seed), static_cast<std::uint32_t>(id.seed >> 32),
                      static_cast<std::uint32_t>(id.index), static_cast<std::uint32_t>(id.index >> 32),
                      0x6c636f61U};
    return std::mt19937_64(seq);
  }

  StreamId id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace lcoal
