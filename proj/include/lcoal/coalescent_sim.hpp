#pragma once

// Exact simulation of the block-counting process N_t of a Lambda-coalescent.
//
// CHAIN draws from the count-level Markov chain (jump rate C(b,k) lambda_{b,k}
// for a k-merger). PAINTBOX_ORACLE replays the Poissonian construction:
// Kingman pair merges plus, for each atom y of Lambda_1, colouring events
// where every block joins the merger with probability y. The partition oracle
// keeps the actual blocks of {1..n}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcoal/detail/numerics.hpp"
#include "lcoal/errors.hpp"
#include "lcoal/measure.hpp"
#include "lcoal/rates.hpp"
#include "lcoal/rng.hpp"

namespace lcoal {

enum class Backend { CHAIN, PAINTBOX_ORACLE };

inline const char* to_string(Backend b) noexcept { return b == Backend::CHAIN ? "CHAIN" : "PAINTBOX_ORACLE"; }

struct SimConfig {
  DrivingMeasure measure;
  std::int64_t n0 = 2;
  double t_end = 1.0;
  Backend backend = Backend::CHAIN;
  StreamId stream{};
  // Absolute time at which the n0 blocks are present. Experiments set this to
  // the time the deterministic speed needs to come down to n0.
  double start_time = 0.0;

  void check() const {
    if (n0 < 2) throw Error(ErrorCode::DomainError, "n0 must be >= 2");
    if (!(start_time >= 0.0) || !std::isfinite(start_time)) throw Error(ErrorCode::DomainError, "bad start_time");
    if (!(t_end > start_time) || !std::isfinite(t_end)) throw Error(ErrorCode::DomainError, "t_end must exceed start_time");
  }
};

/// Event record of N. Times are absolute and strictly increasing, counts
/// strictly decreasing.
struct BlockCountPath {
  std::int64_t initial_n = 0;
  double start_time = 0.0;
  StreamId stream{};
  std::vector<double> times;
  std::vector<std::int64_t> counts;

  std::size_t size() const noexcept { return times.size(); }

  /// N_t, right-continuous. Times before the start return initial_n.
  std::int64_t count_at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return initial_n;
    return counts[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  void write_csv(std::ostream& os) const {
    const auto old = os.precision(17);
    os << "time,count\n";
    for (std::size_t i = 0; i < times.size(); ++i) os << times[i] << ',' << counts[i] << '\n';
    os.precision(old);
  }
};

inline nlohmann::json path_metadata(const SimConfig& cfg, const BlockCountPath& path) {
  nlohmann::json j;
  j["measure"] = cfg.measure.to_json();
  j["n0"] = cfg.n0;
  j["t_end"] = cfg.t_end;
  j["start_time"] = cfg.start_time;
  j["backend"] = to_string(cfg.backend);
  j["seed"] = cfg.stream.seed;
  j["stream_index"] = cfg.stream.index;
  j["events"] = path.size();
  j["final_count"] = path.counts.empty() ? path.initial_n : path.counts.back();
  return j;
}

namespace detail {

// P(Bin(b, y) >= 2).
inline double binomial_at_least_two(std::int64_t b, double y) {
  if (b < 2) return 0.0;
  if (y >= 1.0) return 1.0;
  const double bd = static_cast<double>(b);
  if (bd * y < 0.1) {
    // Sum the pmf directly; the complement would cancel.
    const double l1y = std::log1p(-y);
    double term = std::exp(log_choose(b, 2) + 2.0 * std::log(y) + (bd - 2.0) * l1y);
    CompensatedSum s;
    for (std::int64_t k = 2; k <= b && term > 0.0; ++k) {
      s += term;
      if (term < 1e-18 * s.value()) break;
      term *= static_cast<double>(b - k) / static_cast<double>(k + 1) * y / (1.0 - y);
    }
    return s.value();
  }
  const double l1y = std::log1p(-y);
  return -std::expm1(bd * l1y) - bd * y * std::exp((bd - 1.0) * l1y);
}

// Inverse-CDF scan over k = 2, 3, ... given log p_2 and the ratio
// p_{k+1} / p_k. The p_k are already normalized to sum to one. Falls back to
// the most likely k seen if rounding leaves the cumulative short of u.
template <class Ratio>
std::int64_t scan_inverse_cdf(double log_first, Ratio&& ratio, double u, std::int64_t k_max) {
  double lt = log_first;
  double cum = 0.0;
  std::int64_t best_k = 2;
  double best_lt = -kInf;
  for (std::int64_t k = 2; k <= k_max; ++k) {
    if (lt > best_lt) {
      best_lt = lt;
      best_k = k;
    }
    if (lt > -745.0) {
      cum += std::exp(lt);
      if (cum >= u) return k;
    }
    if (k == k_max) break;
    const double r = ratio(k);
    if (!(r > 0.0)) break;
    lt += std::log(r);
  }
  return best_k;
}

}  // namespace detail

/// Jump law of the count chain for every b <= b_max. Component totals are
/// tabulated (Kingman c C(b,2); atom (w/y^2) P(Bin(b,y) >= 2); Beta weight
/// times sum_k C(b,k) E[r^(k-2)(1-r)^(b-k)], built by a recurrence in b), and
/// within a component k is drawn by an inverse-CDF scan of its binomial or
/// Beta-binomial terms. The law equals the transition row of RateFunctional
/// without ever building a row of length b.
class JumpKernel {
 public:
  JumpKernel(const DrivingMeasure& m, std::int64_t b_max) : measure_(m), b_max_(b_max) {
    if (b_max < 2) throw Error(ErrorCode::DomainError, "JumpKernel needs b_max >= 2");
    n_comp_ = 1 + m.atoms().size() + m.betas().size();
    const auto rows = static_cast<std::size_t>(b_max + 1);
    rates_.assign(rows * n_comp_, 0.0);
    totals_.assign(rows, 0.0);
    const double c = m.kingman_mass();
    for (std::int64_t b = 2; b <= b_max; ++b) {
      const double bd = static_cast<double>(b);
      at(b, 0) = c * bd * (bd - 1.0) / 2.0;
    }
    std::size_t j = 1;
    for (const Atom& a : m.atoms()) {
      const double scale = a.weight / (a.location * a.location);
      for (std::int64_t b = 2; b <= b_max; ++b) at(b, j) = scale * detail::binomial_at_least_two(b, a.location);
      ++j;
    }
    for (const BetaComponent& bc : m.betas()) {
      beta_log_norm_.push_back(detail::log_beta(bc.alpha, bc.beta));
      // R(2) = 1, R(b+1) = R(b) + b E[(1-r)^(b-1)].
      detail::CompensatedSum r;
      r += 1.0;
      double moment = 1.0;  // E[(1-r)^(b-1)] at b = 1
      for (std::int64_t b = 2; b <= b_max; ++b) {
        at(b, j) = bc.weight * r.value();
        const double m1 = static_cast<double>(b - 2);
        moment *= (bc.beta + m1) / (bc.alpha + bc.beta + m1);
        r += static_cast<double>(b) * moment;
      }
      ++j;
    }
    for (std::int64_t b = 2; b <= b_max; ++b) {
      detail::CompensatedSum s;
      for (std::size_t i = 0; i < n_comp_; ++i) s += at(b, i);
      totals_[static_cast<std::size_t>(b)] = s.value();
    }
  }

  std::int64_t b_max() const noexcept { return b_max_; }
  const DrivingMeasure& measure() const noexcept { return measure_; }

  /// Total jump rate with b blocks.
  double total(std::int64_t b) const {
    check(b);
    return totals_[static_cast<std::size_t>(b)];
  }

  /// Total rate of component i (0 = Kingman, then atoms, then Beta parts).
  double component_rate(std::int64_t b, std::size_t i) const {
    check(b);
    return at(b, i);
  }

  /// Probability that the next jump from b blocks is a k-merger, from the
  /// same recurrences the sampler uses.
  double probability(std::int64_t b, std::int64_t k) const {
    check(b);
    if (k < 2 || k > b) return 0.0;
    detail::CompensatedSum s;
    if (k == 2) s += at(b, 0);
    std::size_t j = 1;
    for (const Atom& a : measure_.atoms()) {
      if (a.location >= 1.0) {
        if (k == b) s += at(b, j);
      } else {
        const double lp = atom_log_first(a, b) + log_ratio_sum(k, [&](std::int64_t i) { return atom_ratio(a, b, i); });
        s += at(b, j) * std::exp(lp);
      }
      ++j;
    }
    for (std::size_t i = 0; i < measure_.betas().size(); ++i, ++j) {
      const BetaComponent& bc = measure_.betas()[i];
      const double lp = beta_log_first(i, b);
      s += at(b, j) * std::exp(lp + log_ratio_sum(k, [&](std::int64_t q) { return beta_ratio(bc, b, q); }));
    }
    return s.value() / totals_[static_cast<std::size_t>(b)];
  }

  /// Draws k for the next merger from b blocks.
  std::int64_t sample_k(std::int64_t b, Rng& rng) const {
    check(b);
    double u = rng.uniform() * totals_[static_cast<std::size_t>(b)];
    std::size_t comp = n_comp_ - 1;
    for (std::size_t i = 0; i < n_comp_; ++i) {
      const double r = at(b, i);
      if (u < r) {
        comp = i;
        break;
      }
      u -= r;
    }
    if (comp == 0) return 2;
    const double v = rng.uniform();
    if (comp <= measure_.atoms().size()) {
      const Atom& a = measure_.atoms()[comp - 1];
      if (a.location >= 1.0) return b;
      return detail::scan_inverse_cdf(atom_log_first(a, b), [&](std::int64_t k) { return atom_ratio(a, b, k); }, v, b);
    }
    const std::size_t i = comp - 1 - measure_.atoms().size();
    const BetaComponent& bc = measure_.betas()[i];
    return detail::scan_inverse_cdf(beta_log_first(i, b), [&](std::int64_t k) { return beta_ratio(bc, b, k); }, v, b);
  }

 private:
  double& at(std::int64_t b, std::size_t i) { return rates_[static_cast<std::size_t>(b) * n_comp_ + i]; }
  double at(std::int64_t b, std::size_t i) const { return rates_[static_cast<std::size_t>(b) * n_comp_ + i]; }

  void check(std::int64_t b) const {
    if (b < 2 || b > b_max_) throw Error(ErrorCode::DomainError, "block count outside the kernel table");
  }

  // log P(k = 2) within an atom component, i.e. of Bin(b,y) given >= 2; y < 1.
  static double atom_log_first(const Atom& a, std::int64_t b) {
    const double y = a.location;
    return detail::log_choose(b, 2) + 2.0 * std::log(y) + static_cast<double>(b - 2) * std::log1p(-y) -
           std::log(detail::binomial_at_least_two(b, y));
  }
  static double atom_ratio(const Atom& a, std::int64_t b, std::int64_t k) {
    const double y = a.location;
    return static_cast<double>(b - k) / static_cast<double>(k + 1) * y / (1.0 - y);
  }

  double beta_log_first(std::size_t i, std::int64_t b) const {
    const BetaComponent& bc = measure_.betas()[i];
    const double r = at(b, 1 + measure_.atoms().size() + i) / bc.weight;
    return detail::log_choose(b, 2) + detail::log_beta(bc.alpha, bc.beta + static_cast<double>(b - 2)) -
           beta_log_norm_[i] - std::log(r);
  }
  static double beta_ratio(const BetaComponent& bc, std::int64_t b, std::int64_t k) {
    return static_cast<double>(b - k) / static_cast<double>(k + 1) * (bc.alpha + static_cast<double>(k - 2)) /
           (bc.beta + static_cast<double>(b - k - 1));
  }

  template <class Ratio>
  static double log_ratio_sum(std::int64_t k, Ratio&& ratio) {
    double s = 0.0;
    for (std::int64_t i = 2; i < k; ++i) s += std::log(ratio(i));
    return s;
  }

  DrivingMeasure measure_;
  std::int64_t b_max_;
  std::size_t n_comp_ = 1;
  std::vector<double> rates_;
  std::vector<double> totals_;
  std::vector<double> beta_log_norm_;
};

/// Chain run recording every event.
inline BlockCountPath simulate_chain(const SimConfig& cfg, const JumpKernel& kernel) {
  cfg.check();
  if (cfg.backend != Backend::CHAIN) throw Error(ErrorCode::DomainError, "simulate_chain needs the CHAIN backend");
  if (kernel.b_max() < cfg.n0) throw Error(ErrorCode::DomainError, "kernel table smaller than n0");
  Rng rng(cfg.stream);
  BlockCountPath path{cfg.n0, cfg.start_time, cfg.stream, {}, {}};
  std::int64_t b = cfg.n0;
  double t = cfg.start_time;
  while (b > 1) {
    t += rng.exponential(kernel.total(b));
    if (t > cfg.t_end) break;
    b -= kernel.sample_k(b, rng) - 1;
    path.times.push_back(t);
    path.counts.push_back(b);
  }
  return path;
}

inline BlockCountPath simulate_chain(const SimConfig& cfg) {
  cfg.check();
  return simulate_chain(cfg, JumpKernel(cfg.measure, cfg.n0));
}

/// N at each of the sorted absolute `times`, without storing the path. Uses
/// the same random stream as simulate_chain, so the values agree with
/// count_at on the recorded path.
inline std::vector<std::int64_t> chain_counts_at(const JumpKernel& kernel, std::int64_t n0, double start_time,
                                                 std::span<const double> times, StreamId stream) {
  if (n0 < 2 || n0 > kernel.b_max()) throw Error(ErrorCode::DomainError, "n0 outside the kernel table");
  if (!std::is_sorted(times.begin(), times.end())) throw Error(ErrorCode::BadGrid, "query times must be sorted");
  std::vector<std::int64_t> out(times.size(), 1);
  if (times.empty()) return out;
  Rng rng(stream);
  std::int64_t b = n0;
  double t = start_time;
  std::size_t q = 0;
  const double t_last = times.back();
  while (b > 1) {
    t += rng.exponential(kernel.total(b));
    while (q < times.size() && times[q] < t) out[q++] = b;
    if (t > t_last) break;
    b -= kernel.sample_k(b, rng) - 1;
  }
  for (; q < times.size(); ++q) out[q] = b;
  return out;
}

/// Number of blocks y-coloured among k, less one, or 0 when none is coloured:
/// f(k, y, x) = (xi - 1)^+ with xi ~ Bin(k, y) drawn one block at a time.
inline std::int64_t sample_paintbox_decrement(std::int64_t k, double y, Rng& rng) {
  if (k < 0 || !(y >= 0.0 && y <= 1.0)) throw Error(ErrorCode::DomainError, "bad paintbox arguments");
  std::int64_t xi = 0;
  for (std::int64_t i = 0; i < k; ++i) xi += rng.bernoulli(y) ? 1 : 0;
  return xi > 0 ? xi - 1 : 0;
}

namespace detail {

// xi ~ Bin(b, y) given xi >= 2. Colours blocks one at a time and rejects when
// fewer than two are hit if that is not rare; otherwise inverts the
// conditioned law directly.
inline std::int64_t sample_colouring(std::int64_t b, double y, double p_two, Rng& rng) {
  if (y >= 1.0) return b;
  if (p_two >= 0.1) {
    for (;;) {
      std::int64_t xi = 0;
      for (std::int64_t i = 0; i < b; ++i) xi += rng.bernoulli(y) ? 1 : 0;
      if (xi >= 2) return xi;
    }
  }
  const double u = rng.uniform() * p_two;
  const double ratio = y / (1.0 - y);
  double term = std::exp(log_choose(b, 2) + 2.0 * std::log(y) + static_cast<double>(b - 2) * std::log1p(-y));
  double cum = 0.0;
  for (std::int64_t k = 2; k < b; ++k) {
    cum += term;
    if (cum >= u) return k;
    term *= static_cast<double>(b - k) / static_cast<double>(k + 1) * ratio;
  }
  return b;
}

}  // namespace detail

/// Poissonian construction restricted to atoms-only Lambda_1, n0 <= 1000.
inline BlockCountPath simulate_paintbox_oracle(const SimConfig& cfg) {
  cfg.check();
  if (!cfg.measure.atoms_only()) {
    throw Error(ErrorCode::UnsupportedMeasure, "paintbox oracle supports point atoms only");
  }
  if (cfg.n0 > 1000) throw Error(ErrorCode::DomainError, "paintbox oracle limited to n0 <= 1000");
  const auto& atoms = cfg.measure.atoms();
  const double c = cfg.measure.kingman_mass();
  Rng rng(cfg.stream);
  BlockCountPath path{cfg.n0, cfg.start_time, cfg.stream, {}, {}};
  std::vector<double> p_two(atoms.size());
  std::vector<double> rate(atoms.size());
  std::int64_t b = cfg.n0;
  double t = cfg.start_time;
  while (b > 1) {
    const double bd = static_cast<double>(b);
    const double pair_rate = c * bd * (bd - 1.0) / 2.0;
    double total = pair_rate;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      p_two[i] = detail::binomial_at_least_two(b, atoms[i].location);
      rate[i] = atoms[i].weight / (atoms[i].location * atoms[i].location) * p_two[i];
      total += rate[i];
    }
    t += rng.exponential(total);
    if (t > cfg.t_end) break;
    double u = rng.uniform() * total;
    std::int64_t merged = 2;
    if (u >= pair_rate) {
      u -= pair_rate;
      std::size_t i = 0;
      while (i + 1 < atoms.size() && u >= rate[i]) u -= rate[i++];
      merged = detail::sample_colouring(b, atoms[i].location, p_two[i], rng);
    }
    b -= merged - 1;
    path.times.push_back(t);
    path.counts.push_back(b);
  }
  return path;
}

inline BlockCountPath simulate(const SimConfig& cfg) {
  return cfg.backend == Backend::CHAIN ? simulate_chain(cfg) : simulate_paintbox_oracle(cfg);
}

/// Explicit partition of {1..n}, n <= 50. Each step draws k with probability
/// proportional to C(b,k) lambda_{b,k} from the transition row, then merges a
/// uniformly chosen k-subset of the current blocks.
struct PartitionPath {
  BlockCountPath counts;
  std::vector<std::vector<std::vector<int>>> partitions;  // state after each event
};

inline PartitionPath simulate_partition_oracle(const RateFunctional& rf, int n, double t_end, StreamId stream,
                                               bool keep_partitions = false) {
  if (n < 2 || n > 50) throw Error(ErrorCode::DomainError, "partition oracle needs 2 <= n <= 50");
  if (!(t_end > 0.0)) throw Error(ErrorCode::DomainError, "t_end must be > 0");
  Rng rng(stream);
  std::vector<std::vector<int>> blocks(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) blocks[static_cast<std::size_t>(i)] = {i + 1};
  PartitionPath out;
  out.counts = {n, 0.0, stream, {}, {}};
  double t = 0.0;
  while (blocks.size() > 1) {
    const auto b = static_cast<std::int64_t>(blocks.size());
    const auto row = rf.transition_row(b);
    t += rng.exponential(row->total);
    if (t > t_end) break;
    const double u = rng.uniform() * row->total;
    detail::CompensatedSum cum;
    std::int64_t k = row->k_max();
    for (std::int64_t j = 2; j <= row->k_max(); ++j) {
      cum += row->rate(j);
      if (cum.value() >= u) {
        k = j;
        break;
      }
    }
    // Partial Fisher-Yates: the first k positions become a uniform k-subset.
    for (std::int64_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::int64_t> pick_dist(i, b - 1);
      const auto pick = pick_dist(rng);
      std::swap(blocks[static_cast<std::size_t>(i)], blocks[static_cast<std::size_t>(pick)]);
    }
    std::vector<int> merged;
    for (std::int64_t i = 0; i < k; ++i) {
      auto& blk = blocks[static_cast<std::size_t>(i)];
      merged.insert(merged.end(), blk.begin(), blk.end());
    }
    std::sort(merged.begin(), merged.end());
    blocks.erase(blocks.begin(), blocks.begin() + k);
    blocks.push_back(std::move(merged));
    std::sort(blocks.begin(), blocks.end());
    out.counts.times.push_back(t);
    out.counts.counts.push_back(static_cast<std::int64_t>(blocks.size()));
    if (keep_partitions) out.partitions.push_back(blocks);
  }
  return out;
}

}  // namespace lcoal
