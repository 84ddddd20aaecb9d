#pragma once

// Monte-Carlo harness. Simulates the block count at times eps*t, rescales to
// X_eps(t) = eps^(-1/2) (N_{eps t} / speed(eps t) - 1) and compares the
// finite-dimensional marginals with those of sqrt(c) Z.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lcoal/coalescent_sim.hpp"
#include "lcoal/errors.hpp"
#include "lcoal/limit_gaussian.hpp"
#include "lcoal/measure.hpp"
#include "lcoal/rates.hpp"
#include "lcoal/speed.hpp"
#include "lcoal/stats.hpp"

namespace lcoal {

enum class Normalization { V, V_STAR, W, KINGMAN_HALF_T };

inline const char* to_string(Normalization n) noexcept {
  switch (n) {
    case Normalization::V: return "V";
    case Normalization::V_STAR: return "V_STAR";
    case Normalization::W: return "W";
    case Normalization::KINGMAN_HALF_T: return "KINGMAN_HALF_T";
  }
  return "?";
}

inline Normalization normalization_from_string(const std::string& s) {
  if (s == "V") return Normalization::V;
  if (s == "V_STAR") return Normalization::V_STAR;
  if (s == "W") return Normalization::W;
  if (s == "KINGMAN_HALF_T") return Normalization::KINGMAN_HALF_T;
  throw Error(ErrorCode::ConfigError, "unknown normalization '" + s + "'");
}

/// Runs fn(i) for i in [0, n) on `threads` workers. Results must be written
/// by index, so the outcome does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// X_eps on a grid, one row per grid time, one column per replicate.
struct FluctuationSample {
  double epsilon = 0.0;
  std::vector<double> grid;
  Normalization normalization = Normalization::V;
  std::vector<double> speeds;               // speed(eps t) per grid time
  std::vector<std::vector<double>> values;  // values[g][r]

  /// X at time 0 is 0 by convention.
  static constexpr double at_zero() { return 0.0; }
};

/// Block counts N_{eps t} for every replicate, plus what produced them.
struct CountSample {
  double epsilon = 0.0;
  std::vector<double> grid;
  std::int64_t n0 = 0;
  double start_time = 0.0;
  std::vector<std::vector<std::int64_t>> counts;  // counts[g][r]
};

struct SimulationPlan {
  std::int64_t n0 = 100000;
  std::uint64_t seed = 1;
  std::uint64_t stream_base = 0;
  int replicates = 2000;
  unsigned threads = 1;
  // Start the n0 blocks at the time the V speed takes to come down to n0
  // rather than at time 0.
  bool entrance_offset = true;
};

inline CountSample simulate_counts(const SpeedFunction& v_speed, const JumpKernel& kernel, double epsilon,
                                   std::vector<double> grid, const SimulationPlan& plan) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::DomainError, "epsilon must be > 0");
  detail::check_grid(grid);
  if (plan.replicates < 1) throw Error(ErrorCode::DomainError, "need at least one replicate");
  CountSample out;
  out.epsilon = epsilon;
  out.grid = grid;
  out.n0 = plan.n0;
  out.start_time = plan.entrance_offset ? v_speed.time_to(static_cast<double>(plan.n0)) : 0.0;
  std::vector<double> times;
  for (double t : grid) {
    times.push_back(epsilon * t);
    if (!(times.back() > out.start_time)) {
      throw Error(ErrorCode::InsufficientN0, "query time eps*t lies before the entrance time of n0 blocks");
    }
  }
  const auto reps = static_cast<std::size_t>(plan.replicates);
  out.counts.assign(grid.size(), std::vector<std::int64_t>(reps));
  parallel_for(reps, plan.threads, [&](std::size_t r) {
    const auto c = chain_counts_at(kernel, plan.n0, out.start_time, times, {plan.seed, plan.stream_base + r});
    for (std::size_t g = 0; g < grid.size(); ++g) out.counts[g][r] = c[g];
  });
  return out;
}

/// Rescales counts with the requested speed. `v_star` is only consulted for
/// V_STAR.
inline FluctuationSample fluctuations(const CountSample& cs, Normalization norm, const SpeedFunction& v_speed,
                                      const SpeedFunction* v_star = nullptr) {
  FluctuationSample fs;
  fs.epsilon = cs.epsilon;
  fs.grid = cs.grid;
  fs.normalization = norm;
  const double c = v_speed.c();
  for (double t : cs.grid) {
    const double s = cs.epsilon * t;
    switch (norm) {
      case Normalization::V: fs.speeds.push_back(v_speed.solve(s)); break;
      case Normalization::V_STAR:
        if (v_star == nullptr) throw Error(ErrorCode::DomainError, "V_STAR normalization needs the v* speed");
        fs.speeds.push_back(v_star->solve(s));
        break;
      case Normalization::W: fs.speeds.push_back(2.0 / (c * s)); break;
      case Normalization::KINGMAN_HALF_T: fs.speeds.push_back(2.0 / s); break;
    }
  }
  const double scale = 1.0 / std::sqrt(cs.epsilon);
  fs.values.resize(cs.grid.size());
  for (std::size_t g = 0; g < cs.grid.size(); ++g) {
    fs.values[g].reserve(cs.counts[g].size());
    for (auto n : cs.counts[g]) fs.values[g].push_back(scale * (static_cast<double>(n) / fs.speeds[g] - 1.0));
  }
  return fs;
}

inline void write_fluctuation_csv(std::ostream& os, const FluctuationSample& fs) {
  const auto old = os.precision(17);
  os << "replicate,t,value\n";
  const std::size_t reps = fs.values.empty() ? 0 : fs.values.front().size();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t g = 0; g < fs.grid.size(); ++g) os << r << ',' << fs.grid[g] << ',' << fs.values[g][r] << '\n';
  }
  os.precision(old);
}

struct Check {
  std::string name;
  bool passed = false;
  bool asserted = true;  // counts towards the overall verdict
  double value = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct MarginalSummary {
  double t = 0.0;
  double speed = 0.0;
  stats::Estimate mean;
  stats::Estimate variance;
  double target_mean = 0.0;
  double target_variance = 0.0;
  stats::KsResult ks;
};

struct CovarianceSummary {
  double s = 0.0;
  double t = 0.0;
  stats::Estimate covariance;
  double target = 0.0;
};

struct ExperimentReport {
  std::string kind;
  nlohmann::json config;
  std::uint64_t seed = 0;
  int replicates = 0;
  std::vector<MarginalSummary> marginals;
  std::vector<CovarianceSummary> covariances;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<Check> checks;
  double runtime_seconds = 0.0;
  unsigned threads = 1;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return !c.asserted || c.passed; });
  }

  const Check* find(const std::string& name) const {
    for (const Check& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }

  /// Everything but runtime and thread count sits outside "metadata", so two
  /// runs with the same config and seed give identical JSON without it.
  nlohmann::json to_json(bool with_metadata = true) const {
    nlohmann::json j;
    j["kind"] = kind;
    j["config"] = config;
    j["seed"] = seed;
    j["replicates"] = replicates;
    j["marginals"] = nlohmann::json::array();
    for (const auto& m : marginals) {
      j["marginals"].push_back({{"t", m.t},
                                {"speed", m.speed},
                                {"mean", m.mean.value},
                                {"mean_se", m.mean.se},
                                {"target_mean", m.target_mean},
                                {"variance", m.variance.value},
                                {"variance_se", m.variance.se},
                                {"target_variance", m.target_variance},
                                {"ks_statistic", m.ks.statistic},
                                {"ks_p_value", m.ks.p_value}});
    }
    j["covariances"] = nlohmann::json::array();
    for (const auto& c : covariances) {
      j["covariances"].push_back({{"s", c.s},
                                  {"t", c.t},
                                  {"covariance", c.covariance.value},
                                  {"covariance_se", c.covariance.se},
                                  {"target", c.target}});
    }
    j["extra"] = extra;
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks) {
      j["checks"].push_back({{"name", c.name},
                             {"passed", c.passed},
                             {"asserted", c.asserted},
                             {"value", c.value},
                             {"target", c.target},
                             {"tolerance", c.tolerance},
                             {"detail", c.detail}});
    }
    j["passed"] = passed();
    if (with_metadata) j["metadata"] = {{"runtime_seconds", runtime_seconds}, {"threads", threads}};
    return j;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << kind << "  seed=" << seed << "  replicates=" << replicates << "\n";
    os << std::setprecision(6);
    if (!marginals.empty()) {
      os << std::left << std::setw(10) << "t" << std::setw(14) << "mean" << std::setw(12) << "se" << std::setw(14)
         << "variance" << std::setw(12) << "se" << std::setw(14) << "target_var" << std::setw(12) << "ks_D"
         << "ks_p\n";
      for (const auto& m : marginals) {
        os << std::left << std::setw(10) << m.t << std::setw(14) << m.mean.value << std::setw(12) << m.mean.se
           << std::setw(14) << m.variance.value << std::setw(12) << m.variance.se << std::setw(14) << m.target_variance
           << std::setw(12) << m.ks.statistic << m.ks.p_value << "\n";
      }
    }
    for (const auto& c : covariances) {
      os << "cov(" << c.s << ", " << c.t << ") = " << c.covariance.value << " +- " << c.covariance.se << "  target "
         << c.target << "\n";
    }
    for (const auto& c : checks) {
      os << (c.passed ? "PASS " : "FAIL ") << (c.asserted ? "" : "(info) ") << c.name << ": " << c.detail << "\n";
    }
    os << "runtime " << std::setprecision(3) << runtime_seconds << " s\n";
    return os.str();
  }
};

namespace detail {

inline std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

inline Check se_check(std::string name, const stats::Estimate& e, double target, double k_se) {
  Check c;
  c.name = std::move(name);
  c.value = e.value;
  c.target = target;
  c.tolerance = k_se * e.se;
  c.passed = e.within(target, k_se);
  c.detail = fmt(e.value) + " vs " + fmt(target) + " (" + fmt(e.z(target)) + " SE, limit " + fmt(k_se) + ")";
  return c;
}

inline Check ks_check(std::string name, const stats::KsResult& ks, double alpha) {
  Check c;
  c.name = std::move(name);
  c.value = ks.p_value;
  c.target = alpha;
  c.tolerance = alpha;
  c.passed = ks.p_value > alpha;
  c.detail = "p = " + fmt(ks.p_value) + " (D = " + fmt(ks.statistic) + "), needs p > " + fmt(alpha);
  return c;
}

inline std::string time_tag(double t) { return "[t=" + fmt(t) + "]"; }

// Marginal and covariance summaries of fs against sqrt(c) Z plus a drift.
inline void summarize(ExperimentReport& rep, const FluctuationSample& fs, double c, std::size_t batches,
                      double drift = 0.0) {
  for (std::size_t g = 0; g < fs.grid.size(); ++g) {
    const double t = fs.grid[g];
    MarginalSummary m;
    m.t = t;
    m.speed = fs.speeds[g];
    m.mean = stats::batch_mean(fs.values[g], batches);
    m.variance = stats::batch_variance(fs.values[g], batches);
    m.target_mean = drift * std::sqrt(t);
    m.target_variance = c * t / 6.0;
    std::vector<double> centred(fs.values[g]);
    for (double& x : centred) x -= m.target_mean;
    m.ks = stats::ks_normal(centred, m.target_variance);
    rep.marginals.push_back(m);
  }
  for (std::size_t i = 0; i < fs.grid.size(); ++i) {
    for (std::size_t j = i + 1; j < fs.grid.size(); ++j) {
      CovarianceSummary cv;
      cv.s = fs.grid[i];
      cv.t = fs.grid[j];
      cv.covariance = stats::batch_covariance(fs.values[i], fs.values[j], batches);
      cv.target = limit_covariance(cv.s, cv.t, c);
      rep.covariances.push_back(cv);
    }
  }
}

}  // namespace detail

struct FcltConfig {
  DrivingMeasure measure = DrivingMeasure::kingman();
  double epsilon = 1e-3;
  std::vector<double> grid{1.0};
  Normalization normalization = Normalization::V;
  int replicates = 2000;
  // 0 picks max(1e5, ceil(50 v(eps * max grid))).
  std::int64_t n0 = 0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool entrance_offset = true;
  std::size_t batches = stats::kDefaultBatches;
  double k_se = 3.0;
  double ks_alpha = 0.01;  // before the Bonferroni split over grid times
  double speed_tolerance = 1e-10;

  nlohmann::json to_json() const {
    return {{"measure", measure.to_json()},
            {"epsilon", epsilon},
            {"grid", grid},
            {"normalization", to_string(normalization)},
            {"replicates", replicates},
            {"n0", n0},
            {"seed", seed},
            {"entrance_offset", entrance_offset},
            {"batches", batches},
            {"k_se", k_se},
            {"ks_alpha", ks_alpha},
            {"speed_tolerance", speed_tolerance}};
  }
};

/// Smallest admissible n0: 50 v(eps * max grid).
inline double required_n0(const SpeedFunction& v_speed, double epsilon, const std::vector<double>& grid) {
  return 50.0 * v_speed.solve(epsilon * *std::max_element(grid.begin(), grid.end()));
}

/// cfg.n0, or the automatic choice when it is 0. Throws InsufficientN0 when
/// an explicit n0 is below 50 v(eps * max grid).
inline std::int64_t resolve_n0(const FcltConfig& cfg, const SpeedFunction& v_speed) {
  if (cfg.grid.empty()) throw Error(ErrorCode::BadGrid, "empty grid");
  const double need = required_n0(v_speed, cfg.epsilon, cfg.grid);
  if (cfg.n0 <= 0) return std::max<std::int64_t>(100000, static_cast<std::int64_t>(std::ceil(need)));
  if (static_cast<double>(cfg.n0) < need) {
    throw Error(ErrorCode::InsufficientN0, "n0 = " + std::to_string(cfg.n0) + " below 50 v(eps T) = " + detail::fmt(need));
  }
  return cfg.n0;
}

/// FluctuationSample for one config, the building block of run_fclt_experiment.
inline FluctuationSample sample_fluctuations(const FcltConfig& cfg) {
  RateFunctional rf(cfg.measure);
  SpeedFunction v(rf, SpeedVariant::V, cfg.speed_tolerance);
  SpeedFunction vs(rf, SpeedVariant::V_STAR, cfg.speed_tolerance);
  const std::int64_t n0 = resolve_n0(cfg, v);
  JumpKernel kernel(cfg.measure, n0);
  SimulationPlan plan{n0, cfg.seed, 0, cfg.replicates, cfg.threads, cfg.entrance_offset};
  const auto cs = simulate_counts(v, kernel, cfg.epsilon, cfg.grid, plan);
  return fluctuations(cs, cfg.normalization, v, &vs);
}

/// Marginals of X_eps against sqrt(c) Z: variance within k_se standard
/// errors of c t/6 and KS p above alpha / |grid| at every grid time, and
/// each covariance within k_se standard errors of c (s^t)^3/(6 s t). Means
/// are reported but not asserted.
inline ExperimentReport run_fclt_experiment(const FcltConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (cfg.replicates < 1000) throw Error(ErrorCode::DomainError, "FCLT experiment needs at least 1000 replicates");
  RateFunctional rf(cfg.measure);
  SpeedFunction v(rf, SpeedVariant::V, cfg.speed_tolerance);
  const std::int64_t n0 = resolve_n0(cfg, v);
  const FluctuationSample fs = sample_fluctuations(cfg);

  ExperimentReport rep;
  rep.kind = "fclt";
  rep.config = cfg.to_json();
  rep.seed = cfg.seed;
  rep.replicates = cfg.replicates;
  rep.threads = cfg.threads;
  const double c = cfg.measure.kingman_mass();
  detail::summarize(rep, fs, c, cfg.batches);
  rep.extra["required_n0"] = required_n0(v, cfg.epsilon, cfg.grid);
  rep.extra["n0"] = n0;
  rep.extra["entrance_time"] = cfg.entrance_offset ? v.time_to(static_cast<double>(n0)) : 0.0;

  const double alpha = cfg.ks_alpha / static_cast<double>(cfg.grid.size());
  for (const auto& m : rep.marginals) {
    const auto tag = detail::time_tag(m.t);
    rep.checks.push_back(detail::se_check("variance" + tag, m.variance, m.target_variance, cfg.k_se));
    rep.checks.push_back(detail::ks_check("ks" + tag, m.ks, alpha));
    Check mc = detail::se_check("mean" + tag, m.mean, 0.0, cfg.k_se);
    mc.asserted = false;
    rep.checks.push_back(mc);
  }
  for (const auto& cv : rep.covariances) {
    rep.checks.push_back(
        detail::se_check("covariance[" + detail::fmt(cv.s) + "," + detail::fmt(cv.t) + "]", cv.covariance, cv.target, cfg.k_se));
  }
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

struct SharpnessConfig {
  DrivingMeasure measure = DrivingMeasure::kingman();
  std::vector<double> epsilons{1e-3};
  int replicates = 2000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  // 0 picks max(1e5, ceil(50 v(eps))) for each epsilon.
  std::int64_t n0 = 0;
  bool entrance_offset = true;
  std::vector<double> ratio_times{1e-2, 1e-3, 1e-4, 1e-5};
  double oracle_agreement = 0.02;
  std::size_t batches = stats::kDefaultBatches;
  double k_se = 3.0;
  double speed_tolerance = 1e-10;

  nlohmann::json to_json() const {
    return {{"measure", measure.to_json()},   {"epsilons", epsilons},
            {"replicates", replicates},       {"seed", seed},
            {"n0", n0},                       {"entrance_offset", entrance_offset},
            {"ratio_times", ratio_times},     {"oracle_agreement", oracle_agreement},
            {"batches", batches},             {"k_se", k_se},
            {"speed_tolerance", speed_tolerance}};
  }
};

/// The two deterministic estimates of A = lim Psi_1(q) / q^(3/2).
struct GrowthConstantOracles {
  GrowthConstantEstimate from_rates;
  std::vector<double> ratio_times;
  std::vector<double> ratios;  // speed_drift_ratio at ratio_times
  double a_rates = 0.0;
  double a_speed = 0.0;        // ratio at the smallest time over the drift coefficient
  double drift_coefficient = 0.0;
  double relative_gap = 0.0;
};

inline GrowthConstantOracles growth_constant_oracles(const SpeedFunction& v, std::vector<double> ratio_times) {
  if (ratio_times.empty()) throw Error(ErrorCode::DomainError, "need at least one ratio time");
  std::sort(ratio_times.begin(), ratio_times.end(), std::greater<>());
  GrowthConstantOracles o;
  o.from_rates = estimate_growth_constant(v.rates());
  o.a_rates = o.from_rates.estimate;
  o.ratio_times = ratio_times;
  for (double t : ratio_times) o.ratios.push_back(speed_drift_ratio(v, t));
  o.drift_coefficient = drift_coefficient(v.rates().measure());
  o.a_speed = o.drift_coefficient != 0.0 ? o.ratios.back() / o.drift_coefficient : 0.0;
  const double scale = std::max(std::fabs(o.a_rates), std::fabs(o.a_speed));
  o.relative_gap = scale > 0.0 ? std::fabs(o.a_rates - o.a_speed) / scale : 0.0;
  return o;
}

/// Drift of the w-normalized fluctuations when Psi_1(q) / q^(3/2) -> A > 0.
/// Throws OracleMismatch before simulating if the two A estimates disagree.
inline ExperimentReport run_sharpness_experiment(const SharpnessConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (cfg.epsilons.empty()) throw Error(ErrorCode::DomainError, "need at least one epsilon");
  RateFunctional rf(cfg.measure);
  SpeedFunction v(rf, SpeedVariant::V, cfg.speed_tolerance);
  const double c = cfg.measure.kingman_mass();

  ExperimentReport rep;
  rep.kind = "sharpness";
  rep.config = cfg.to_json();
  rep.seed = cfg.seed;
  rep.replicates = cfg.replicates;
  rep.threads = cfg.threads;

  double a = 0.0;
  double drift = 0.0;
  if (!cfg.measure.is_pure_kingman()) {
    const auto o = growth_constant_oracles(v, cfg.ratio_times);
    rep.extra["a_from_rates"] = o.a_rates;
    rep.extra["a_rates_grid"] = o.from_rates.grid;
    rep.extra["a_rates_values"] = o.from_rates.values;
    rep.extra["a_from_speed"] = o.a_speed;
    rep.extra["ratio_times"] = o.ratio_times;
    rep.extra["drift_ratios"] = o.ratios;
    rep.extra["oracle_relative_gap"] = o.relative_gap;
    if (o.relative_gap > cfg.oracle_agreement) {
      throw Error(ErrorCode::OracleMismatch, "A estimates disagree: " + detail::fmt(o.a_rates) + " vs " +
                                                 detail::fmt(o.a_speed));
    }
    a = o.a_rates;
    drift = o.drift_coefficient * a;
  }
  rep.extra["drift_constant"] = drift;
  Check oc;
  oc.name = "a_oracles_agree";
  oc.value = rep.extra.value("oracle_relative_gap", 0.0);
  oc.target = 0.0;
  oc.tolerance = cfg.oracle_agreement;
  oc.passed = oc.value <= cfg.oracle_agreement;
  oc.detail = "relative gap " + detail::fmt(oc.value) + " (limit " + detail::fmt(cfg.oracle_agreement) + ")";
  rep.checks.push_back(oc);

  const std::vector<double> grid{1.0};
  for (std::size_t e = 0; e < cfg.epsilons.size(); ++e) {
    const double eps = cfg.epsilons[e];
    const double need = required_n0(v, eps, grid);
    const std::int64_t n0 = cfg.n0 > 0 ? cfg.n0 : std::max<std::int64_t>(100000, static_cast<std::int64_t>(std::ceil(need)));
    if (static_cast<double>(n0) < need) {
      throw Error(ErrorCode::InsufficientN0, "n0 = " + std::to_string(n0) + " below 50 v(eps) = " + detail::fmt(need));
    }
    JumpKernel kernel(cfg.measure, n0);
    SimulationPlan plan{n0, cfg.seed, static_cast<std::uint64_t>(e) << 40, cfg.replicates, cfg.threads,
                        cfg.entrance_offset};
    const auto cs = simulate_counts(v, kernel, eps, grid, plan);
    const auto xw = fluctuations(cs, Normalization::W, v);
    const auto xv = fluctuations(cs, Normalization::V, v);
    const auto mw = stats::batch_mean(xw.values[0], cfg.batches);
    const auto mv = stats::batch_mean(xv.values[0], cfg.batches);
    const auto vw = stats::batch_variance(xw.values[0], cfg.batches);
    const auto vv = stats::batch_variance(xv.values[0], cfg.batches);
    const std::string tag = "[eps=" + detail::fmt(eps) + "]";
    rep.checks.push_back(detail::se_check("w_mean_drift" + tag, mw, drift, cfg.k_se));
    rep.checks.push_back(detail::se_check("v_mean_zero" + tag, mv, 0.0, cfg.k_se));
    Check cw = detail::se_check("w_variance" + tag, vw, c / 6.0, cfg.k_se);
    cw.asserted = false;
    rep.checks.push_back(cw);
    Check cv = detail::se_check("v_variance" + tag, vv, c / 6.0, cfg.k_se);
    cv.asserted = false;
    rep.checks.push_back(cv);
    rep.extra["runs"].push_back({{"epsilon", eps},
                                 {"n0", n0},
                                 {"entrance_time", cs.start_time},
                                 {"v", xv.speeds[0]},
                                 {"w", xw.speeds[0]},
                                 {"finite_eps_drift", (xv.speeds[0] / xw.speeds[0] - 1.0) / std::sqrt(eps)},
                                 {"w_mean", mw.value},
                                 {"w_mean_se", mw.se},
                                 {"v_mean", mv.value},
                                 {"v_mean_se", mv.se},
                                 {"w_variance", vw.value},
                                 {"w_variance_se", vw.se},
                                 {"v_variance", vv.value},
                                 {"v_variance_se", vv.se}});
  }
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

struct OracleConfig {
  DrivingMeasure measure = DrivingMeasure::kingman();
  int n = 6;
  std::vector<double> times{0.5};
  int replicates = 100000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double tv_limit = 0.02;
  double chi_square_alpha = 0.01;

  nlohmann::json to_json() const {
    return {{"measure", measure.to_json()}, {"n", n},
            {"times", times},               {"replicates", replicates},
            {"seed", seed},                 {"tv_limit", tv_limit},
            {"chi_square_alpha", chi_square_alpha}};
  }
};

/// Histograms of N_t from CHAIN, PAINTBOX_ORACLE (atoms-only measures) and
/// the partition oracle, compared pairwise. TV distance below the limit is
/// asserted; the chi-square homogeneity p-values are reported. When Lambda
/// has an atom at 1, the frequency of a first jump n -> 1 is compared with its
/// exact probability from the transition row.
inline ExperimentReport run_oracle_equivalence(const OracleConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (cfg.n < 2 || cfg.n > 30) throw Error(ErrorCode::DomainError, "oracle equivalence needs 2 <= n <= 30");
  detail::check_grid(cfg.times);
  RateFunctional rf(cfg.measure);
  const JumpKernel kernel(cfg.measure, cfg.n);
  const double t_end = cfg.times.back();
  const auto reps = static_cast<std::size_t>(cfg.replicates);

  struct BackendRun {
    std::string name;
    std::vector<std::vector<std::int64_t>> counts;  // [time][replicate]
    std::vector<std::uint8_t> first_jump;  // 0 none before t_end, 1 partial, 2 straight to one block
  };
  std::vector<BackendRun> runs;
  auto run_backend = [&](const std::string& name, std::uint64_t id, auto&& simulate_one) {
    BackendRun br{name, std::vector<std::vector<std::int64_t>>(cfg.times.size(), std::vector<std::int64_t>(reps)),
                  std::vector<std::uint8_t>(reps)};
    parallel_for(reps, cfg.threads, [&](std::size_t r) {
      const BlockCountPath p = simulate_one(StreamId{cfg.seed, (id << 40) + r});
      for (std::size_t g = 0; g < cfg.times.size(); ++g) br.counts[g][r] = p.count_at(cfg.times[g]);
      br.first_jump[r] = p.counts.empty() ? 0 : (p.counts.front() == 1 ? 2 : 1);
    });
    runs.push_back(std::move(br));
  };
  auto config_for = [&](Backend b, StreamId s) {
    SimConfig sc{cfg.measure, cfg.n, t_end, b, s, 0.0};
    return sc;
  };
  run_backend("CHAIN", 1, [&](StreamId s) { return simulate_chain(config_for(Backend::CHAIN, s), kernel); });
  if (cfg.measure.atoms_only()) {
    run_backend("PAINTBOX_ORACLE", 2,
                [&](StreamId s) { return simulate_paintbox_oracle(config_for(Backend::PAINTBOX_ORACLE, s)); });
  }
  run_backend("PARTITION", 3, [&](StreamId s) { return simulate_partition_oracle(rf, cfg.n, t_end, s).counts; });

  ExperimentReport rep;
  rep.kind = "oracle_equivalence";
  rep.config = cfg.to_json();
  rep.seed = cfg.seed;
  rep.replicates = cfg.replicates;
  rep.threads = cfg.threads;
  const std::size_t n_tests = cfg.times.size() * runs.size() * (runs.size() - 1) / 2;
  for (std::size_t g = 0; g < cfg.times.size(); ++g) {
    std::vector<stats::Histogram> h;
    for (const auto& br : runs) h.push_back(stats::histogram(br.counts[g]));
    nlohmann::json hj;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      nlohmann::json cells = nlohmann::json::object();
      for (const auto& [k, v] : h[i]) cells[std::to_string(k)] = v;
      hj[runs[i].name] = cells;
    }
    rep.extra["histograms"][detail::fmt(cfg.times[g])] = hj;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      for (std::size_t j = i + 1; j < runs.size(); ++j) {
        const std::string tag = runs[i].name + "~" + runs[j].name + detail::time_tag(cfg.times[g]);
        const double tv = stats::total_variation(h[i], h[j]);
        Check tc;
        tc.name = "tv:" + tag;
        tc.value = tv;
        tc.target = 0.0;
        tc.tolerance = cfg.tv_limit;
        tc.passed = tv < cfg.tv_limit;
        tc.detail = "TV " + detail::fmt(tv) + " (limit " + detail::fmt(cfg.tv_limit) + ")";
        rep.checks.push_back(tc);
        const auto chi = stats::chi_square_two_sample(h[i], h[j]);
        Check cc;
        cc.name = "chi2:" + tag;
        cc.value = chi.p_value;
        cc.target = cfg.chi_square_alpha / static_cast<double>(n_tests);
        cc.tolerance = cc.target;
        cc.passed = chi.p_value > cc.target;
        cc.asserted = false;
        cc.detail = "p = " + detail::fmt(chi.p_value) + " (chi2 " + detail::fmt(chi.statistic) + ", dof " +
                    detail::fmt(chi.dof) + ")";
        rep.checks.push_back(cc);
      }
    }
  }
  const bool atom_at_one = std::any_of(cfg.measure.atoms().begin(), cfg.measure.atoms().end(),
                                       [](const Atom& a) { return a.location >= 1.0; });
  if (atom_at_one) {
    const auto row = rf.transition_row(cfg.n);
    const double p = row->rate(cfg.n) / row->total;
    rep.extra["full_merge_probability"] = p;
    for (const auto& br : runs) {
      // The jump type is independent of its time, so condition on a jump.
      double hits = 0.0;
      double nrep = 0.0;
      for (auto f : br.first_jump) {
        hits += f == 2 ? 1.0 : 0.0;
        nrep += f > 0 ? 1.0 : 0.0;
      }
      if (nrep == 0.0) continue;
      const stats::Estimate e{hits / nrep, std::sqrt(p * (1.0 - p) / nrep)};
      rep.checks.push_back(detail::se_check("full_merge_first_jump:" + br.name, e, p, 3.0));
    }
  }
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace lcoal
