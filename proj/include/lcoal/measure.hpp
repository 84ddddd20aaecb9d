#pragma once

// Driving measures Lambda = c * delta_0 + sum of weighted atoms + sum of
// weighted Beta densities, all on [0, 1].

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcoal/detail/numerics.hpp"
#include "lcoal/errors.hpp"
#include "lcoal/quadrature.hpp"

namespace lcoal {

struct Atom {
  double location;  // y in (0, 1]
  double weight;    // mass of Lambda at y
};

struct BetaComponent {
  double alpha;
  double beta;
  double weight;  // total mass carried by this Beta(alpha, beta) density
};

class DrivingMeasure {
 public:
  /// Checks the raw fields and renormalizes the weights when the total mass
  /// is within 1e-9 of one.
  static DrivingMeasure validate(double kingman_mass, std::vector<Atom> atoms = {},
                                 std::vector<BetaComponent> betas = {}) {
    if (!(kingman_mass > 0.0)) {
      throw Error(ErrorCode::NoKingmanAtom, "kingman_mass must be > 0, got " + fmt(kingman_mass));
    }
    for (const Atom& a : atoms) {
      if (!(a.location > 0.0 && a.location <= 1.0)) {
        throw Error(ErrorCode::BadSupport, "atom location outside (0, 1]: " + fmt(a.location));
      }
      if (!(a.weight > 0.0) || !std::isfinite(a.weight)) {
        throw Error(ErrorCode::DomainError, "atom weight must be positive: " + fmt(a.weight));
      }
    }
    for (const BetaComponent& b : betas) {
      if (!(b.alpha > 0.0 && b.beta > 0.0) || !std::isfinite(b.alpha) || !std::isfinite(b.beta)) {
        throw Error(ErrorCode::DomainError, "Beta shape parameters must be positive");
      }
      if (!(b.weight > 0.0) || !std::isfinite(b.weight)) {
        throw Error(ErrorCode::DomainError, "Beta weight must be positive: " + fmt(b.weight));
      }
    }
    detail::CompensatedSum total;
    total += kingman_mass;
    for (const Atom& a : atoms) total += a.weight;
    for (const BetaComponent& b : betas) total += b.weight;
    const double mass = total.value();
    if (!(std::fabs(mass - 1.0) < 1e-9)) {
      throw Error(ErrorCode::NonProbability, "total mass " + fmt(mass) + " is not 1");
    }
    DrivingMeasure m;
    m.kingman_mass_ = kingman_mass / mass;
    m.atoms_ = std::move(atoms);
    m.betas_ = std::move(betas);
    detail::CompensatedSum rest;
    for (Atom& a : m.atoms_) {
      a.weight /= mass;
      rest += a.weight;
    }
    for (BetaComponent& b : m.betas_) {
      b.weight /= mass;
      rest += b.weight;
    }
    m.non_kingman_mass_ = rest.value();
    return m;
  }

  static DrivingMeasure kingman() { return validate(1.0); }

  double kingman_mass() const noexcept { return kingman_mass_; }
  /// 1 - c, summed from the component weights rather than subtracted.
  double non_kingman_mass() const noexcept { return non_kingman_mass_; }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  const std::vector<BetaComponent>& betas() const noexcept { return betas_; }
  bool is_pure_kingman() const noexcept { return atoms_.empty() && betas_.empty(); }
  bool atoms_only() const noexcept { return betas_.empty(); }

  /// FNV-1a over the bit patterns of every field.
  std::uint64_t content_hash() const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](double x) {
      const auto bits = std::bit_cast<std::uint64_t>(x);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    mix(kingman_mass_);
    mix(static_cast<double>(atoms_.size()));
    for (const Atom& a : atoms_) {
      mix(a.location);
      mix(a.weight);
    }
    mix(static_cast<double>(betas_.size()));
    for (const BetaComponent& b : betas_) {
      mix(b.alpha);
      mix(b.beta);
      mix(b.weight);
    }
    return h;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kingman_mass"] = kingman_mass_;
    j["atoms"] = nlohmann::json::array();
    for (const Atom& a : atoms_) j["atoms"].push_back({{"y", a.location}, {"w", a.weight}});
    j["betas"] = nlohmann::json::array();
    for (const BetaComponent& b : betas_) {
      j["betas"].push_back({{"alpha", b.alpha}, {"beta", b.beta}, {"w", b.weight}});
    }
    return j;
  }

  static DrivingMeasure from_json(const nlohmann::json& j) {
    try {
      const double c = j.at("kingman_mass").get<double>();
      std::vector<Atom> atoms;
      if (j.contains("atoms")) {
        for (const auto& a : j.at("atoms")) atoms.push_back({a.at("y").get<double>(), a.at("w").get<double>()});
      }
      std::vector<BetaComponent> betas;
      if (j.contains("betas")) {
        for (const auto& b : j.at("betas")) {
          betas.push_back({b.at("alpha").get<double>(), b.at("beta").get<double>(), b.at("w").get<double>()});
        }
      }
      return validate(c, std::move(atoms), std::move(betas));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("bad measure JSON: ") + e.what());
    }
  }

 private:
  DrivingMeasure() = default;

  static std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
  }

  double kingman_mass_ = 1.0;
  double non_kingman_mass_ = 0.0;
  std::vector<Atom> atoms_;
  std::vector<BetaComponent> betas_;
};

/// E[g(Y)] for Y ~ Beta(alpha, beta). The substitutions y = u^(1/alpha) on
/// (0, 1/2] and 1 - y = s^(1/beta) on [1/2, 1) turn both endpoint
/// singularities of the density into constants. `y_cuts` are extra panel
/// edges in y (where g changes scale).
template <class G>
double beta_expectation(double alpha, double beta, G&& g, std::span<const double> y_cuts = {},
                        const quad::Options& opt = {}) {
  const double log_b = detail::log_beta(alpha, beta);
  const double left_norm = std::exp(-log_b) / alpha;
  const double right_norm = std::exp(-log_b) / beta;

  std::vector<double> u_cuts;
  std::vector<double> s_cuts;
  for (double y : y_cuts) {
    if (y > 0.0 && y < 0.5) u_cuts.push_back(std::pow(y, alpha));
    if (y > 0.5 && y < 1.0) s_cuts.push_back(std::pow(1.0 - y, beta));
  }
  const double u_max = std::pow(0.5, alpha);
  const double s_max = std::pow(0.5, beta);

  auto left = [&](double u) {
    const double y = std::pow(u, 1.0 / alpha);
    const double one_minus = 1.0 - y;
    return g(y) * (beta == 1.0 ? 1.0 : std::pow(one_minus, beta - 1.0));
  };
  auto right = [&](double s) {
    const double one_minus = std::pow(s, 1.0 / beta);
    const double y = 1.0 - one_minus;
    return g(y) * (alpha == 1.0 ? 1.0 : std::pow(y, alpha - 1.0));
  };
  const auto le = quad::make_edges(0.0, u_max, u_cuts);
  const auto re = quad::make_edges(0.0, s_max, s_cuts);
  const double l = quad::integrate_panels(left, le, opt).value;
  const double r = quad::integrate_panels(right, re, opt).value;
  return left_norm * l + right_norm * r;
}

/// Integral of g against (1 - c) * Lambda_1, i.e. the non-Kingman part of
/// Lambda with its absolute weights.
template <class G>
double integrate_non_kingman(const DrivingMeasure& m, G&& g, std::span<const double> y_cuts = {},
                             const quad::Options& opt = {}) {
  detail::CompensatedSum acc;
  for (const Atom& a : m.atoms()) acc += a.weight * g(a.location);
  for (const BetaComponent& b : m.betas()) acc += b.weight * beta_expectation(b.alpha, b.beta, g, y_cuts, opt);
  return acc.value();
}

/// Integral of g against the probability measure Lambda_1; 0 when c = 1.
template <class G>
double integrate_lambda1(const DrivingMeasure& m, G&& g, std::span<const double> y_cuts = {},
                         const quad::Options& opt = {}) {
  if (m.is_pure_kingman()) return 0.0;
  return integrate_non_kingman(m, std::forward<G>(g), y_cuts, opt) / m.non_kingman_mass();
}

}  // namespace lcoal
