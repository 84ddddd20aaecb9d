// lcoal: command-line front end.
//
// Exit codes: 0 success, 1 bad configuration or usage, 2 numerical failure,
// 3 an asserted experiment criterion failed.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lcoal/lcoal.hpp"

using nlohmann::json;
using namespace lcoal;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitCriterion = 3;

// 17 significant digits; integral values keep a trailing ".0".
std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s(buf);
  if (std::isfinite(x) && s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
}

DrivingMeasure load_measure(const std::string& path) { return DrivingMeasure::from_json(read_json_file(path)); }

unsigned default_threads() {
  if (const char* s = std::getenv("LCOAL_THREADS")) {
    const int n = std::atoi(s);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

// Writes to --output when given, else stdout.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw Error(ErrorCode::ConfigError, "cannot write " + path);
    }
  }
  std::ostream& out() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

struct Common {
  std::string measure;
  std::string output;
  std::string format = "csv";
  std::uint64_t seed = 1;
  unsigned threads = default_threads();
};

void add_measure(CLI::App* app, Common& c) {
  app->add_option("--measure", c.measure, "driving measure JSON file")->required()->check(CLI::ExistingFile);
}
void add_output(CLI::App* app, Common& c) {
  app->add_option("--output", c.output, "output file (default stdout)");
  app->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

int cmd_psi(const Common& c, const std::vector<double>& qs, const std::string& which) {
  RateFunctional rf(load_measure(c.measure));
  Sink sink(c.output);
  std::vector<double> vals;
  for (double q : qs) {
    if (which == "psi") vals.push_back(rf.psi(q));
    else if (which == "psi_star") vals.push_back(rf.psi_star(q));
    else vals.push_back(rf.psi1(q));
  }
  if (c.format == "json") {
    sink.out() << json{{"function", which}, {"measure", rf.measure().to_json()}, {"q", qs}, {"value", vals}}.dump(2)
               << '\n';
  } else if (qs.size() == 1) {
    sink.out() << num(vals[0]) << '\n';
  } else {
    sink.out() << "q," << which << '\n';
    for (std::size_t i = 0; i < qs.size(); ++i) sink.out() << num(qs[i]) << ',' << num(vals[i]) << '\n';
  }
  return 0;
}

int cmd_speed(const Common& c, const std::vector<double>& ts, const std::string& variant, double tol) {
  RateFunctional rf(load_measure(c.measure));
  SpeedVariant sv = variant == "V" ? SpeedVariant::V : variant == "V_STAR" ? SpeedVariant::V_STAR : SpeedVariant::W;
  SpeedFunction sf(rf, sv, tol);
  Sink sink(c.output);
  std::vector<double> vals;
  for (double t : ts) vals.push_back(sf.solve(t));
  if (c.format == "json") {
    sink.out() << json{{"variant", variant}, {"tolerance", tol}, {"measure", rf.measure().to_json()}, {"t", ts},
                       {"value", vals}}
                      .dump(2)
               << '\n';
  } else if (ts.size() == 1) {
    sink.out() << num(vals[0]) << '\n';
  } else {
    sink.out() << "t,v\n";
    for (std::size_t i = 0; i < ts.size(); ++i) sink.out() << num(ts[i]) << ',' << num(vals[i]) << '\n';
  }
  return 0;
}

int cmd_simulate(const Common& c, std::int64_t n0, double t_end, double start_time, const std::string& backend,
                 std::uint64_t stream) {
  SimConfig cfg{load_measure(c.measure), n0, t_end,
                backend == "chain" ? Backend::CHAIN : Backend::PAINTBOX_ORACLE, StreamId{c.seed, stream}, start_time};
  const BlockCountPath path = simulate(cfg);
  json meta = path_metadata(cfg, path);
  Sink sink(c.output);
  if (c.format == "json") {
    meta["times"] = path.times;
    meta["counts"] = path.counts;
    sink.out() << meta.dump(2) << '\n';
    return 0;
  }
  path.write_csv(sink.out());
  if (!c.output.empty()) {
    std::ofstream side(c.output + ".json");
    if (!side) throw Error(ErrorCode::ConfigError, "cannot write " + c.output + ".json");
    side << meta.dump(2) << '\n';
  } else {
    std::cerr << meta.dump() << '\n';
  }
  return 0;
}

int cmd_limit(const Common& c, const std::vector<double>& grid, double scale_c, int paths, const std::string& method,
              double step) {
  Sink sink(c.output);
  EulerOptions opt;
  opt.step = step;
  std::vector<LimitPath> out;
  for (int r = 0; r < paths; ++r) {
    Rng rng(c.seed, static_cast<std::uint64_t>(r));
    out.push_back(method == "exact" ? sample_limit_path(grid, scale_c, rng) : euler_sde_path(grid, scale_c, rng, opt));
  }
  if (c.format == "json") {
    json j{{"method", method}, {"scale_c", scale_c}, {"seed", c.seed}, {"grid", grid}, {"paths", json::array()}};
    for (const auto& p : out) j["paths"].push_back(p.values);
    sink.out() << j.dump(2) << '\n';
  } else {
    sink.out() << "path,t,value\n";
    for (std::size_t r = 0; r < out.size(); ++r) {
      for (std::size_t g = 0; g < grid.size(); ++g) sink.out() << r << ',' << num(grid[g]) << ',' << num(out[r].values[g]) << '\n';
    }
  }
  return 0;
}

template <class T>
void take(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

int emit_report(const ExperimentReport& rep, const Common& c, const std::string& report_format, bool assert_pass) {
  Sink sink(c.output);
  if (report_format == "json") {
    sink.out() << rep.to_json().dump(2) << '\n';
  } else {
    sink.out() << rep.to_text();
  }
  return assert_pass && !rep.passed() ? kExitCriterion : 0;
}

int cmd_experiment(Common c, const std::string& config_path, bool assert_pass, const std::string& report_format,
                   const std::string& samples_csv, bool seed_given) {
  const json j = read_json_file(config_path);
  try {
    const std::string kind = j.value("kind", "fclt");
    if (!seed_given) take(j, "seed", c.seed);
    if (kind == "fclt") {
      FcltConfig cfg;
      cfg.measure = DrivingMeasure::from_json(j.at("measure"));
      take(j, "epsilon", cfg.epsilon);
      take(j, "grid", cfg.grid);
      if (j.contains("normalization")) cfg.normalization = normalization_from_string(j.at("normalization"));
      take(j, "replicates", cfg.replicates);
      take(j, "n0", cfg.n0);
      take(j, "entrance_offset", cfg.entrance_offset);
      take(j, "k_se", cfg.k_se);
      take(j, "ks_alpha", cfg.ks_alpha);
      cfg.seed = c.seed;
      cfg.threads = c.threads;
      const auto rep = run_fclt_experiment(cfg);
      if (!samples_csv.empty()) {
        std::ofstream out(samples_csv);
        if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + samples_csv);
        write_fluctuation_csv(out, sample_fluctuations(cfg));
      }
      return emit_report(rep, c, report_format, assert_pass);
    }
    if (kind == "sharpness") {
      SharpnessConfig cfg;
      cfg.measure = DrivingMeasure::from_json(j.at("measure"));
      take(j, "epsilons", cfg.epsilons);
      take(j, "replicates", cfg.replicates);
      take(j, "n0", cfg.n0);
      take(j, "ratio_times", cfg.ratio_times);
      take(j, "oracle_agreement", cfg.oracle_agreement);
      take(j, "entrance_offset", cfg.entrance_offset);
      take(j, "k_se", cfg.k_se);
      cfg.seed = c.seed;
      cfg.threads = c.threads;
      return emit_report(run_sharpness_experiment(cfg), c, report_format, assert_pass);
    }
    if (kind == "oracle") {
      OracleConfig cfg;
      cfg.measure = DrivingMeasure::from_json(j.at("measure"));
      take(j, "n", cfg.n);
      take(j, "times", cfg.times);
      take(j, "replicates", cfg.replicates);
      take(j, "tv_limit", cfg.tv_limit);
      cfg.seed = c.seed;
      cfg.threads = c.threads;
      return emit_report(run_oracle_equivalence(cfg), c, report_format, assert_pass);
    }
    throw Error(ErrorCode::ConfigError, "unknown experiment kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, config_path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lambda-coalescents with a Kingman component: rates, speeds, simulation, limit laws"};
  app.require_subcommand(1);
  app.allow_extras(false);

  Common common;

  auto* psi = app.add_subcommand("psi", "evaluate Psi, Psi* or Psi_1");
  std::vector<double> qs;
  std::string which = "psi";
  add_measure(psi, common);
  add_output(psi, common);
  psi->add_option("--q", qs, "arguments q")->required();
  psi->add_option("--function", which, "psi, psi_star or psi1")->check(CLI::IsMember({"psi", "psi_star", "psi1"}));

  auto* speed = app.add_subcommand("speed", "solve for the speed v_t, v*_t or w_t");
  std::vector<double> ts;
  std::string variant = "V";
  double tol = 1e-10;
  add_measure(speed, common);
  add_output(speed, common);
  speed->add_option("--t", ts, "times t > 0")->required();
  speed->add_option("--variant", variant, "V, V_STAR or W")->check(CLI::IsMember({"V", "V_STAR", "W"}));
  speed->add_option("--tolerance", tol, "relative tolerance on T(v) = t");

  auto* sim = app.add_subcommand("simulate", "simulate one block-counting path");
  std::int64_t n0 = 100;
  double t_end = 1.0;
  double start_time = 0.0;
  std::string backend = "chain";
  std::uint64_t stream = 0;
  add_measure(sim, common);
  add_output(sim, common);
  sim->add_option("--n0", n0, "initial number of blocks")->required();
  sim->add_option("--t-end", t_end, "absolute end time");
  sim->add_option("--start-time", start_time, "absolute time of the n0 blocks");
  sim->add_option("--backend", backend, "chain or paintbox")->check(CLI::IsMember({"chain", "paintbox"}));
  sim->add_option("--seed", common.seed, "master seed");
  sim->add_option("--stream", stream, "stream index");

  auto* lim = app.add_subcommand("limit", "sample the Gaussian limit process");
  std::vector<double> grid{1.0};
  double scale_c = 1.0;
  int paths = 1;
  std::string method = "exact";
  double step = 1e-4;
  add_output(lim, common);
  lim->add_option("--grid", grid, "increasing positive times");
  lim->add_option("--c", scale_c, "Kingman mass c (scales by sqrt c)");
  lim->add_option("--paths", paths, "number of paths")->check(CLI::PositiveNumber);
  lim->add_option("--method", method, "exact or euler")->check(CLI::IsMember({"exact", "euler"}));
  lim->add_option("--step", step, "Euler step");
  lim->add_option("--seed", common.seed, "master seed");

  auto* exp = app.add_subcommand("experiment", "run a Monte-Carlo experiment from a JSON config");
  std::string config_path;
  bool assert_pass = false;
  std::string report_format = "text";
  std::string samples_csv;
  exp->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
  exp->add_flag("--assert", assert_pass, "exit 3 unless every asserted check passes");
  exp->add_option("--format", report_format, "text or json")->check(CLI::IsMember({"text", "json"}));
  exp->add_option("--output", common.output, "output file (default stdout)");
  auto* seed_opt = exp->add_option("--seed", common.seed, "master seed (overrides the config)");
  exp->add_option("--threads", common.threads, "worker threads (default $LCOAL_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  exp->add_option("--samples-csv", samples_csv, "also write per-replicate X values (fclt only)");

  auto* orc = app.add_subcommand("oracle-check", "compare simulation backends on a small sample size");
  int n = 6;
  std::vector<double> otimes{0.5};
  int oreps = 100000;
  add_measure(orc, common);
  orc->add_option("--n", n, "sample size (<= 30)");
  orc->add_option("--t", otimes, "query times");
  orc->add_option("--replicates", oreps, "replicates per backend");
  orc->add_option("--seed", common.seed, "master seed");
  orc->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
  orc->add_option("--output", common.output, "output file (default stdout)");
  bool orc_assert = false;
  std::string orc_format = "text";
  orc->add_flag("--assert", orc_assert, "exit 3 unless every asserted check passes");
  orc->add_option("--format", orc_format, "text or json")->check(CLI::IsMember({"text", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*psi) return cmd_psi(common, qs, which);
    if (*speed) return cmd_speed(common, ts, variant, tol);
    if (*sim) return cmd_simulate(common, n0, t_end, start_time, backend, stream);
    if (*lim) return cmd_limit(common, grid, scale_c, paths, method, step);
    if (*exp) return cmd_experiment(common, config_path, assert_pass, report_format, samples_csv, seed_opt->count() > 0);
    if (*orc) {
      OracleConfig cfg;
      cfg.measure = load_measure(common.measure);
      cfg.n = n;
      cfg.times = otimes;
      cfg.replicates = oreps;
      cfg.seed = common.seed;
      cfg.threads = common.threads;
      return emit_report(run_oracle_equivalence(cfg), common, orc_format, orc_assert);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.is_config_error()) {
      std::cerr << app.help();
      return kExitConfig;
    }
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
