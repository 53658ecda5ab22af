#pragma once

// Batch runs: config loading, simulation, report files.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "polysweep/crawler.hpp"
#include "polysweep/errors.hpp"
#include "polysweep/format.hpp"
#include "polysweep/scenarios.hpp"
#include "polysweep/sweeping.hpp"

namespace polysweep::cli {

enum ExitCode : int { ok = 0, failure = 1, rejected_gait = 2, inadmissible_start = 3, bad_config = 4 };

/// Thrown for configs that cannot be run; maps to exit code 4.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::uint64_t default_seed = 20240611;

struct RunConfig {
  std::optional<std::string> scenario;
  std::optional<nlohmann::json> problem;
  std::optional<nlohmann::json> gait;
  std::optional<double> t0;
  std::optional<int> periods;
  std::optional<int> steps;
  double tol = 1e-9;
  double tol_ft = 1e-9;
  double tol_v = 1e-6;
  /// Explicit initial states; when empty, `random_starts` are drawn
  /// (or the scenario default is used when that is zero too).
  std::vector<std::vector<double>> starts;
  int random_starts = 0;
  std::uint64_t seed = default_seed;
  std::filesystem::path out = "out";
  bool compare = false;
};

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    for (const auto& [key, _] : j.items()) {
      static const std::vector<std::string> known{"scenario", "problem", "gait",          "t0",   "periods",
                                                  "steps",    "tol",     "tol_ft",        "tol_v", "starts",
                                                  "seed",     "out",     "random_starts", "compare"};
      if (std::find(known.begin(), known.end(), key) == known.end())
        throw ConfigError("unknown config key '" + key + "'");
    }
    if (j.contains("scenario")) c.scenario = j.at("scenario").get<std::string>();
    if (j.contains("problem")) c.problem = j.at("problem");
    if (j.contains("gait")) c.gait = j.at("gait");
    if (j.contains("t0")) c.t0 = j.at("t0").get<double>();
    if (j.contains("periods")) c.periods = j.at("periods").get<int>();
    if (j.contains("steps")) c.steps = j.at("steps").get<int>();
    c.tol = j.value("tol", c.tol);
    c.tol_ft = j.value("tol_ft", c.tol_ft);
    c.tol_v = j.value("tol_v", c.tol_v);
    if (j.contains("starts")) c.starts = j.at("starts").get<std::vector<std::vector<double>>>();
    c.random_starts = j.value("random_starts", 0);
    c.seed = j.value("seed", c.seed);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    c.compare = j.value("compare", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Scenario described by the config, with config overrides applied.
inline Scenario resolve_scenario(const RunConfig& c) {
  const int sources = int(c.scenario.has_value()) + int(c.problem.has_value()) + int(c.gait.has_value());
  if (sources != 1) throw ConfigError("config needs exactly one of scenario, problem, gait");
  Scenario s = [&]() -> Scenario {
    try {
      if (c.scenario) return find_scenario(*c.scenario);
      if (c.gait) return gait_scenario("gait", "gait from config", gait_from_json(*c.gait));
      auto p = problem_from_json(*c.problem);
      Scenario out{"problem", "problem from config", p};
      out.start = Vector::Zero(p.dim());
      return out;
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    } catch (const DimensionMismatch& e) {
      throw ConfigError(e.what());
    }
  }();
  if (c.t0) s.t0 = *c.t0;
  if (c.periods) s.periods = *c.periods;
  if (c.steps) s.steps_per_period = *c.steps;
  if (s.periods < 2) throw ConfigError("periods must be at least 2");
  if (s.steps_per_period < 1) throw ConfigError("steps must be positive");
  if (s.is_gait() && s.periods < 3) throw ConfigError("velocity runs need at least 3 periods");
  const double h = sweeping_problem(s).period() / s.steps_per_period;
  const bool aligned = s.is_gait() ? s.gait().aligned_to_grid(s.t0, h) : sweeping_problem(s).aligned_to_grid(s.t0, h);
  if (!aligned) throw ConfigError("steps per period do not align the grid with every signal breakpoint");
  return s;
}

inline std::vector<Vector> initial_states(const RunConfig& c, const Scenario& s) {
  std::vector<Vector> out;
  const auto n = s.start.size();
  for (const auto& v : c.starts) {
    if (static_cast<Eigen::Index>(v.size()) != n)
      throw ConfigError("initial state has length " + std::to_string(v.size()) + ", expected " + std::to_string(n));
    out.push_back(Eigen::Map<const Vector>(v.data(), n));
  }
  if (c.random_starts > 0) {
    std::mt19937_64 rng(c.seed);
    for (int i = 0; i < c.random_starts; ++i) {
      if (s.is_gait())
        out.push_back(random_admissible_state(s.gait(), s.t0, rng));
      else
        out.push_back(sample_uniform(sweeping_problem(s).set().freeze(s.t0), rng));
    }
  }
  if (out.empty()) out.push_back(s.start);
  return out;
}

namespace detail {

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << body;
}

inline std::string indexed(const std::string& stem, std::size_t i, const std::string& ext) {
  if (i == 0) return stem + ext;
  std::ostringstream os;
  os << stem << '_' << std::setw(3) << std::setfill('0') << i << ext;
  return os.str();
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

/// Reduced pipeline vs slip-pattern oracle, sup over all grid times and blocks.
inline double solver_distance(const Gait& g, const Vector& x0, double t0, int periods, int steps,
                              double tol = 1e-9) {
  const auto reduced = simulate_reduced(g, x0, t0, periods, steps, {.poly = {.tol = tol}});
  const auto oracle = incremental_oracle(g, x0, t0, periods, steps, {.tol = tol});
  return (reduced.motion.x - oracle.x).cwiseAbs().maxCoeff();
}

/// Runs a resolved config, writing every report into c.out.
/// Diagnostics go to `log`.
inline int run(const RunConfig& c, std::ostream& log) {
  const Scenario s = resolve_scenario(c);
  const auto starts = initial_states(c, s);
  std::filesystem::create_directories(c.out);
  const ClassifyOptions classify{.tol_ft = c.tol_ft};
  const PolyhedronOptions poly{.tol = c.tol};

  nlohmann::json conv = {{"scenario", s.name}, {"seed", c.seed}, {"t0", s.t0},
                         {"periods", s.periods}, {"steps", s.steps_per_period}};
  nlohmann::json runs = nlohmann::json::array();
  std::ostringstream summary;
  summary << "scenario: " << s.name << " (" << s.description << ")\n"
          << "periods: " << s.periods << ", steps per period: " << s.steps_per_period << ", seed: " << c.seed
          << "\n";

  if (!s.is_gait()) {
    const auto& problem = std::get<SweepingProblem>(s.system);
    for (std::size_t i = 0; i < starts.size(); ++i) {
      const auto traj = simulate(problem, starts[i], s.t0, s.periods, s.steps_per_period, {poly});
      std::ostringstream csv;
      write_trajectory_csv(csv, traj);
      detail::write_file(c.out / detail::indexed("trajectory", i, ".csv"), csv.str());
      const auto report = convergence_report(traj, classify);
      nlohmann::json r = report;
      r["start"] = detail::to_std(starts[i]);
      runs.push_back(r);
      summary << "start " << i << ": " << to_string(report.classification.kind);
      if (report.classification.kind == Classification::Kind::finite_time)
        summary << " (q* = " << report.classification.q_star << ")";
      if (report.classification.kind == Classification::Kind::geometric)
        summary << " (ratio " << format_double(report.classification.ratio) << ")";
      summary << ", residual " << format_double(report.cycle.residual) << "\n";
    }
    conv["runs"] = runs;
    conv["classification"] = runs.front()["classification"];
    detail::write_file(c.out / "convergence.json", detail::dump(conv));
    detail::write_file(c.out / "summary.txt", summary.str());
    return ok;
  }

  const Gait& g = s.gait();
  nlohmann::json vel = {{"scenario", s.name}, {"seed", c.seed}, {"tol_v", c.tol_v}};
  nlohmann::json vruns = nlohmann::json::array();
  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  double margin = 0.0;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const auto run = simulate_reduced(g, starts[i], s.t0, s.periods, s.steps_per_period,
                                      {.poly = poly, .max_degenerate_fraction = 1e-3});
    for (const auto& w : run.warnings) log << "warning: " << w << "\n";
    std::ostringstream csv, mcsv;
    write_trajectory_csv(csv, run.sweep);
    write_motion_csv(mcsv, run.motion);
    detail::write_file(c.out / detail::indexed("trajectory", i, ".csv"), csv.str());
    detail::write_file(c.out / detail::indexed("motion", i, ".csv"), mcsv.str());

    const auto report = convergence_report(run.sweep, classify);
    nlohmann::json r = report;
    r["start"] = detail::to_std(starts[i]);
    runs.push_back(r);

    const auto v = estimate_velocity(run.motion, c.tol_v);
    const auto rp = running_periodic_decomposition(run.motion, c.tol_v);
    nlohmann::json vr = {{"start", detail::to_std(starts[i])},
                         {"v0", v.v0},
                         {"per_period", v.per_period},
                         {"converged", v.converged},
                         {"x0", rp.x0},
                         {"periodic_residual", rp.residual}};
    if (c.compare) vr["oracle_sup_distance"] = solver_distance(g, starts[i], s.t0, s.periods, s.steps_per_period, c.tol);
    vruns.push_back(vr);
    vmin = std::min(vmin, v.v0), vmax = std::max(vmax, v.v0);
    summary << "start " << i << ": v0 = " << format_double(v.v0) << (v.converged ? "" : " (not converged)");
    if (c.compare) summary << ", oracle distance " << format_double(vr["oracle_sup_distance"].get<double>());
    summary << "\n";
    if (i == 0) {
      margin = run.margin.min_margin;
      summary << "uniqueness margin: " << format_double(margin) << "\n";
    }
  }
  vel["runs"] = vruns;
  vel["v0"] = vruns.front()["v0"];
  vel["per_period"] = vruns.front()["per_period"];
  vel["converged"] = vruns.front()["converged"];
  vel["margin"] = margin;
  vel["spread"] = vmax - vmin;
  conv["runs"] = runs;
  conv["classification"] = runs.front()["classification"];
  summary << "velocity spread: " << format_double(vmax - vmin) << "\n";
  detail::write_file(c.out / "convergence.json", detail::dump(conv));
  detail::write_file(c.out / "velocity.json", detail::dump(vel));
  detail::write_file(c.out / "summary.txt", summary.str());
  return ok;
}

/// Margin report for a gait; nonzero status when the run would be rejected.
inline int check_gait(const RunConfig& c, std::ostream& out) {
  const Scenario s = resolve_scenario(c);
  if (!s.is_gait()) throw ConfigError("check-gait needs a gait or a gait scenario");
  const Gait& g = s.gait();
  const auto grid = period_grid(s.t0, g.period(), s.steps_per_period);
  const auto margin = check_gait_uniqueness(g, grid, c.tol);
  const auto k = build_moving_set(g);
  int licq_failures = 0;
  for (double t : grid)
    if (!check_licq(k.freeze(t), {.tol = c.tol}).holds) ++licq_failures;
  out << "gait: " << s.name << "\n"
      << "min uniqueness margin: " << format_double(margin.min_margin) << " at t = " << format_double(margin.worst_time)
      << "\n"
      << "grid points with zero margin: " << format_double(margin.degenerate_fraction * 100.0) << "%\n"
      << "grid points where LICQ fails: " << licq_failures << " of " << grid.size() << "\n";
  if (margin.degenerate_fraction > 1e-3) {
    out << "rejected\n";
    return rejected_gait;
  }
  out << "accepted\n";
  return ok;
}

inline void list_scenarios(std::ostream& out) {
  for (const auto& s : scenario_catalog())
    out << std::left << std::setw(18) << s.name << s.description << "\n";
}

/// Maps library errors to exit codes.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const GaitRejected& e) {
    err << "rejected gait: " << e.what() << "\n";
    return rejected_gait;
  } catch (const InadmissibleState& e) {
    err << "inadmissible initial state: " << e.what() << "\n";
    return inadmissible_start;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return bad_config;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << "\n";
    return bad_config;
  } catch (const DimensionMismatch& e) {
    err << "config error: " << e.what() << "\n";
    return bad_config;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return failure;
  }
}

}  // namespace polysweep::cli
