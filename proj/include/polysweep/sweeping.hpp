#pragma once

// Catching-up integration of z' ∈ -N_{C(t)}(z) + f(t) and the periodicity
// diagnostics computed from the resulting discrete trajectories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "polysweep/errors.hpp"
#include "polysweep/format.hpp"
#include "polysweep/polyhedron.hpp"
#include "polysweep/signal.hpp"

namespace polysweep {

class SweepingProblem {
 public:
  explicit SweepingProblem(MovingPolyhedron set, std::vector<PeriodicSignal> drift = {})
      : set_(std::move(set)), drift_(std::move(drift)) {
    if (!drift_.empty()) {
      if (static_cast<int>(drift_.size()) != set_.dim())
        throw DimensionMismatch("drift needs one signal per coordinate");
      for (const auto& s : drift_)
        if (std::abs(s.period() - period()) > 1e-12 * period())
          throw InvalidArgument("drift must share the period of the moving set");
    }
  }

  const MovingPolyhedron& set() const { return set_; }
  const std::vector<PeriodicSignal>& drift() const { return drift_; }
  bool has_drift() const { return !drift_.empty(); }
  double period() const { return set_.period(); }
  int dim() const { return set_.dim(); }

  Vector drift_at(double t) const {
    Vector f = Vector::Zero(dim());
    for (std::size_t i = 0; i < drift_.size(); ++i) f(static_cast<Eigen::Index>(i)) = drift_[i](t);
    return f;
  }

  bool aligned_to_grid(double t0, double h) const {
    return set_.aligned_to_grid(t0, h) &&
           std::all_of(drift_.begin(), drift_.end(),
                       [&](const PeriodicSignal& s) { return s.aligned_to_grid(t0, h); });
  }

 private:
  MovingPolyhedron set_;
  std::vector<PeriodicSignal> drift_;
};

/// Discrete solution record. Step k maps z_k to z_{k+1}:
///   z_k + h·f(t_k) - z_{k+1} = Σ_i multipliers(i, k) b_i.
struct Trajectory {
  double t0 = 0.0;
  double h = 0.0;
  int steps_per_period = 0;
  bool drifted = false;
  Matrix normals;       // m x n
  Matrix states;        // n x (steps + 1)
  Matrix multipliers;   // m x steps
  std::vector<std::uint64_t> active;  // active constraints at each state

  int dim() const { return static_cast<int>(states.rows()); }
  int constraints() const { return static_cast<int>(normals.rows()); }
  int steps() const { return static_cast<int>(multipliers.cols()); }
  int periods() const { return steps_per_period > 0 ? steps() / steps_per_period : 0; }
  double period() const { return h * steps_per_period; }
  double time(int k) const { return t0 + h * k; }
  Vector state(int k) const { return states.col(k); }
};

struct SimulationOptions {
  PolyhedronOptions poly;
};

struct StepResult {
  Vector state;
  Vector multipliers;
};

/// One catching-up step: explicit Euler on the drift, then projection.
inline StepResult step(const FrozenPolyhedron& next, const Vector& z, const Vector& drift, double h,
                       const PolyhedronOptions& opt = {}) {
  if (!(h > 0.0)) throw InvalidArgument("step size must be positive");
  auto proj = project(next, z + h * drift, opt);
  return {std::move(proj.point), std::move(proj.multipliers)};
}

inline Trajectory simulate(const SweepingProblem& problem, const Vector& z0, double t0, int periods,
                           int steps_per_period, const SimulationOptions& opt = {}) {
  if (periods < 1 || steps_per_period < 1)
    throw InvalidArgument("periods and steps per period must be positive");
  if (z0.size() != problem.dim()) throw DimensionMismatch("initial state has wrong dimension");
  const double period = problem.period();
  const double h = period / steps_per_period;
  if (!problem.aligned_to_grid(t0, h))
    throw InvalidArgument("steps per period must place every signal breakpoint on the time grid");
  const auto& set = problem.set();
  const double tol = opt.poly.tol;
  const FrozenPolyhedron first = set.freeze(t0);
  if (!contains(first, z0, tol)) throw InadmissibleState("inadmissible initial state: z0 ∉ C(t0)");

  const int steps = periods * steps_per_period;
  Trajectory traj;
  traj.t0 = t0;
  traj.h = h;
  traj.steps_per_period = steps_per_period;
  traj.drifted = problem.has_drift();
  traj.normals = set.normals();
  traj.states.resize(problem.dim(), steps + 1);
  traj.multipliers.resize(set.size(), steps);
  traj.active.resize(static_cast<std::size_t>(steps) + 1);
  traj.states.col(0) = z0;
  traj.active[0] = active_mask(first, z0, tol);

  Vector z = z0;
  for (int k = 0; k < steps; ++k) {
    const Vector f = problem.has_drift() ? problem.drift_at(traj.time(k)) : Vector::Zero(problem.dim());
    const FrozenPolyhedron next = set.freeze(traj.time(k + 1));
    auto [znext, eta] = step(next, z, f, h, opt.poly);
    traj.multipliers.col(k) = eta;
    traj.states.col(k + 1) = znext;
    traj.active[static_cast<std::size_t>(k) + 1] = active_mask(next, znext, tol);
    z = std::move(znext);
  }
  return traj;
}

/// Checks the recorded invariants of a trajectory against its problem and
/// returns a description of the first violation.
inline std::optional<std::string> verify_trajectory(const SweepingProblem& problem, const Trajectory& traj,
                                                    double tol = 1e-9) {
  if (std::abs(traj.h * traj.steps_per_period - problem.period()) > 1e-9 * problem.period())
    return "step size does not divide the period";
  const Matrix& b = problem.set().normals();
  for (int k = 0; k < traj.steps(); ++k) {
    const FrozenPolyhedron f = problem.set().freeze(traj.time(k + 1));
    const Vector z = traj.state(k + 1);
    if (!contains(f, z, tol)) return "state " + std::to_string(k + 1) + " outside C(t)";
    const Vector eta = traj.multipliers.col(k);
    if (eta.minCoeff() < 0.0) return "negative multiplier at step " + std::to_string(k);
    const Vector drift = problem.has_drift() ? problem.drift_at(traj.time(k)) : Vector::Zero(z.size());
    const Vector residual = traj.state(k) + traj.h * drift - z - b.transpose() * eta;
    if (residual.norm() > 1e-10 * (1.0 + traj.state(k).norm()))
      return "multiplier reconstruction fails at step " + std::to_string(k);
    const std::uint64_t act = active_mask(f, z, tol);
    for (int i = 0; i < eta.size(); ++i)
      if (eta(i) > 0.0 && !((act >> i) & 1U))
        return "multiplier on inactive constraint at step " + std::to_string(k);
  }
  return std::nullopt;
}

/// z(t0), z(t0 + T), ..., z(t0 + Q·T).
inline std::vector<Vector> poincare_samples(const Trajectory& traj) {
  std::vector<Vector> out;
  for (int q = 0; q <= traj.periods(); ++q) out.push_back(traj.state(q * traj.steps_per_period));
  return out;
}

namespace detail {

inline void check_window(const Trajectory& traj, int q) {
  if (q < 0 || q + 2 > traj.periods())
    throw InsufficientData("period distance " + std::to_string(q) + " needs " + std::to_string(q + 2) +
                           " simulated periods, have " + std::to_string(traj.periods()));
}

}  // namespace detail

/// max over t in [t0, t0+T) of |z(t + qT) - z(t + (q+1)T)| on the grid.
inline double period_distance_sup(const Trajectory& traj, int q) {
  detail::check_window(traj, q);
  const int m = traj.steps_per_period;
  double d = 0.0;
  for (int k = 0; k < m; ++k)
    d = std::max(d, (traj.states.col(q * m + k) - traj.states.col((q + 1) * m + k)).norm());
  return d;
}

/// Discrete W^{1,2}([t0, t0+T]) distance between the windows q and q+1,
/// derivatives taken as forward differences.
inline double period_distance_w12(const Trajectory& traj, int q) {
  detail::check_window(traj, q);
  const int m = traj.steps_per_period;
  const double h = traj.h;
  auto diff = [&](int k) -> Vector { return traj.states.col(q * m + k) - traj.states.col((q + 1) * m + k); };
  double sum = 0.0;
  Vector prev = diff(0);
  for (int k = 0; k < m; ++k) {
    const Vector next = diff(k + 1);
    sum += h * prev.squaredNorm() + h * ((next - prev) / h).squaredNorm();
    prev = next;
  }
  return std::sqrt(sum);
}

inline std::vector<double> sup_distances(const Trajectory& traj) {
  std::vector<double> d;
  for (int q = 0; q + 2 <= traj.periods(); ++q) d.push_back(period_distance_sup(traj, q));
  return d;
}

inline std::vector<double> w12_distances(const Trajectory& traj) {
  std::vector<double> d;
  for (int q = 0; q + 2 <= traj.periods(); ++q) d.push_back(period_distance_w12(traj, q));
  return d;
}

struct Classification {
  enum class Kind { finite_time, geometric, undetermined };
  Kind kind = Kind::undetermined;
  int q_star = -1;
  double ratio = 0.0;
};

inline std::string to_string(Classification::Kind k) {
  switch (k) {
    case Classification::Kind::finite_time: return "finite-time";
    case Classification::Kind::geometric: return "geometric";
    default: return "undetermined";
  }
}

struct ClassifyOptions {
  double tol_ft = 1e-9;
  /// Minimum number of period distances required.
  int min_periods = 3;
  /// Minimum number of consecutive ratios backing a geometric rate.
  int min_ratios = 3;
  /// Bound on (max - min) / median of the ratios.
  double max_spread = 0.2;
};

/// Median ratio of the longest trailing run of consecutive ratios
/// d[q+1]/d[q] whose relative spread stays below the bound.
inline std::optional<double> geometric_rate(const std::vector<double>& d, const ClassifyOptions& opt) {
  std::vector<double> ratios;
  for (std::size_t q = 0; q + 1 < d.size(); ++q) ratios.push_back(d[q + 1] / d[q]);
  for (std::size_t start = 0; start < ratios.size(); ++start) {
    std::vector<double> tail(ratios.begin() + static_cast<std::ptrdiff_t>(start), ratios.end());
    if (static_cast<int>(tail.size()) < opt.min_ratios) break;
    std::sort(tail.begin(), tail.end());
    const std::size_t mid = tail.size() / 2;
    const double median = tail.size() % 2 ? tail[mid] : 0.5 * (tail[mid - 1] + tail[mid]);
    if (median > 0.0 && (tail.back() - tail.front()) / median < opt.max_spread) return median;
  }
  return std::nullopt;
}

/// Classifies a sequence of sup period-distances.
///
/// The run of distances above tol_ft that ends at the last such distance is
/// tested for a geometric rate. When the sequence ends below tol_ft at q*, it
/// is finite-time unless that run is geometric and d[q*] continues the trend
/// (d[q*] >= 0.1·r·d[q*-1]), in which case the drop below tol_ft is just the
/// geometric tail crossing the threshold.
inline Classification classify_distances(const std::vector<double>& d, const ClassifyOptions& opt = {}) {
  if (static_cast<int>(d.size()) < opt.min_periods)
    throw InsufficientData("classification needs at least " + std::to_string(opt.min_periods) +
                           " period distances");
  int last_above = -1;
  for (int q = 0; q < static_cast<int>(d.size()); ++q)
    if (d[static_cast<std::size_t>(q)] > opt.tol_ft) last_above = q;
  int run_start = last_above;
  while (run_start > 0 && d[static_cast<std::size_t>(run_start) - 1] > opt.tol_ft) --run_start;
  std::vector<double> run;
  if (last_above >= 0) run.assign(d.begin() + run_start, d.begin() + last_above + 1);
  const auto rate = geometric_rate(run, opt);

  Classification c;
  if (last_above + 1 < static_cast<int>(d.size())) {
    const int q_star = last_above + 1;
    if (rate && *rate < 1.0 && last_above >= 0 &&
        d[static_cast<std::size_t>(q_star)] >= 0.1 * *rate * d[static_cast<std::size_t>(last_above)]) {
      c.kind = Classification::Kind::geometric;
      c.ratio = *rate;
    } else {
      c.kind = Classification::Kind::finite_time;
      c.q_star = q_star;
    }
  } else if (rate) {
    c.kind = Classification::Kind::geometric;
    c.ratio = *rate;
  }
  return c;
}

inline Classification classify_convergence(const Trajectory& traj, const ClassifyOptions& opt = {}) {
  if (traj.periods() < opt.min_periods + 2)
    throw InsufficientData("classification needs at least " + std::to_string(opt.min_periods + 2) +
                           " periods");
  return classify_distances(sup_distances(traj), opt);
}

/// λ_i(t_k) = η_{k,i} / h, one column per step.
inline Matrix lambda_series(const Trajectory& traj) { return traj.multipliers / traj.h; }

struct LambdaDistances {
  Vector distances;
  /// False when some visited active set has dependent normals, in which case
  /// the multipliers are not unique and the distances are not meaningful.
  bool licq = true;
};

/// Per-constraint discrete L² distance between λ(· + qT) and λ(· + (q+1)T).
inline LambdaDistances lambda_convergence(const Trajectory& traj, int q) {
  detail::check_window(traj, q);
  LambdaDistances out;
  std::set<std::uint64_t> checked;
  for (auto mask : traj.active) {
    if (!checked.insert(mask).second) continue;
    if (!detail::independent_rows(detail::rows(traj.normals, from_mask(mask)))) out.licq = false;
  }
  const int m = traj.steps_per_period;
  const Matrix lambda = lambda_series(traj);
  out.distances = Vector::Zero(traj.constraints());
  for (int k = 0; k < m; ++k) {
    const Vector d = lambda.col(q * m + k) - lambda.col((q + 1) * m + k);
    out.distances += traj.h * d.cwiseAbs2();
  }
  out.distances = out.distances.cwiseSqrt();
  return out;
}

struct HypomonotoneResult {
  bool holds = true;
  /// Largest observed increase of the distance between consecutive steps.
  double max_increase = 0.0;
  std::vector<double> distances;
};

/// Distance between two solutions of the same drift-free problem, which
/// cannot increase since both are iterated projections onto common sets.
inline HypomonotoneResult hypomonotone_check(const Trajectory& a, const Trajectory& b, double tol = 1e-12) {
  if (a.drifted || b.drifted) throw InvalidArgument("hypomonotonicity check needs drift-free problems");
  if (a.steps() != b.steps() || a.dim() != b.dim() || std::abs(a.t0 - b.t0) > 1e-12 ||
      std::abs(a.h - b.h) > 1e-15 * std::max(1.0, a.h))
    throw InvalidArgument("trajectories are on different grids");
  HypomonotoneResult r;
  for (int k = 0; k <= a.steps(); ++k) r.distances.push_back((a.state(k) - b.state(k)).norm());
  for (std::size_t k = 1; k < r.distances.size(); ++k)
    r.max_increase = std::max(r.max_increase, r.distances[k] - r.distances[k - 1]);
  r.holds = r.max_increase <= tol;
  return r;
}

struct LimitCycle {
  Matrix window;  // n x (steps_per_period + 1), the last simulated period
  double residual = 0.0;
};

inline LimitCycle estimate_limit_cycle(const Trajectory& traj) {
  if (traj.periods() < 2) throw InsufficientData("limit cycle estimate needs two periods");
  const int m = traj.steps_per_period;
  return {traj.states.middleCols((traj.periods() - 1) * m, m + 1),
          period_distance_sup(traj, traj.periods() - 2)};
}

struct ConvergenceReport {
  std::vector<double> d_sup;
  std::vector<double> d_w12;
  Classification classification;
  LimitCycle cycle;
};

inline ConvergenceReport convergence_report(const Trajectory& traj, const ClassifyOptions& opt = {}) {
  ConvergenceReport r;
  r.d_sup = sup_distances(traj);
  r.d_w12 = w12_distances(traj);
  if (static_cast<int>(r.d_sup.size()) >= opt.min_periods) r.classification = classify_distances(r.d_sup, opt);
  r.cycle = estimate_limit_cycle(traj);
  return r;
}

inline void to_json(nlohmann::json& j, const Classification& c) {
  j = {{"kind", to_string(c.kind)}};
  if (c.kind == Classification::Kind::finite_time) j["q_star"] = c.q_star;
  if (c.kind == Classification::Kind::geometric) j["ratio"] = c.ratio;
}

inline void to_json(nlohmann::json& j, const ConvergenceReport& r) {
  j = {{"d_sup", r.d_sup}, {"d_w12", r.d_w12}, {"classification", r.classification}, {"residual", r.cycle.residual}};
}

inline void to_json(nlohmann::json& j, const SweepingProblem& p) {
  j = p.set();
  if (p.has_drift()) {
    nlohmann::json drift = nlohmann::json::array();
    for (const auto& s : p.drift()) drift.push_back(s);
    j["drift"] = drift;
  }
}

inline SweepingProblem problem_from_json(const nlohmann::json& j) {
  std::vector<PeriodicSignal> drift;
  if (j.contains("drift"))
    for (const auto& s : j.at("drift")) drift.push_back(signal_from_json(s));
  return SweepingProblem(polyhedron_from_json(j), std::move(drift));
}

/// Columns: t, z1..zn, eta_1..eta_m, active_bitmask. Row k holds the state
/// z_k, the multipliers of the step that produced it (zero in row 0) and the
/// active constraints at z_k.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t";
  for (int i = 1; i <= traj.dim(); ++i) os << ",z" << i;
  for (int i = 1; i <= traj.constraints(); ++i) os << ",eta_" << i;
  os << ",active_bitmask\n";
  for (int k = 0; k <= traj.steps(); ++k) {
    os << format_double(traj.time(k));
    for (int i = 0; i < traj.dim(); ++i) os << ',' << format_double(traj.states(i, k));
    for (int i = 0; i < traj.constraints(); ++i)
      os << ',' << format_double(k == 0 ? 0.0 : traj.multipliers(i, k - 1));
    os << ',' << traj.active[static_cast<std::size_t>(k)] << '\n';
  }
}

inline Trajectory read_trajectory_csv(std::istream& is, const SweepingProblem& problem) {
  const int n = problem.dim();
  const int m = problem.set().size();
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("empty trajectory CSV");
  const auto header_cols = std::count(line.begin(), line.end(), ',') + 1;
  if (header_cols != 1 + n + m + 1) throw DimensionMismatch("trajectory CSV columns do not match the problem");
  std::vector<double> times;
  std::vector<std::vector<double>> z, eta;
  std::vector<std::uint64_t> active;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<long>(cells.size()) != header_cols) throw InvalidArgument("ragged trajectory CSV row");
    times.push_back(std::stod(cells[0]));
    z.emplace_back();
    for (int i = 0; i < n; ++i) z.back().push_back(std::stod(cells[static_cast<std::size_t>(1 + i)]));
    eta.emplace_back();
    for (int i = 0; i < m; ++i) eta.back().push_back(std::stod(cells[static_cast<std::size_t>(1 + n + i)]));
    active.push_back(std::stoull(cells.back()));
  }
  if (times.size() < 2) throw InvalidArgument("trajectory CSV needs at least two rows");
  Trajectory traj;
  traj.t0 = times.front();
  traj.h = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  traj.steps_per_period = static_cast<int>(std::lround(problem.period() / traj.h));
  traj.drifted = problem.has_drift();
  traj.normals = problem.set().normals();
  const int steps = static_cast<int>(times.size()) - 1;
  traj.states.resize(n, steps + 1);
  traj.multipliers.resize(m, steps);
  for (int k = 0; k <= steps; ++k)
    for (int i = 0; i < n; ++i) traj.states(i, k) = z[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
  for (int k = 1; k <= steps; ++k)
    for (int i = 0; i < m; ++i)
      traj.multipliers(i, k - 1) = eta[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
  traj.active = std::move(active);
  return traj;
}

}  // namespace polysweep
