#pragma once

// Quasistatic crawler: N blocks on a line joined by N-1 actuated springs,
// with anisotropic dry friction at every block.
//
// The shape z = π_Z(x) evolves by a sweeping process for w = -k z in the
// moving polyhedron K(t); the barycentre y = π_Y(x) follows from the
// multipliers of that sweeping process. An independent solver minimizes
// E(t, x) + R(t, x - x_prev) step by step over all slip patterns.
//
// Constraint indexing of K(t) (0-based, i < N): constraint i is block i
// slipping forward (friction force at +μ_i^+), constraint N + i is block i
// slipping backward (force at -μ_i^-).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "polysweep/errors.hpp"
#include "polysweep/format.hpp"
#include "polysweep/polyhedron.hpp"
#include "polysweep/signal.hpp"
#include "polysweep/sweeping.hpp"

namespace polysweep {

/// Period, actuation lengths and friction thresholds of a crawler.
class Gait {
 public:
  Gait(int blocks, double period, double stiffness, std::vector<PeriodicSignal> lengths,
       std::vector<PeriodicSignal> mu_plus, std::vector<PeriodicSignal> mu_minus)
      : n_(blocks),
        period_(period),
        k_(stiffness),
        lengths_(std::move(lengths)),
        mu_plus_(std::move(mu_plus)),
        mu_minus_(std::move(mu_minus)) {
    if (n_ < 2) throw InvalidArgument("a crawler needs at least two blocks");
    if (!(period_ > 0.0)) throw InvalidArgument("gait period must be positive");
    if (!(k_ > 0.0)) throw InvalidArgument("spring stiffness must be positive");
    if (static_cast<int>(lengths_.size()) != n_ - 1) throw DimensionMismatch("gait needs N-1 actuation lengths");
    if (static_cast<int>(mu_plus_.size()) != n_ || static_cast<int>(mu_minus_.size()) != n_)
      throw DimensionMismatch("gait needs N forward and N backward friction thresholds");
    auto check = [&](const PeriodicSignal& s) {
      if (!s.is_linear()) throw InvalidArgument("gait signals must be piecewise-linear");
      if (std::abs(s.period() - period_) > 1e-12 * period_)
        throw InvalidArgument("gait signals must share the gait period");
    };
    for (const auto& s : lengths_) check(s);
    for (const auto* mus : {&mu_plus_, &mu_minus_})
      for (const auto& s : *mus) {
        check(s);
        if (!(s.min_value() > 0.0)) throw InvalidArgument("friction thresholds must be positive");
      }
  }

  int blocks() const { return n_; }
  double period() const { return period_; }
  double stiffness() const { return k_; }
  const std::vector<PeriodicSignal>& lengths() const { return lengths_; }
  const std::vector<PeriodicSignal>& mu_plus() const { return mu_plus_; }
  const std::vector<PeriodicSignal>& mu_minus() const { return mu_minus_; }

  Vector lengths_at(double t) const { return sample(lengths_, t); }
  Vector mu_plus_at(double t) const { return sample(mu_plus_, t); }
  Vector mu_minus_at(double t) const { return sample(mu_minus_, t); }

  /// Friction bounds (α1, α2) over all thresholds.
  std::pair<double, double> friction_bounds() const {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto* mus : {&mu_plus_, &mu_minus_})
      for (const auto& s : *mus) lo = std::min(lo, s.min_value()), hi = std::max(hi, s.max_value());
    return {lo, hi};
  }

  bool aligned_to_grid(double t0, double h) const {
    for (const auto* group : {&lengths_, &mu_plus_, &mu_minus_})
      for (const auto& s : *group)
        if (!s.aligned_to_grid(t0, h)) return false;
    return true;
  }

  /// Same gait with forward and backward friction swapped.
  Gait mirrored() const { return {n_, period_, k_, lengths_, mu_minus_, mu_plus_}; }

 private:
  static Vector sample(const std::vector<PeriodicSignal>& s, double t) {
    Vector v(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) v(static_cast<Eigen::Index>(i)) = s[i](t);
    return v;
  }

  int n_;
  double period_;
  double k_;
  std::vector<PeriodicSignal> lengths_;
  std::vector<PeriodicSignal> mu_plus_;
  std::vector<PeriodicSignal> mu_minus_;
};

// ---- position / shape coordinates -------------------------------------------

inline double barycentre(const Vector& x) { return x.mean(); }

inline Vector shape(const Vector& x) {
  return x.tail(x.size() - 1) - x.head(x.size() - 1);
}

/// Inverse of x -> (barycentre(x), shape(x)).
inline Vector compose_state(double y, const Vector& z) {
  const Eigen::Index n = z.size() + 1;
  Vector x(n);
  x(0) = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) x(i) = x(i - 1) + z(i - 1);
  x.array() += y - x.mean();
  return x;
}

/// ν_i of the reduced set: π_Z(e_i) for i < N, -π_Z(e_{i-N}) otherwise.
inline Vector shape_normal(int blocks, int i) {
  Vector e = Vector::Zero(blocks);
  e(i % blocks) = i < blocks ? 1.0 : -1.0;
  return shape(e);
}

// ---- energy and dissipation --------------------------------------------------

inline double energy(const Gait& g, double t, const Vector& x) {
  const Vector stretch = shape(x) - g.lengths_at(t);
  return 0.5 * g.stiffness() * stretch.squaredNorm();
}

inline Vector energy_gradient(const Gait& g, double t, const Vector& x) {
  const Vector tension = g.stiffness() * (shape(x) - g.lengths_at(t));
  Vector grad = Vector::Zero(x.size());
  grad.tail(tension.size()) += tension;
  grad.head(tension.size()) -= tension;
  return grad;
}

inline double dissipation(const Gait& g, double t, const Vector& v) {
  const Vector mp = g.mu_plus_at(t), mm = g.mu_minus_at(t);
  double r = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) r += v(i) >= 0.0 ? mp(i) * v(i) : -mm(i) * v(i);
  return r;
}

// ---- polyhedra ---------------------------------------------------------------

/// Admissible friction forces: -μ_i^- <= ξ_i <= μ_i^+. Constraint i < N is
/// the upper bound on ξ_i, constraint N + i the lower bound.
inline MovingPolyhedron build_force_polyhedron(const Gait& g) {
  const int n = g.blocks();
  Matrix b = Matrix::Zero(2 * n, n);
  std::vector<PeriodicSignal> c;
  for (int i = 0; i < n; ++i) b(i, i) = 1.0, c.push_back(g.mu_plus()[static_cast<std::size_t>(i)]);
  for (int i = 0; i < n; ++i) b(n + i, i) = -1.0, c.push_back(g.mu_minus()[static_cast<std::size_t>(i)]);
  return {std::move(b), std::move(c)};
}

/// K(t) = C_sh(t) - k·L(t) in shape space, dimension N - 1:
///   <ν_i, w> <= μ_i^±(t) - k <ν_i, L(t)>.
inline MovingPolyhedron build_moving_set(const Gait& g) {
  const int n = g.blocks();
  Matrix b(2 * n, n - 1);
  std::vector<PeriodicSignal> c;
  for (int i = 0; i < 2 * n; ++i) {
    const Vector nu = shape_normal(n, i);
    b.row(i) = nu.transpose();
    const auto& mu = i < n ? g.mu_plus()[static_cast<std::size_t>(i)] : g.mu_minus()[static_cast<std::size_t>(i - n)];
    std::vector<SignalTerm> terms{{1.0, &mu}};
    for (int j = 0; j < n - 1; ++j)
      if (nu(j) != 0.0) terms.push_back({-g.stiffness() * nu(j), &g.lengths()[static_cast<std::size_t>(j)]});
    c.push_back(combine(g.period(), 0.0, terms));
  }
  return {std::move(b), std::move(c)};
}

/// Reduced state w = -k·π_Z(x).
inline Vector reduced_state(const Gait& g, const Vector& x) { return -g.stiffness() * shape(x); }

// ---- uniqueness margin -------------------------------------------------------

struct UniquenessReport {
  /// min over grid times and subsets J of |Σ_J μ^+ - Σ_{J^c} μ^-|.
  double min_margin = std::numeric_limits<double>::infinity();
  double worst_time = 0.0;
  /// Forward-slipping blocks J at the worst time (0-based).
  IndexSet worst_subset;
  /// Fraction of grid times whose margin is <= tol.
  double degenerate_fraction = 0.0;
};

inline double uniqueness_margin_at(const Gait& g, double t, IndexSet* worst = nullptr) {
  const int n = g.blocks();
  if (n > 16) throw EnumerationCapExceeded("uniqueness margin enumeration is capped at 16 blocks");
  const Vector mp = g.mu_plus_at(t), mm = g.mu_minus_at(t);
  double best = std::numeric_limits<double>::infinity();
  std::uint64_t best_mask = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += (mask >> i) & 1U ? mp(i) : -mm(i);
    if (std::abs(s) < best) best = std::abs(s), best_mask = mask;
  }
  if (worst) *worst = from_mask(best_mask);
  return best;
}

inline UniquenessReport check_gait_uniqueness(const Gait& g, std::span<const double> grid, double tol = 1e-9) {
  UniquenessReport r;
  int degenerate = 0;
  for (double t : grid) {
    IndexSet subset;
    const double m = uniqueness_margin_at(g, t, &subset);
    if (m <= tol) ++degenerate;
    if (m < r.min_margin) r.min_margin = m, r.worst_time = t, r.worst_subset = std::move(subset);
  }
  if (!grid.empty()) r.degenerate_fraction = static_cast<double>(degenerate) / static_cast<double>(grid.size());
  return r;
}

/// Uniform grid t0 + j·T/count, j < count.
inline std::vector<double> period_grid(double t0, double period, int count) {
  std::vector<double> grid;
  for (int j = 0; j < count; ++j) grid.push_back(t0 + period * j / count);
  return grid;
}

// ---- admissibility -----------------------------------------------------------

/// -D_x E(t, x) ∈ C(t).
inline bool admissible(const Gait& g, double t, const Vector& x, double tol = 1e-9) {
  const Vector force = -energy_gradient(g, t, x);
  const Vector mp = g.mu_plus_at(t), mm = g.mu_minus_at(t);
  for (Eigen::Index i = 0; i < force.size(); ++i)
    if (force(i) > mp(i) + tol || force(i) < -mm(i) - tol) return false;
  return true;
}

/// Uniform w in K(t0) by rejection, mapped back to a configuration whose
/// barycentre is uniform in [-1, 1].
template <class Rng>
Vector random_admissible_state(const Gait& g, double t0, Rng& rng) {
  const Vector w = sample_uniform(build_moving_set(g).freeze(t0), rng);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double y = unit(rng);
  return compose_state(y, -w / g.stiffness());
}

// ---- motion ------------------------------------------------------------------

/// Block positions on the time grid with their derived coordinates.
struct Motion {
  double t0 = 0.0;
  double h = 0.0;
  int steps_per_period = 0;
  Matrix x;  // N x (steps + 1)
  Vector y;
  Matrix z;  // (N-1) x (steps + 1)
  Matrix w;

  int steps() const { return static_cast<int>(x.cols()) - 1; }
  int periods() const { return steps_per_period > 0 ? steps() / steps_per_period : 0; }
  double period() const { return h * steps_per_period; }
  double time(int k) const { return t0 + h * k; }
};

inline Motion motion_from_positions(const Gait& g, double t0, double h, int steps_per_period, Matrix x) {
  Motion m;
  m.t0 = t0;
  m.h = h;
  m.steps_per_period = steps_per_period;
  m.y = x.colwise().mean().transpose();
  m.z = x.bottomRows(x.rows() - 1) - x.topRows(x.rows() - 1);
  m.w = -g.stiffness() * m.z;
  m.x = std::move(x);
  return m;
}

struct ReducedOptions {
  PolyhedronOptions poly;
  /// Largest tolerated fraction of grid times with zero uniqueness margin.
  double max_degenerate_fraction = 1e-3;
};

struct ReducedRun {
  Trajectory sweep;  // w-trajectory in K(t)
  Motion motion;
  UniquenessReport margin;
  std::vector<std::string> warnings;
};

namespace detail {

inline UniquenessReport screen_gait(const Gait& g, double t0, int steps_per_period, double tol,
                                    double max_fraction, std::vector<std::string>* warnings) {
  const auto grid = period_grid(t0, g.period(), steps_per_period);
  auto margin = check_gait_uniqueness(g, grid, tol);
  if (margin.degenerate_fraction > max_fraction)
    throw GaitRejected("uniqueness margin vanishes on " + std::to_string(margin.degenerate_fraction * 100.0) +
                       "% of the time grid (min margin " + format_double(margin.min_margin) + " at t = " +
                       format_double(margin.worst_time) + ")");
  if (margin.min_margin <= tol && warnings)
    warnings->push_back("uniqueness margin vanishes at isolated grid times (first at t = " +
                        format_double(margin.worst_time) + ")");
  return margin;
}

}  // namespace detail

/// Barycentre increment of one step from the K(t) projection multipliers,
/// Δy = (Σ_{i<N} η_i - Σ_{i>=N} η_i) / (kN).
inline double barycentre_increment(const Gait& g, const Vector& eta) {
  const int n = g.blocks();
  if (eta.size() != 2 * n) throw DimensionMismatch("expected 2N multipliers");
  return (eta.head(n).sum() - eta.tail(n).sum()) / (g.stiffness() * n);
}

/// Sweeping-process route: integrate w in K(t) and recover the barycentre
/// from the multipliers.
inline ReducedRun simulate_reduced(const Gait& g, const Vector& x0, double t0, int periods, int steps_per_period,
                                   const ReducedOptions& opt = {}) {
  const int n = g.blocks();
  if (x0.size() != n) throw DimensionMismatch("initial configuration has wrong length");
  if (!admissible(g, t0, x0, opt.poly.tol))
    throw InadmissibleState("inadmissible initial configuration: -D_x E(t0, x0) ∉ C(t0)");
  ReducedRun run;
  run.margin = detail::screen_gait(g, t0, steps_per_period, opt.poly.tol, opt.max_degenerate_fraction, &run.warnings);

  const SweepingProblem problem(build_moving_set(g));
  run.sweep = simulate(problem, reduced_state(g, x0), t0, periods, steps_per_period, {opt.poly});

  const double k = g.stiffness();
  const int steps = run.sweep.steps();
  Matrix x(n, steps + 1);
  double y = barycentre(x0);
  x.col(0) = x0;
  for (int s = 0; s < steps; ++s) {
    y += barycentre_increment(g, run.sweep.multipliers.col(s));
    x.col(s + 1) = compose_state(y, -run.sweep.states.col(s + 1) / k);
  }
  run.motion = motion_from_positions(g, t0, run.sweep.h, steps_per_period, std::move(x));
  return run;
}

struct OracleOptions {
  double tol = 1e-9;
  double max_degenerate_fraction = 1e-3;
};

/// Time-incremental minimization x_{k+1} = argmin E(t_{k+1}, x) + R(t_{k+1}, x - x_k),
/// solved exactly by enumerating the 3^N stick / forward / backward patterns.
inline Motion incremental_oracle(const Gait& g, const Vector& x0, double t0, int periods, int steps_per_period,
                                 const OracleOptions& opt = {}) {
  const int n = g.blocks();
  if (n > 8) throw EnumerationCapExceeded("slip-pattern oracle is capped at 8 blocks");
  if (x0.size() != n) throw DimensionMismatch("initial configuration has wrong length");
  if (periods < 1 || steps_per_period < 1) throw InvalidArgument("periods and steps must be positive");
  if (!admissible(g, t0, x0, opt.tol))
    throw InadmissibleState("inadmissible initial configuration: -D_x E(t0, x0) ∉ C(t0)");
  detail::screen_gait(g, t0, steps_per_period, opt.tol, opt.max_degenerate_fraction, nullptr);

  const double k = g.stiffness();
  const double h = g.period() / steps_per_period;
  const int steps = periods * steps_per_period;
  int patterns = 1;
  for (int i = 0; i < n; ++i) patterns *= 3;

  // Graph Laplacian of the chain: D_x E = k (A x - d(t)).
  Matrix lap = Matrix::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    lap(i, i) += 1.0, lap(i + 1, i + 1) += 1.0;
    lap(i, i + 1) -= 1.0, lap(i + 1, i) -= 1.0;
  }

  Matrix x(n, steps + 1);
  x.col(0) = x0;
  std::vector<int> pattern(static_cast<std::size_t>(n));
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + h * (s + 1);
    const Vector len = g.lengths_at(t), mp = g.mu_plus_at(t), mm = g.mu_minus_at(t);
    Vector d = Vector::Zero(n);
    d.head(n - 1) -= len;
    d.tail(n - 1) += len;
    const Vector prev = x.col(s);
    const double tol = opt.tol * (1.0 + prev.lpNorm<Eigen::Infinity>());

    double best_violation = std::numeric_limits<double>::infinity();
    std::vector<int> best_pattern;
    bool accepted = false;
    for (int code = 0; code < patterns && !accepted; ++code) {
      IndexSet slip;
      for (int i = 0, c = code; i < n; ++i, c /= 3) {
        pattern[static_cast<std::size_t>(i)] = c % 3;  // 0 stick, 1 forward, 2 backward
        if (c % 3) slip.push_back(i);
      }
      Vector cand = prev;
      if (!slip.empty()) {
        const auto ns = static_cast<Eigen::Index>(slip.size());
        Matrix a(ns, ns);
        Vector rhs(ns);
        for (Eigen::Index r = 0; r < ns; ++r) {
          const int i = slip[static_cast<std::size_t>(r)];
          const double force = pattern[static_cast<std::size_t>(i)] == 1 ? mp(i) : -mm(i);
          rhs(r) = d(i) - force / k;
          for (int j = 0; j < n; ++j) {
            const auto it = std::find(slip.begin(), slip.end(), j);
            if (it == slip.end())
              rhs(r) -= lap(i, j) * prev(j);
            else
              a(r, it - slip.begin()) = lap(i, j);
          }
        }
        Eigen::FullPivLU<Matrix> lu(a);
        if (!lu.isInvertible()) continue;
        const Vector xs = lu.solve(rhs);
        for (Eigen::Index r = 0; r < ns; ++r) cand(slip[static_cast<std::size_t>(r)]) = xs(r);
      }
      const Vector force = -k * (lap * cand - d);
      double violation = 0.0;
      for (int i = 0; i < n; ++i) {
        const double v = cand(i) - prev(i);
        switch (pattern[static_cast<std::size_t>(i)]) {
          case 0: violation = std::max({violation, force(i) - mp(i), -mm(i) - force(i)}); break;
          case 1: violation = std::max(violation, -v); break;
          default: violation = std::max(violation, v); break;
        }
      }
      if (violation <= tol) {
        x.col(s + 1) = cand;
        accepted = true;
      } else if (violation < best_violation) {
        best_violation = violation;
        best_pattern = pattern;
      }
    }
    if (!accepted) {
      std::string p;
      for (int c : best_pattern) p += "0+-"[c];
      throw NoConsistentPattern("no consistent slip pattern at t = " + format_double(t) + "; nearest pattern " + p +
                                " violates KKT conditions by " + format_double(best_violation));
    }
  }
  return motion_from_positions(g, t0, h, steps_per_period, std::move(x));
}

// ---- velocity ----------------------------------------------------------------

struct VelocityEstimate {
  double v0 = 0.0;
  /// (y(t0 + qT) - y(t0 + (q-1)T)) / T for q = 1..Q.
  std::vector<double> per_period;
  bool converged = false;
};

inline VelocityEstimate estimate_velocity(const Motion& motion, double tol_v = 1e-6) {
  const int q = motion.periods();
  if (q < 3) throw InsufficientData("velocity estimate needs at least three periods");
  VelocityEstimate v;
  const int m = motion.steps_per_period;
  for (int p = 1; p <= q; ++p)
    v.per_period.push_back((motion.y(p * m) - motion.y((p - 1) * m)) / motion.period());
  v.v0 = v.per_period.back();
  const auto last = std::span(v.per_period).last(3);
  const auto [lo, hi] = std::minmax_element(last.begin(), last.end());
  v.converged = *hi - *lo < tol_v;
  return v;
}

struct RunningPeriodic {
  /// Barycentre extrapolated back to t0 along the average velocity.
  double x0 = 0.0;
  double v0 = 0.0;
  /// x(t) - x0 - (t - t0) v0 over the last simulated period, N x (M + 1).
  Matrix periodic;
  /// max_i |p_i(end) - p_i(start)|.
  double residual = 0.0;
  bool converged = false;
};

inline RunningPeriodic running_periodic_decomposition(const Motion& motion, double tol_v = 1e-6,
                                                      double tol_residual = 1e-3) {
  const auto vel = estimate_velocity(motion, tol_v);
  const int m = motion.steps_per_period;
  const int start = (motion.periods() - 1) * m;
  RunningPeriodic r;
  r.v0 = vel.v0;
  r.x0 = motion.y(start) - (motion.time(start) - motion.t0) * r.v0;
  r.periodic.resize(motion.x.rows(), m + 1);
  for (int j = 0; j <= m; ++j)
    r.periodic.col(j) = motion.x.col(start + j).array() - r.x0 - (motion.time(start + j) - motion.t0) * r.v0;
  r.residual = (r.periodic.col(m) - r.periodic.col(0)).lpNorm<Eigen::Infinity>();
  r.converged = vel.converged && r.residual <= tol_residual;
  return r;
}

// ---- serialization -----------------------------------------------------------

inline void to_json(nlohmann::json& j, const Gait& g) {
  auto list = [](const std::vector<PeriodicSignal>& s) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& x : s) a.push_back(x);
    return a;
  };
  j = {{"N", g.blocks()},           {"T", g.period()},
       {"k", g.stiffness()},        {"L", list(g.lengths())},
       {"mu_plus", list(g.mu_plus())}, {"mu_minus", list(g.mu_minus())}};
}

inline Gait gait_from_json(const nlohmann::json& j) {
  try {
    auto list = [&](const char* key) {
      std::vector<PeriodicSignal> out;
      for (const auto& s : j.at(key)) out.push_back(signal_from_json(s));
      return out;
    };
    return {j.at("N").get<int>(), j.at("T").get<double>(), j.at("k").get<double>(),
            list("L"),            list("mu_plus"),          list("mu_minus")};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed gait: ") + e.what());
  }
}

/// Columns: t, x1..xN, y, z1..z_{N-1}, w1..w_{N-1}.
inline void write_motion_csv(std::ostream& os, const Motion& m) {
  const auto n = m.x.rows();
  os << "t";
  for (Eigen::Index i = 1; i <= n; ++i) os << ",x" << i;
  os << ",y";
  for (Eigen::Index i = 1; i < n; ++i) os << ",z" << i;
  for (Eigen::Index i = 1; i < n; ++i) os << ",w" << i;
  os << '\n';
  for (int k = 0; k <= m.steps(); ++k) {
    os << format_double(m.time(k));
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(m.x(i, k));
    os << ',' << format_double(m.y(k));
    for (Eigen::Index i = 0; i + 1 < n; ++i) os << ',' << format_double(m.z(i, k));
    for (Eigen::Index i = 0; i + 1 < n; ++i) os << ',' << format_double(m.w(i, k));
    os << '\n';
  }
}

}  // namespace polysweep
