#pragma once

// Concrete systems: n-cells, the wedge, the equilateral triangle with
// rotating drift, and the reference crawler gaits.

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "polysweep/crawler.hpp"
#include "polysweep/errors.hpp"
#include "polysweep/polyhedron.hpp"
#include "polysweep/signal.hpp"
#include "polysweep/sweeping.hpp"

namespace polysweep {

/// Expected behaviour of a scenario. Unset fields are unknown.
struct ScenarioReference {
  std::optional<Classification::Kind> classification;
  std::optional<int> max_q_star;
  std::optional<double> ratio;
  double ratio_tol = 0.0;
  std::optional<double> fixed_point;
  /// Scalar observable of the state at t0 + qT and its closed-form period map.
  std::function<double(const Vector&)> observable;
  std::function<double(double)> period_map;
  std::optional<double> velocity;
  bool rejected = false;
};

struct Scenario {
  Scenario(std::string name_, std::string description_, std::variant<SweepingProblem, Gait> system_)
      : name(std::move(name_)), description(std::move(description_)), system(std::move(system_)) {}

  std::string name;
  std::string description;
  std::variant<SweepingProblem, Gait> system;
  double t0 = 0.0;
  int periods = 10;
  int steps_per_period = 1000;
  /// State z0 for sweeping problems, configuration x0 for gaits.
  Vector start;
  ScenarioReference reference;

  bool is_gait() const { return std::holds_alternative<Gait>(system); }
  const Gait& gait() const { return std::get<Gait>(system); }
};

/// The sweeping problem behind a scenario; for a gait this is w in K(t).
inline SweepingProblem sweeping_problem(const Scenario& s) {
  if (s.is_gait()) return SweepingProblem(build_moving_set(s.gait()));
  return std::get<SweepingProblem>(s.system);
}

// ---- n-cell ------------------------------------------------------------------

/// Product of intervals a_i(t) <= z_i <= b_i(t). Constraint 2i is the upper
/// bound of coordinate i, 2i + 1 the lower bound.
inline Scenario ncell_scenario(const std::vector<PeriodicSignal>& a, const std::vector<PeriodicSignal>& b) {
  if (a.empty() || a.size() != b.size()) throw DimensionMismatch("n-cell needs matching lower and upper bounds");
  const auto n = static_cast<Eigen::Index>(a.size());
  const double period = a.front().period();
  Matrix normals = Matrix::Zero(2 * n, n);
  std::vector<PeriodicSignal> offsets;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& lo = a[static_cast<std::size_t>(i)];
    const auto& hi = b[static_cast<std::size_t>(i)];
    const std::vector<SignalTerm> width{{1.0, &hi}, {-1.0, &lo}};
    const auto gap = combine(period, 0.0, width);
    if (gap.min_value() < 0.0)
      throw InvalidArgument("n-cell interval " + std::to_string(i) + " is inverted (a > b somewhere)");
    normals(2 * i, i) = 1.0;
    normals(2 * i + 1, i) = -1.0;
    offsets.push_back(hi);
    const std::vector<SignalTerm> neg{{-1.0, &lo}};
    offsets.push_back(combine(period, 0.0, neg));
  }
  Scenario s{"ncell",
             std::to_string(n) + "-cell",
             SweepingProblem(MovingPolyhedron(std::move(normals), std::move(offsets)))};
  s.periods = 6;
  s.steps_per_period = 400;
  s.start = Vector(n);
  for (Eigen::Index i = 0; i < n; ++i) s.start(i) = a[static_cast<std::size_t>(i)](0.0);
  s.reference.classification = Classification::Kind::finite_time;
  s.reference.max_q_star = 1;
  return s;
}

// ---- wedge -------------------------------------------------------------------

inline double wedge_gamma(double alpha, double period) { return period / (2.0 * alpha); }

/// Exact period map of the first coordinate.
inline double wedge_poincare(double alpha, double period, double z1) {
  const double gamma = wedge_gamma(alpha, period);
  if (z1 >= gamma) return z1;
  return (alpha * alpha * gamma + z1) / (alpha * alpha + 1.0);
}

/// C(t) = C_0 - (0, l(t)), C_0 = {0 <= z2 <= α z1, z1 <= β}, l a triangle
/// wave 0 -> T/2 -> 0.
inline Scenario wedge_scenario(double alpha = 1.0, double beta = 2.0, double period = 2.0) {
  if (!(alpha > 0.0) || !(period > 0.0)) throw InvalidArgument("wedge needs α > 0 and T > 0");
  const double gamma = wedge_gamma(alpha, period);
  if (!(2.0 * beta > period * alpha) || !(beta > gamma))
    throw InvalidArgument("wedge parameters need 2β > Tα and β > T/(2α)");
  Matrix normals(3, 2);
  normals << 0.0, -1.0, -alpha, 1.0, 1.0, 0.0;
  const auto lift = PeriodicSignal::triangle(period, 0.0, 0.5 * period);
  std::vector<PeriodicSignal> offsets{lift, PeriodicSignal(period, SignalKind::piecewise_linear,
                                                           {{0.0, 0.0}, {0.5 * period, -0.5 * period}}),
                                      PeriodicSignal::constant(period, beta)};
  Scenario s{"wedge",
             "wedge with vertical zig-zag",
             SweepingProblem(MovingPolyhedron(std::move(normals), std::move(offsets)))};
  s.periods = 40;
  s.steps_per_period = 2000;
  s.start = Vector{{0.5, 0.0}};
  s.reference.classification = Classification::Kind::geometric;
  s.reference.ratio = 1.0 / (alpha * alpha + 1.0);
  s.reference.ratio_tol = 0.05;
  s.reference.fixed_point = gamma;
  s.reference.observable = [](const Vector& z) { return z(0); };
  s.reference.period_map = [alpha, period](double z1) { return wedge_poincare(alpha, period, z1); };
  return s;
}

// ---- triangle ----------------------------------------------------------------

inline double edge_map(double z) { return 0.5 * (1.0 - z); }

/// Vertices P, Q, R counterclockwise, PQ on the horizontal axis.
inline Matrix triangle_vertices(double side) {
  Matrix v(2, 3);
  v << 0.0, side, 0.5 * side, 0.0, 0.0, 0.5 * std::numbers::sqrt3 * side;
  return v;
}

/// Outward unit normals of PQ, QR, RP.
inline Matrix triangle_normals() {
  const double c = 0.5 * std::numbers::sqrt3;
  Matrix b(3, 2);
  b << 0.0, -1.0, c, 0.5, -c, 0.5;
  return b;
}

/// Position along edge e (0 = PQ from P, 1 = QR from Q, 2 = RP from R),
/// normalized to [0, 1].
inline double edge_coordinate(double side, int edge, const Vector& z) {
  const Matrix v = triangle_vertices(side);
  const Vector a = v.col(edge), b = v.col((edge + 1) % 3);
  return (z - a).dot(b - a) / (side * side);
}

namespace detail {

inline std::vector<PeriodicSignal> triangle_drift(double alpha, double period) {
  const Matrix b = triangle_normals();
  std::vector<PeriodicSignal> f;
  for (int c = 0; c < 2; ++c)
    f.emplace_back(period, SignalKind::piecewise_constant,
                   std::vector<Breakpoint>{{0.0, alpha * b(0, c)},
                                           {period / 3.0, alpha * b(1, c)},
                                           {2.0 * period / 3.0, alpha * b(2, c)}});
  return f;
}

inline Vector triangle_offsets(double side) {
  return Vector{{0.0, 0.5 * std::numbers::sqrt3 * side, 0.0}};
}

inline void fill_triangle_reference(Scenario& s, double side) {
  s.periods = 20;
  s.steps_per_period = 3000;
  s.start = triangle_vertices(side).rowwise().mean();
  s.reference.classification = Classification::Kind::geometric;
  s.reference.ratio = 0.125;
  s.reference.ratio_tol = 0.02;
  s.reference.fixed_point = 1.0 / 3.0;
  s.reference.observable = [side](const Vector& z) { return edge_coordinate(side, 2, z); };
  s.reference.period_map = [](double u) { return edge_map(edge_map(edge_map(u))); };
}

}  // namespace detail

/// Primitive F(t) = ∫_0^t f of the triangle drift; zero mean makes it periodic.
inline std::vector<PeriodicSignal> triangle_drift_primitive(double alpha, double period) {
  const Matrix b = triangle_normals();
  const double leg = alpha * period / 3.0;
  std::vector<PeriodicSignal> out;
  for (int c = 0; c < 2; ++c)
    out.emplace_back(period, SignalKind::piecewise_linear,
                     std::vector<Breakpoint>{{0.0, 0.0},
                                             {period / 3.0, leg * b(0, c)},
                                             {2.0 * period / 3.0, leg * (b(0, c) + b(1, c))}});
  return out;
}

/// Drives every start in the vertex set plus the centroid through one period
/// and checks that each third ends on its edge.
inline void check_triangle_reach(const Scenario& s, double side, int steps_per_period = 300) {
  const auto problem = sweeping_problem(s);
  Matrix starts(2, 4);
  starts << triangle_vertices(side), triangle_vertices(side).rowwise().mean();
  const Matrix b = triangle_normals();
  const Vector c = detail::triangle_offsets(side);
  const int third = steps_per_period / 3;
  for (Eigen::Index j = 0; j < starts.cols(); ++j) {
    const auto traj = simulate(problem, starts.col(j), s.t0, 1, steps_per_period);
    for (int e = 0; e < 3; ++e) {
      const Vector z = traj.state((e + 1) * third);
      if (std::abs(b.row(e).dot(z) - c(e)) > 1e-9 * side)
        throw InvalidArgument("αT too small: start (" + format_double(starts(0, j)) + ", " +
                              format_double(starts(1, j)) + ") does not reach edge " + std::to_string(e) +
                              " within a third of the period");
    }
  }
}

/// Fixed equilateral triangle PQR with drift α·ν_i on the i-th third.
inline Scenario triangle_scenario(double alpha = 2.0, double period = 3.0, double side = 1.0) {
  if (!(alpha > 0.0) || !(period > 0.0) || !(side > 0.0))
    throw InvalidArgument("triangle needs positive α, T and side");
  std::vector<PeriodicSignal> offsets;
  const Vector c = detail::triangle_offsets(side);
  for (int i = 0; i < 3; ++i) offsets.push_back(PeriodicSignal::constant(period, c(i)));
  Scenario s{"triangle",
             "equilateral triangle with rotating drift",
             SweepingProblem(MovingPolyhedron(triangle_normals(), std::move(offsets)),
                                       detail::triangle_drift(alpha, period))};
  detail::fill_triangle_reference(s, side);
  check_triangle_reach(s, side);
  return s;
}

/// Same dynamics as a drift-free sweeping process in PQR - F(t); states
/// differ from the drift form by F(t).
inline Scenario triangle_moving_scenario(double alpha = 2.0, double period = 3.0, double side = 1.0) {
  if (!(alpha > 0.0) || !(period > 0.0) || !(side > 0.0))
    throw InvalidArgument("triangle needs positive α, T and side");
  const Matrix b = triangle_normals();
  const Vector c = detail::triangle_offsets(side);
  const auto shift = triangle_drift_primitive(alpha, period);
  std::vector<PeriodicSignal> offsets;
  for (int i = 0; i < 3; ++i) {
    const std::vector<SignalTerm> terms{{-b(i, 0), &shift[0]}, {-b(i, 1), &shift[1]}};
    offsets.push_back(combine(period, c(i), terms));
  }
  Scenario s{"triangle-moving",
             "equilateral triangle translated by the drift primitive",
             SweepingProblem(MovingPolyhedron(b, std::move(offsets)))};
  detail::fill_triangle_reference(s, side);
  // F(0) = 0, so the edge observable at t0 + qT is unchanged.
  return s;
}

// ---- acute corners -----------------------------------------------------------

struct AcuteCorner {
  Vector vertex;
  int first;
  int second;
  /// Interior angle in radians.
  double angle;
};

/// Vertices of a planar polyhedron whose interior angle is below π/2.
inline std::vector<AcuteCorner> acute_corner_note(const FrozenPolyhedron& f, const PolyhedronOptions& opt = {}) {
  if (f.dim() != 2) throw DimensionMismatch("acute corner check needs a planar polyhedron");
  std::vector<AcuteCorner> out;
  for (const auto& v : vertices(f, opt)) {
    // With redundant active constraints the narrowest pair bounds the corner.
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (std::size_t a = 0; a < v.active.size(); ++a)
      for (std::size_t c = a + 1; c < v.active.size(); ++c) {
        const Vector ni = f.normals().row(v.active[a]).normalized();
        const Vector nj = f.normals().row(v.active[c]).normalized();
        if (ni.dot(nj) < best) best = ni.dot(nj), bi = v.active[a], bj = v.active[c];
      }
    if (bi < 0) continue;
    const double angle = std::numbers::pi - std::acos(std::clamp(best, -1.0, 1.0));
    if (angle < 0.5 * std::numbers::pi - 1e-12) out.push_back({v.point, bi, bj, angle});
  }
  return out;
}

// ---- reference gaits ---------------------------------------------------------

namespace detail {

inline std::vector<PeriodicSignal> constants(double period, std::initializer_list<double> v) {
  std::vector<PeriodicSignal> out;
  for (double x : v) out.push_back(PeriodicSignal::constant(period, x));
  return out;
}

}  // namespace detail

/// Two blocks, k = 1, T = 1, μ^+ = 1, μ^- = 2, L a triangle wave 0 -> 4 -> 0.
inline Gait gait_star() {
  return {2, 1.0, 1.0, {PeriodicSignal::triangle(1.0, 0.0, 4.0)}, detail::constants(1.0, {1.0, 1.0}),
          detail::constants(1.0, {2.0, 2.0})};
}

inline Gait gait_star_mirror() { return gait_star().mirrored(); }

/// Three blocks with out-of-phase actuation; margin 0.5.
inline Gait gait_three_blocks() {
  const double t = 1.0;
  return {3,
          t,
          1.0,
          {PeriodicSignal::triangle(t, 0.0, 3.0),
           PeriodicSignal(t, SignalKind::piecewise_linear, {{0.0, 0.0}, {0.25, 0.0}, {0.75, 3.0}})},
          detail::constants(t, {1.0, 1.0, 1.0}),
          detail::constants(t, {1.5, 1.5, 1.5})};
}

/// μ^+ = μ^-: one block forward against one backward balances exactly.
inline Gait gait_degenerate() {
  return {2, 1.0, 1.0, {PeriodicSignal::triangle(1.0, 0.0, 4.0)}, detail::constants(1.0, {1.0, 1.0}),
          detail::constants(1.0, {1.0, 1.0})};
}

inline std::vector<Gait> reference_gaits() {
  return {gait_star(), gait_star_mirror(), gait_three_blocks(), gait_degenerate()};
}

/// Configuration with relaxed springs at t: zero elastic force.
inline Vector rest_configuration(const Gait& g, double t) { return compose_state(0.0, g.lengths_at(t)); }

inline Scenario gait_scenario(std::string name, std::string description, Gait g) {
  Scenario s{std::move(name), std::move(description), g};
  s.periods = 10;
  s.steps_per_period = 2000;
  s.start = rest_configuration(g, 0.0);
  return s;
}

// ---- catalog -----------------------------------------------------------------

inline std::vector<Scenario> scenario_catalog() {
  std::vector<Scenario> out;

  auto still = ncell_scenario({PeriodicSignal::constant(1.0, 0.0)}, {PeriodicSignal::constant(1.0, 1.0)});
  still.name = "cell-static";
  still.description = "fixed unit interval";
  still.start = Vector{{0.3}};
  out.push_back(std::move(still));

  auto play = ncell_scenario({PeriodicSignal::triangle(1.0, 0.0, 2.0)}, {PeriodicSignal::triangle(1.0, 1.0, 3.0)});
  play.name = "cell-1";
  play.description = "unit-width play driven by a triangle wave";
  out.push_back(std::move(play));

  const double t = 2.0;
  auto box = ncell_scenario(
      {PeriodicSignal::triangle(t, 0.0, 2.0),
       PeriodicSignal(t, SignalKind::piecewise_linear, {{0.0, 0.0}, {0.5, 1.0}, {1.5, -1.0}}),
       PeriodicSignal::constant(t, -1.0)},
      {PeriodicSignal::triangle(t, 1.0, 3.0),
       PeriodicSignal(t, SignalKind::piecewise_linear, {{0.0, 0.5}, {0.5, 1.5}, {1.5, -0.5}}),
       PeriodicSignal::triangle(t, 0.0, 2.0)});
  box.name = "cell-3";
  box.description = "three uncoupled intervals with mixed triangle waves";
  out.push_back(std::move(box));

  out.push_back(wedge_scenario());
  out.push_back(triangle_scenario());
  out.push_back(triangle_moving_scenario());

  auto star = gait_scenario("gait-star", "two-block crawler, triangle actuation", gait_star());
  star.reference.velocity = 2.0;
  out.push_back(std::move(star));
  auto mirror = gait_scenario("gait-star-mirror", "two-block crawler with swapped friction", gait_star_mirror());
  mirror.reference.velocity = -2.0;
  out.push_back(std::move(mirror));
  auto three = gait_scenario("gait-three", "three-block crawler, out-of-phase actuation", gait_three_blocks());
  three.reference.velocity = 0.5;
  out.push_back(std::move(three));
  auto degenerate = gait_scenario("gait-degenerate", "two-block crawler with symmetric friction", gait_degenerate());
  degenerate.reference.rejected = true;
  out.push_back(std::move(degenerate));
  return out;
}

inline Scenario find_scenario(const std::string& name) {
  for (auto& s : scenario_catalog())
    if (s.name == name) return s;
  throw InvalidArgument("unknown scenario '" + name + "'");
}

/// JSON form of the underlying problem or gait.
inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j = {{"name", s.name}, {"t0", s.t0}, {"periods", s.periods}, {"steps", s.steps_per_period}};
  if (s.is_gait())
    j["gait"] = s.gait();
  else
    j["problem"] = std::get<SweepingProblem>(s.system);
  j["start"] = std::vector<double>(s.start.data(), s.start.data() + s.start.size());
  return j;
}

}  // namespace polysweep
