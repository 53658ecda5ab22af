#pragma once

// Convex polyhedra C = {z : <b_i, z> <= c_i} with fixed normals, either frozen
// at one instant or moving through periodic offsets c_i(t).
//
// Everything here is exact combinatorics over small constraint sets: the
// projection, vertex list, face lattice and LICQ check all enumerate subsets
// of constraints and solve small dense systems. Sizes stay in the
// n <= 8, m <= 16 range; the enumeration is capped at m = 24 by default.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "polysweep/errors.hpp"
#include "polysweep/signal.hpp"

namespace polysweep {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Sorted constraint indices.
using IndexSet = std::vector<int>;

struct PolyhedronOptions {
  double tol = 1e-9;
  int max_constraints = 24;
  /// Upper bound on the number of candidate subsets visited by one enumeration.
  std::uint64_t max_subsets = 20'000'000;
};

inline std::uint64_t to_mask(const IndexSet& s) {
  std::uint64_t mask = 0;
  for (int i : s) mask |= std::uint64_t{1} << i;
  return mask;
}

inline IndexSet from_mask(std::uint64_t mask) {
  IndexSet s;
  for (int i = 0; mask != 0; ++i, mask >>= 1)
    if (mask & 1U) s.push_back(i);
  return s;
}

namespace detail {

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<std::uint64_t>(std::llround(r));
}

/// Visits every size-k subset of {0..n-1} in lexicographic order until the
/// callback returns true. Returns whether it stopped early.
template <class Fn>
bool for_each_subset(int n, int k, Fn&& fn) {
  IndexSet idx(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) idx[i] = i;
  if (k > n) return false;
  while (true) {
    if (fn(static_cast<const IndexSet&>(idx))) return true;
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) return false;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

inline Matrix rows(const Matrix& a, const IndexSet& s) {
  Matrix out(static_cast<Eigen::Index>(s.size()), a.cols());
  for (std::size_t r = 0; r < s.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = a.row(s[r]);
  return out;
}

inline Vector entries(const Vector& v, const IndexSet& s) {
  Vector out(static_cast<Eigen::Index>(s.size()));
  for (std::size_t r = 0; r < s.size(); ++r) out(static_cast<Eigen::Index>(r)) = v(s[r]);
  return out;
}

/// Linear independence of the rows of `b`, relative to their scale.
inline bool independent_rows(const Matrix& b) {
  if (b.rows() == 0) return true;
  if (b.rows() > b.cols()) return false;
  Eigen::ColPivHouseholderQR<Matrix> qr(b.transpose());
  qr.setThreshold(1e-10);
  return qr.rank() == b.rows();
}

/// Lawson–Hanson nonnegative least squares: argmin_{x >= 0} |A x - b|.
inline Vector nnls(const Matrix& a, const Vector& b) {
  const Eigen::Index n = a.cols();
  Vector x = Vector::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol =
      10.0 * std::numeric_limits<double>::epsilon() * a.norm() * static_cast<double>(std::max(a.rows(), n));
  Vector w = a.transpose() * (b - a * x);
  for (int outer = 0; outer < 3 * static_cast<int>(n) + 10; ++outer) {
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[j] && w(j) > best_w) best_w = w(j), best = j;
    if (best < 0) break;
    passive[best] = true;
    for (int inner = 0; inner < 3 * static_cast<int>(n) + 10; ++inner) {
      IndexSet p;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j]) p.push_back(static_cast<int>(j));
      Matrix ap(a.rows(), static_cast<Eigen::Index>(p.size()));
      for (std::size_t c = 0; c < p.size(); ++c) ap.col(static_cast<Eigen::Index>(c)) = a.col(p[c]);
      const Vector sp = ap.colPivHouseholderQr().solve(b);
      Vector s = Vector::Zero(n);
      for (std::size_t c = 0; c < p.size(); ++c) s(p[c]) = sp(static_cast<Eigen::Index>(c));
      bool positive = true;
      for (int j : p) positive = positive && s(j) > 0.0;
      if (positive) {
        x = s;
        break;
      }
      double alpha = 1.0;
      for (int j : p)
        if (s(j) <= 0.0) alpha = std::min(alpha, x(j) / (x(j) - s(j)));
      x += alpha * (s - x);
      for (int j : p)
        if (x(j) <= tol) passive[j] = false, x(j) = 0.0;
    }
    w = a.transpose() * (b - a * x);
  }
  return x;
}

}  // namespace detail

/// A polyhedron at one instant.
class FrozenPolyhedron {
 public:
  FrozenPolyhedron(Matrix normals, Vector offsets)
      : normals_(std::move(normals)), offsets_(std::move(offsets)) {
    if (normals_.rows() < 1) throw InvalidArgument("polyhedron needs at least one constraint");
    if (normals_.cols() < 1) throw InvalidArgument("polyhedron dimension must be positive");
    if (offsets_.size() != normals_.rows())
      throw DimensionMismatch("one offset per normal is required");
    for (Eigen::Index i = 0; i < normals_.rows(); ++i)
      if (normals_.row(i).norm() == 0.0) throw InvalidArgument("zero normal vector");
  }

  int dim() const { return static_cast<int>(normals_.cols()); }
  int size() const { return static_cast<int>(normals_.rows()); }
  const Matrix& normals() const { return normals_; }
  const Vector& offsets() const { return offsets_; }

  /// c_i - <b_i, z>; nonnegative entries mean satisfied constraints.
  Vector slack(const Vector& z) const {
    check_dim(z);
    return offsets_ - normals_ * z;
  }

  void check_dim(const Vector& z) const {
    if (z.size() != normals_.cols())
      throw DimensionMismatch("vector of length " + std::to_string(z.size()) +
                              " for polyhedron of dimension " + std::to_string(dim()));
  }

 private:
  Matrix normals_;
  Vector offsets_;
};

inline bool contains(const FrozenPolyhedron& f, const Vector& z, double tol = 1e-9) {
  return f.slack(z).minCoeff() >= -tol;
}

inline IndexSet active_set(const FrozenPolyhedron& f, const Vector& z, double tol = 1e-9) {
  const Vector s = f.slack(z);
  if (s.minCoeff() < -tol) throw Infeasible("point is not in the polyhedron");
  IndexSet out;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) <= tol) out.push_back(static_cast<int>(i));
  return out;
}

/// Same as active_set but never throws; violated constraints count as active.
inline std::uint64_t active_mask(const FrozenPolyhedron& f, const Vector& z, double tol = 1e-9) {
  const Vector s = f.slack(z);
  std::uint64_t mask = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) <= tol) mask |= std::uint64_t{1} << i;
  return mask;
}

struct Projection {
  Vector point;
  /// p - point = Σ multipliers_i b_i, multipliers >= 0.
  Vector multipliers;
};

namespace detail {

inline void check_enumeration(const FrozenPolyhedron& f, int max_size, const PolyhedronOptions& opt) {
  if (f.size() > opt.max_constraints)
    throw EnumerationCapExceeded("polyhedron has " + std::to_string(f.size()) +
                                 " constraints, enumeration cap is " +
                                 std::to_string(opt.max_constraints));
  std::uint64_t total = 0;
  for (int s = 0; s <= max_size; ++s) total += binomial(f.size(), s);
  if (total > opt.max_subsets)
    throw EnumerationCapExceeded("subset enumeration too large (" + std::to_string(total) + ")");
}

inline std::optional<Projection> project_pass(const FrozenPolyhedron& f, const Vector& p,
                                              double primal_tol, double dual_tol) {
  const Matrix& b = f.normals();
  const Vector& c = f.offsets();
  const int n = f.dim();
  const int m = f.size();
  std::optional<Projection> found;
  for (int s = 0; s <= std::min(n, m) && !found; ++s) {
    detail::for_each_subset(m, s, [&](const IndexSet& subset) {
      Vector lambda = Vector::Zero(m);
      if (s > 0) {
        const Matrix bs = rows(b, subset);
        if (!independent_rows(bs)) return false;
        const Vector rhs = bs * p - entries(c, subset);
        const Vector ls = (bs * bs.transpose()).llt().solve(rhs);
        for (int r = 0; r < s; ++r) {
          if (!(ls(r) >= -dual_tol)) return false;
          lambda(subset[r]) = std::max(ls(r), 0.0);
        }
      }
      Vector z = p - b.transpose() * lambda;
      if ((c - b * z).minCoeff() < -primal_tol) return false;
      found = Projection{std::move(z), std::move(lambda)};
      return true;
    });
  }
  return found;
}

}  // namespace detail

/// Euclidean projection onto f with its normal-cone multipliers, by
/// exhaustive active-set enumeration in order of increasing subset size.
/// A first pass uses tolerances near machine precision; a second pass
/// falls back to opt.tol.
inline Projection project(const FrozenPolyhedron& f, const Vector& p, const PolyhedronOptions& opt = {}) {
  f.check_dim(p);
  detail::check_enumeration(f, std::min(f.dim(), f.size()), opt);
  const double scale = 1.0 + p.lpNorm<Eigen::Infinity>() + f.offsets().lpNorm<Eigen::Infinity>();
  if (auto r = detail::project_pass(f, p, 1e-12 * scale, 1e-12 * scale)) return *std::move(r);
  if (auto r = detail::project_pass(f, p, opt.tol, opt.tol)) return *std::move(r);
  throw Infeasible("projection failed: polyhedron is empty");
}

/// Unique λ >= 0 supported on the active set at z with v = Σ λ_i b_i.
/// Requires LICQ at z.
inline Vector decompose_normal(const FrozenPolyhedron& f, const Vector& z, const Vector& v,
                               double tol = 1e-9) {
  f.check_dim(v);
  const IndexSet act = active_set(f, z, tol);
  Vector lambda = Vector::Zero(f.size());
  if (v.norm() == 0.0) return lambda;
  const double scale = tol * (1.0 + v.norm());
  if (act.empty()) throw NotInNormalCone("nonzero vector at an interior point");
  const Matrix ba = detail::rows(f.normals(), act);
  if (!detail::independent_rows(ba))
    throw LicqFailure("active normals are linearly dependent");
  const Vector la = (ba * ba.transpose()).llt().solve(ba * v);
  for (std::size_t r = 0; r < act.size(); ++r) {
    double l = la(static_cast<Eigen::Index>(r));
    if (l < -scale) throw NotInNormalCone("negative normal-cone coefficient");
    lambda(act[r]) = std::max(l, 0.0);
  }
  if ((v - f.normals().transpose() * lambda).norm() > scale)
    throw NotInNormalCone("vector is not a combination of active normals");
  return lambda;
}

struct Vertex {
  Vector point;
  IndexSet active;
};

/// All vertices, one per distinct active set.
inline std::vector<Vertex> vertices(const FrozenPolyhedron& f, const PolyhedronOptions& opt = {}) {
  const int n = f.dim();
  const int m = f.size();
  if (f.size() > opt.max_constraints)
    throw EnumerationCapExceeded("too many constraints for vertex enumeration");
  if (detail::binomial(m, n) > opt.max_subsets)
    throw EnumerationCapExceeded("vertex enumeration too large");
  std::vector<Vertex> out;
  std::set<std::uint64_t> seen;
  detail::for_each_subset(m, n, [&](const IndexSet& subset) {
    const Matrix bs = detail::rows(f.normals(), subset);
    if (!detail::independent_rows(bs)) return false;
    const Vector z = bs.partialPivLu().solve(detail::entries(f.offsets(), subset));
    if (!contains(f, z, opt.tol)) return false;
    IndexSet act = active_set(f, z, opt.tol);
    if (seen.insert(to_mask(act)).second) out.push_back({z, std::move(act)});
    return false;
  });
  return out;
}

/// Nonemptiness of a bounded polyhedron: it is nonempty iff it has a vertex.
inline bool is_nonempty(const FrozenPolyhedron& f, const PolyhedronOptions& opt = {}) {
  return !vertices(f, opt).empty();
}

struct LicqReport {
  bool holds = true;
  /// An active set realized in f whose normals are dependent.
  std::optional<IndexSet> witness;
};

/// LICQ over every point of a bounded polyhedron. Every realized active set
/// is contained in the active set of some vertex, so the check runs over
/// vertex active sets only.
inline LicqReport check_licq(const FrozenPolyhedron& f, const PolyhedronOptions& opt = {}) {
  const auto verts = vertices(f, opt);
  if (verts.empty()) throw Infeasible("LICQ check on an empty polyhedron");
  for (const auto& v : verts)
    if (!detail::independent_rows(detail::rows(f.normals(), v.active))) return {false, v.active};
  return {};
}

/// The family of all active sets J(z), z in f. Realized active sets are
/// exactly the intersections of vertex active sets.
inline std::set<IndexSet> enumerate_faces(const FrozenPolyhedron& f, const PolyhedronOptions& opt = {}) {
  const auto verts = vertices(f, opt);
  if (verts.empty()) throw Infeasible("face enumeration on an empty polyhedron");
  std::set<std::uint64_t> faces;
  for (const auto& v : verts) faces.insert(to_mask(v.active));
  std::vector<std::uint64_t> frontier(faces.begin(), faces.end());
  while (!frontier.empty()) {
    std::vector<std::uint64_t> next;
    const std::vector<std::uint64_t> all(faces.begin(), faces.end());
    for (auto a : frontier)
      for (auto b : all)
        if (faces.insert(a & b).second) next.push_back(a & b);
    frontier = std::move(next);
  }
  std::set<IndexSet> out;
  for (auto mask : faces) out.insert(from_mask(mask));
  return out;
}

/// Grid estimate of the smallest γ with Σλ_i|b_i| <= γ|Σλ_i b_i| over every
/// face and λ >= 0. Each maximal active set is searched over the simplex
/// {λ >= 0, Σλ = 1} sampled with `divisions` steps per axis.
inline double gamma_constant(const FrozenPolyhedron& f, int divisions = 50,
                             const PolyhedronOptions& opt = {}) {
  if (divisions < 1) throw InvalidArgument("gamma grid needs at least one division");
  const auto licq = check_licq(f, opt);
  if (!licq.holds) throw LicqFailure("reverse triangle constant requires LICQ");
  double gamma = 0.0;
  std::set<std::uint64_t> done;
  for (const auto& v : vertices(f, opt)) {
    if (v.active.empty() || !done.insert(to_mask(v.active)).second) continue;
    const int s = static_cast<int>(v.active.size());
    if (detail::binomial(divisions + s - 1, s - 1) > opt.max_subsets)
      throw EnumerationCapExceeded("gamma grid too large; lower the resolution");
    const Matrix ba = detail::rows(f.normals(), v.active);
    const Vector lengths = ba.rowwise().norm();
    std::vector<int> parts(static_cast<std::size_t>(s), 0);
    std::function<void(int, int)> visit = [&](int idx, int remaining) {
      if (idx == s - 1) {
        parts[idx] = remaining;
        Vector lam(s);
        for (int i = 0; i < s; ++i) lam(i) = parts[i];
        const double denom = (ba.transpose() * lam).norm();
        if (denom > 0.0) gamma = std::max(gamma, lengths.dot(lam) / denom);
        return;
      }
      for (int k = 0; k <= remaining; ++k) {
        parts[idx] = k;
        visit(idx + 1, remaining - k);
      }
    };
    visit(0, divisions);
  }
  return gamma;
}

/// Whether the normals positively span R^n (equivalently, every polyhedron
/// with these normals is bounded): they span linearly and each -b_i lies in
/// the cone of all normals.
inline bool positively_spans(const Matrix& normals) {
  const Matrix bt = normals.transpose();
  Eigen::ColPivHouseholderQR<Matrix> qr(bt);
  qr.setThreshold(1e-10);
  if (qr.rank() < normals.cols()) return false;
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    const Vector target = -normals.row(i).transpose();
    const Vector x = detail::nnls(bt, target);
    if ((bt * x - target).norm() > 1e-9 * (1.0 + target.norm())) return false;
  }
  return true;
}

struct Box {
  Vector lower;
  Vector upper;
};

inline Box bounding_box(const FrozenPolyhedron& f, const PolyhedronOptions& opt = {}) {
  const auto verts = vertices(f, opt);
  if (verts.empty()) throw Infeasible("bounding box of an empty polyhedron");
  Box box{verts.front().point, verts.front().point};
  for (const auto& v : verts) {
    box.lower = box.lower.cwiseMin(v.point);
    box.upper = box.upper.cwiseMax(v.point);
  }
  return box;
}

/// Uniform sample from a bounded polyhedron by rejection inside its
/// bounding box.
template <class Rng>
Vector sample_uniform(const FrozenPolyhedron& f, Rng& rng, int max_tries = 1'000'000) {
  const Box box = bounding_box(f);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector z(f.dim());
  for (int tries = 0; tries < max_tries; ++tries) {
    for (int i = 0; i < f.dim(); ++i) z(i) = box.lower(i) + unit(rng) * (box.upper(i) - box.lower(i));
    if (contains(f, z, 0.0)) return z;
  }
  throw Infeasible("rejection sampling found no interior point (flat polyhedron?)");
}

/// C(t) = {z : <b_i, z> <= c_i(t)} with T-periodic piecewise-linear offsets.
class MovingPolyhedron {
 public:
  MovingPolyhedron(Matrix normals, std::vector<PeriodicSignal> offsets)
      : normals_(std::move(normals)), offsets_(std::move(offsets)) {
    if (normals_.rows() < 1) throw InvalidArgument("moving polyhedron needs a constraint");
    if (static_cast<std::size_t>(normals_.rows()) != offsets_.size())
      throw DimensionMismatch("one offset signal per normal is required");
    for (Eigen::Index i = 0; i < normals_.rows(); ++i)
      if (normals_.row(i).norm() == 0.0) throw InvalidArgument("zero normal vector");
    for (const auto& s : offsets_) {
      if (!s.is_linear()) throw InvalidArgument("offsets must be piecewise-linear signals");
      if (std::abs(s.period() - period()) > 1e-12 * period())
        throw InvalidArgument("offset signals must share one period");
    }
    if (!positively_spans(normals_))
      throw InvalidArgument("normals do not positively span the space: the set is unbounded");
  }

  int dim() const { return static_cast<int>(normals_.cols()); }
  int size() const { return static_cast<int>(normals_.rows()); }
  double period() const { return offsets_.front().period(); }
  const Matrix& normals() const { return normals_; }
  const std::vector<PeriodicSignal>& offsets() const { return offsets_; }

  FrozenPolyhedron freeze(double t) const {
    Vector c(size());
    for (int i = 0; i < size(); ++i) c(i) = offsets_[static_cast<std::size_t>(i)](t);
    return {normals_, std::move(c)};
  }

  bool aligned_to_grid(double t0, double h) const {
    return std::all_of(offsets_.begin(), offsets_.end(),
                       [&](const PeriodicSignal& s) { return s.aligned_to_grid(t0, h); });
  }

  /// First grid time t0 + k·T/count (k < count) at which the set is empty.
  std::optional<double> first_empty_time(double t0, int count, const PolyhedronOptions& opt = {}) const {
    for (int k = 0; k < count; ++k) {
      const double t = t0 + period() * k / count;
      if (!is_nonempty(freeze(t), opt)) return t;
    }
    return std::nullopt;
  }

 private:
  Matrix normals_;
  std::vector<PeriodicSignal> offsets_;
};

inline FrozenPolyhedron freeze(const MovingPolyhedron& p, double t) { return p.freeze(t); }

inline nlohmann::json normals_to_json(const Matrix& b) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < b.cols(); ++j) row.push_back(b(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline void to_json(nlohmann::json& j, const MovingPolyhedron& p) {
  nlohmann::json offsets = nlohmann::json::array();
  for (const auto& s : p.offsets()) offsets.push_back(s);
  j = {{"n", p.dim()}, {"normals", normals_to_json(p.normals())}, {"offsets", offsets}};
}

inline MovingPolyhedron polyhedron_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    const auto& rows = j.at("normals");
    Matrix b(static_cast<Eigen::Index>(rows.size()), n);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != static_cast<std::size_t>(n))
        throw DimensionMismatch("normal " + std::to_string(i) + " has wrong length");
      for (int k = 0; k < n; ++k) b(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)].get<double>();
    }
    std::vector<PeriodicSignal> offsets;
    for (const auto& s : j.at("offsets")) offsets.push_back(signal_from_json(s));
    return {std::move(b), std::move(offsets)};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed polyhedron: ") + e.what());
  }
}

}  // namespace polysweep
