#pragma once

// Periodic scalar signals: piecewise-linear (continuous, Lipschitz) or
// piecewise-constant (step functions, admitted only as drift).

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "polysweep/errors.hpp"

namespace polysweep {

enum class SignalKind { piecewise_linear, piecewise_constant };

struct Breakpoint {
  double time;
  double value;
};

class PeriodicSignal {
 public:
  PeriodicSignal(double period, SignalKind kind, std::vector<Breakpoint> points)
      : period_(period), kind_(kind), points_(std::move(points)) {
    if (!(period_ > 0.0) || !std::isfinite(period_))
      throw InvalidArgument("signal period must be positive and finite");
    if (points_.empty()) throw InvalidArgument("signal needs at least one breakpoint");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const auto& p = points_[i];
      if (!std::isfinite(p.time) || !std::isfinite(p.value))
        throw InvalidArgument("signal breakpoints must be finite");
      if (p.time < 0.0 || p.time >= period_)
        throw InvalidArgument("signal breakpoint time outside [0, period)");
      if (i > 0 && !(p.time > points_[i - 1].time))
        throw InvalidArgument("signal breakpoint times must be strictly increasing");
    }
  }

  static PeriodicSignal constant(double period, double value) {
    return {period, SignalKind::piecewise_linear, {{0.0, value}}};
  }

  /// Symmetric triangle wave: low at t = 0, high at t = period / 2.
  static PeriodicSignal triangle(double period, double low, double high) {
    return {period, SignalKind::piecewise_linear, {{0.0, low}, {0.5 * period, high}}};
  }

  double period() const { return period_; }
  SignalKind kind() const { return kind_; }
  const std::vector<Breakpoint>& points() const { return points_; }
  bool is_linear() const { return kind_ == SignalKind::piecewise_linear; }

  /// Reduces t to [0, period) with the floor convention. Phases within a
  /// relative 1e-12 of a breakpoint snap onto it so that grid times computed
  /// in floating point select the intended step of a piecewise-constant signal.
  double phase(double t) const {
    double r = t - period_ * std::floor(t / period_);
    const double eps = 1e-12 * period_;
    if (r >= period_ - eps || r < 0.0) r = 0.0;
    auto it = std::lower_bound(points_.begin(), points_.end(), r - eps,
                               [](const Breakpoint& b, double x) { return b.time < x; });
    if (it != points_.end() && std::abs(it->time - r) <= eps) r = it->time;
    return r;
  }

  double operator()(double t) const {
    const double r = phase(t);
    // Last breakpoint with time <= r, or none when r precedes the first one.
    auto it = std::upper_bound(points_.begin(), points_.end(), r,
                               [](double x, const Breakpoint& b) { return x < b.time; });
    if (kind_ == SignalKind::piecewise_constant) {
      if (it == points_.begin()) return points_.back().value;
      return std::prev(it)->value;
    }
    if (points_.size() == 1) return points_.front().value;
    Breakpoint left, right;
    if (it == points_.begin()) {
      left = {points_.back().time - period_, points_.back().value};
      right = points_.front();
    } else if (it == points_.end()) {
      left = points_.back();
      right = {points_.front().time + period_, points_.front().value};
    } else {
      left = *std::prev(it);
      right = *it;
    }
    const double s = (r - left.time) / (right.time - left.time);
    return left.value + s * (right.value - left.value);
  }

  /// Max absolute slope over all segments, wrap segment included.
  double lipschitz_constant() const {
    if (kind_ == SignalKind::piecewise_constant) {
      for (const auto& p : points_)
        if (p.value != points_.front().value)
          throw InvalidArgument("piecewise-constant signal with jumps is not Lipschitz");
      return 0.0;
    }
    double lip = 0.0;
    const std::size_t n = points_.size();
    if (n == 1) return 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Breakpoint a = points_[i];
      const Breakpoint b = i + 1 < n ? points_[i + 1]
                                     : Breakpoint{points_[0].time + period_, points_[0].value};
      lip = std::max(lip, std::abs(b.value - a.value) / (b.time - a.time));
    }
    return lip;
  }

  double min_value() const {
    double v = points_.front().value;
    for (const auto& p : points_) v = std::min(v, p.value);
    return v;
  }
  double max_value() const {
    double v = points_.front().value;
    for (const auto& p : points_) v = std::max(v, p.value);
    return v;
  }

  /// True when every breakpoint t_b satisfies (t_b - t0) / h ∈ ℤ.
  bool aligned_to_grid(double t0, double h) const {
    for (const auto& p : points_) {
      const double k = (p.time - t0) / h;
      if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, std::abs(k))) return false;
    }
    return true;
  }

 private:
  double period_;
  SignalKind kind_;
  std::vector<Breakpoint> points_;
};

inline double eval(const PeriodicSignal& s, double t) { return s(t); }

struct SignalTerm {
  double coefficient;
  const PeriodicSignal* signal;
};

/// constant + Σ coefficient·signal, for piecewise-linear signals sharing a
/// period. The result's breakpoints are the union of the inputs'.
inline PeriodicSignal combine(double period, double constant, std::span<const SignalTerm> terms) {
  std::vector<double> times;
  for (const auto& term : terms) {
    if (!term.signal->is_linear())
      throw InvalidArgument("only piecewise-linear signals can be combined");
    if (std::abs(term.signal->period() - period) > 1e-12 * period)
      throw InvalidArgument("combined signals must share a period");
    for (const auto& p : term.signal->points()) times.push_back(p.time);
  }
  if (times.empty()) times.push_back(0.0);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end(),
                          [&](double a, double b) { return std::abs(a - b) <= 1e-12 * period; }),
              times.end());
  std::vector<Breakpoint> pts;
  pts.reserve(times.size());
  for (double t : times) {
    double v = constant;
    for (const auto& term : terms) v += term.coefficient * (*term.signal)(t);
    pts.push_back({t, v});
  }
  return {period, SignalKind::piecewise_linear, std::move(pts)};
}

inline void to_json(nlohmann::json& j, const PeriodicSignal& s) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : s.points()) pts.push_back({p.time, p.value});
  j = {{"period", s.period()}, {"kind", s.is_linear() ? "pl" : "pc"}, {"points", pts}};
}

inline PeriodicSignal signal_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    SignalKind k;
    if (kind == "pl")
      k = SignalKind::piecewise_linear;
    else if (kind == "pc")
      k = SignalKind::piecewise_constant;
    else
      throw InvalidArgument("unknown signal kind '" + kind + "'");
    std::vector<Breakpoint> pts;
    for (const auto& p : j.at("points")) {
      if (!p.is_array() || p.size() != 2) throw InvalidArgument("signal point must be [t, v]");
      pts.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return {j.at("period").get<double>(), k, std::move(pts)};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed signal: ") + e.what());
  }
}

}  // namespace polysweep
