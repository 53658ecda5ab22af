#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "polysweep/crawler.hpp"
#include "polysweep/scenarios.hpp"

using namespace polysweep;

namespace {

Gait two_blocks(const PeriodicSignal& len, double mp = 1.0, double mm = 2.0) {
  return {2,
          len.period(),
          1.0,
          {len},
          {PeriodicSignal::constant(len.period(), mp), PeriodicSignal::constant(len.period(), mp)},
          {PeriodicSignal::constant(len.period(), mm), PeriodicSignal::constant(len.period(), mm)}};
}

Gait still_gait() { return two_blocks(PeriodicSignal::constant(1.0, 0.0)); }

}  // namespace

TEST(Gait, ValidatesItsSignals) {
  const auto one = PeriodicSignal::constant(1.0, 1.0);
  const auto pc = PeriodicSignal(1.0, SignalKind::piecewise_constant, {{0.0, 1.0}});
  EXPECT_THROW(Gait(1, 1.0, 1.0, {}, {one}, {one}), InvalidArgument);
  EXPECT_THROW(Gait(2, 0.0, 1.0, {one}, {one, one}, {one, one}), InvalidArgument);
  EXPECT_THROW(Gait(2, 1.0, -1.0, {one}, {one, one}, {one, one}), InvalidArgument);
  EXPECT_THROW(Gait(2, 1.0, 1.0, {}, {one, one}, {one, one}), DimensionMismatch);
  EXPECT_THROW(Gait(2, 1.0, 1.0, {one}, {one}, {one, one}), DimensionMismatch);
  EXPECT_THROW(Gait(2, 1.0, 1.0, {pc}, {one, one}, {one, one}), InvalidArgument);
  EXPECT_THROW(Gait(2, 1.0, 1.0, {PeriodicSignal::constant(2.0, 0.0)}, {one, one}, {one, one}), InvalidArgument);
  const auto zero = PeriodicSignal::constant(1.0, 0.0);
  EXPECT_THROW(Gait(2, 1.0, 1.0, {one}, {one, zero}, {one, one}), InvalidArgument);
}

TEST(Coordinates, ComposeInvertsShapeAndBarycentre) {
  const Vector x{{0.3, -1.2, 2.5, 0.0}};
  const Vector back = compose_state(barycentre(x), shape(x));
  EXPECT_LE((back - x).norm(), 1e-14);
}

TEST(Energy, RestConfigurationIsStressFree) {
  const auto g = gait_three_blocks();
  for (double t : {0.0, 0.3, 0.8}) {
    const Vector x = rest_configuration(g, t);
    EXPECT_NEAR(energy(g, t, x), 0.0, 1e-24);
    EXPECT_LE(energy_gradient(g, t, x).norm(), 1e-12);
  }
}

TEST(Energy, SingleSpring) {
  const auto g = still_gait();
  const Vector x{{0.0, 1.0}};
  EXPECT_DOUBLE_EQ(energy(g, 0.0, x), 0.5);
  const Vector grad = energy_gradient(g, 0.0, x);
  EXPECT_DOUBLE_EQ(grad(0), -1.0);
  EXPECT_DOUBLE_EQ(grad(1), 1.0);
}

TEST(Energy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0), time(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = oracle::random_gait(rng, 2 + trial % 3, 0.0);
    const double t = time(rng);
    Vector x(g.blocks());
    for (int i = 0; i < g.blocks(); ++i) x(i) = u(rng);
    const Vector fd = oracle::gradient_fd([&](const Vector& p) { return energy(g, t, p); }, x, 1e-4);
    EXPECT_LE((fd - energy_gradient(g, t, x)).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(Dissipation, ComponentwiseAndHomogeneous) {
  const auto g = still_gait();
  EXPECT_EQ(dissipation(g, 0.0, Vector::Zero(2)), 0.0);
  EXPECT_DOUBLE_EQ(dissipation(g, 0.0, Vector{{1.0, -1.0}}), 3.0);
  const Vector v{{-0.4, 2.2}};
  for (double c : {0.0, 0.5, 3.0}) EXPECT_NEAR(dissipation(g, 0.0, c * v), c * dissipation(g, 0.0, v), 1e-14);
}

TEST(ForcePolyhedron, BoxWithLicqContainingZero) {
  const auto g = gait_star();
  const auto c = build_force_polyhedron(g);
  const auto f = c.freeze(0.3);
  EXPECT_TRUE(contains(f, Vector{{1.0, -2.0}}, 0.0));
  EXPECT_FALSE(contains(f, Vector{{1.1, 0.0}}, 1e-9));
  EXPECT_FALSE(contains(f, Vector{{0.0, -2.1}}, 1e-9));
  const auto box = bounding_box(f);
  EXPECT_NEAR(box.lower(0), -2.0, 1e-12);
  EXPECT_NEAR(box.upper(1), 1.0, 1e-12);
  for (const auto& gait : reference_gaits())
    for (double t : {0.0, 0.25, 0.6}) {
      const auto ft = build_force_polyhedron(gait).freeze(t);
      EXPECT_TRUE(check_licq(ft).holds);
      EXPECT_TRUE(contains(ft, Vector::Zero(gait.blocks())));
    }
}

TEST(MovingSet, IntervalForTwoBlocks) {
  const auto k0 = build_moving_set(still_gait()).freeze(0.0);
  const auto box = bounding_box(k0);
  EXPECT_NEAR(box.lower(0), -1.0, 1e-12);
  EXPECT_NEAR(box.upper(0), 1.0, 1e-12);

  const auto g = gait_star();
  const auto k = build_moving_set(g);
  for (double t : {0.0, 0.1, 0.5, 0.7}) {
    const double l = g.lengths_at(t)(0);
    const auto b = bounding_box(k.freeze(t));
    EXPECT_NEAR(b.lower(0), -1.0 - l, 1e-12) << t;
    EXPECT_NEAR(b.upper(0), 1.0 - l, 1e-12) << t;
  }
}

TEST(MovingSet, ForceIdentity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0), time(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = oracle::random_gait(rng, 2 + trial % 4, 0.0);
    const int n = g.blocks();
    const double t = time(rng);
    Vector x(n);
    for (int i = 0; i < n; ++i) x(i) = u(rng);
    const Vector force = -energy_gradient(g, t, x);
    const Vector arg = reduced_state(g, x) + g.stiffness() * g.lengths_at(t);
    for (int i = 0; i < 2 * n; ++i) {
      const double sign = i < n ? 1.0 : -1.0;
      EXPECT_NEAR(shape_normal(n, i).dot(arg), sign * force(i % n), 1e-12);
    }
  }
}

TEST(Uniqueness, MarginsOfReferenceGaits) {
  const auto grid = period_grid(0.0, 1.0, 64);
  const auto star = check_gait_uniqueness(gait_star(), grid);
  EXPECT_DOUBLE_EQ(star.min_margin, 1.0);
  EXPECT_EQ(star.worst_subset.size(), 1U);
  EXPECT_EQ(star.degenerate_fraction, 0.0);
  const auto deg = check_gait_uniqueness(gait_degenerate(), grid);
  EXPECT_EQ(deg.min_margin, 0.0);
  EXPECT_EQ(deg.degenerate_fraction, 1.0);
  EXPECT_GT(check_gait_uniqueness(gait_three_blocks(), grid).min_margin, 0.0);
}

TEST(Uniqueness, MarginVanishesExactlyWhereLicqFails) {
  // μ_1^- crosses μ_2^+ = 1 at t = 1/4 and 3/4, where the gait degenerates.
  const Gait g(2, 1.0, 1.0, {PeriodicSignal::triangle(1.0, 0.0, 1.0)},
               {PeriodicSignal::constant(1.0, 1.0), PeriodicSignal::constant(1.0, 1.0)},
               {PeriodicSignal::triangle(1.0, 0.5, 1.5), PeriodicSignal::constant(1.0, 2.0)});
  std::mt19937_64 rng(9);
  std::vector<Gait> gaits{g, gait_degenerate(), gait_star()};
  for (int i = 0; i < 6; ++i) gaits.push_back(oracle::random_gait(rng, 2 + i % 2, 0.0));
  for (const auto& gait : gaits) {
    const auto k = build_moving_set(gait);
    for (double t : period_grid(0.0, 1.0, 16)) {
      const bool degenerate = uniqueness_margin_at(gait, t) <= 1e-12;
      EXPECT_EQ(degenerate, !check_licq(k.freeze(t)).holds) << "t=" << t;
    }
  }
  EXPECT_EQ(uniqueness_margin_at(g, 0.25), 0.0);
  EXPECT_GT(uniqueness_margin_at(g, 0.5), 0.0);
}

TEST(Uniqueness, EnumerationCap) {
  const auto one = PeriodicSignal::constant(1.0, 1.0);
  const Gait big(17, 1.0, 1.0, std::vector<PeriodicSignal>(16, one), std::vector<PeriodicSignal>(17, one),
                 std::vector<PeriodicSignal>(17, one));
  EXPECT_THROW(uniqueness_margin_at(big, 0.0), EnumerationCapExceeded);
}

TEST(Admissible, Examples) {
  const auto g = gait_three_blocks();
  EXPECT_TRUE(admissible(g, 0.4, rest_configuration(g, 0.4)));
  const auto s = still_gait();
  EXPECT_FALSE(admissible(s, 0.0, compose_state(0.0, Vector{{5.0}})));
  EXPECT_TRUE(admissible(s, 0.0, compose_state(0.0, Vector{{1.0}})));
}

TEST(Admissible, AgreesWithReducedSetMembership) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-3.0, 3.0), time(0.0, 1.0);
  int inside = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = oracle::random_gait(rng, 2 + trial % 3, 0.0);
    const auto k = build_moving_set(g);
    for (int j = 0; j < 20; ++j) {
      const double t = time(rng);
      Vector x(g.blocks());
      for (int i = 0; i < g.blocks(); ++i) x(i) = u(rng);
      const bool a = admissible(g, t, x);
      inside += a;
      EXPECT_EQ(a, contains(k.freeze(t), reduced_state(g, x)));
    }
  }
  EXPECT_GT(inside, 0);
}

TEST(Admissible, RandomStatesAreAdmissible) {
  std::mt19937_64 rng(17);
  const auto g = gait_three_blocks();
  for (int i = 0; i < 50; ++i) {
    const Vector x = random_admissible_state(g, 0.0, rng);
    EXPECT_TRUE(admissible(g, 0.0, x));
    EXPECT_LE(std::abs(barycentre(x)), 1.0);
  }
}

TEST(Reduced, ConstantLengthsDoNotMove) {
  const auto g = still_gait();
  const auto r = simulate_reduced(g, rest_configuration(g, 0.0), 0.0, 3, 50);
  EXPECT_EQ(r.sweep.multipliers.norm(), 0.0);
  for (int k = 0; k <= r.motion.steps(); ++k) EXPECT_EQ(r.motion.y(k), 0.0);
  EXPECT_EQ(estimate_velocity(r.motion).v0, 0.0);
}

TEST(Reduced, SingleForwardSlipMovesTheBarycentreByHalfTheStretch) {
  const auto g = gait_star();
  const auto r = simulate_reduced(g, rest_configuration(g, 0.0), 0.0, 1, 400);
  const auto& m = r.motion;
  int slipping = 0;
  // Extension: L rises 0 -> 4 on [0, 1/2]; the front block slips once the
  // spring force reaches μ^+ = 1 at t = 1/8.
  for (int k = 0; k < 200; ++k) {
    const double dz = m.z(0, k + 1) - m.z(0, k);
    if (std::abs(dz) < 1e-14) continue;
    ++slipping;
    EXPECT_NEAR(m.x(0, k + 1), m.x(0, k), 1e-12) << k;
    EXPECT_NEAR(m.y(k + 1) - m.y(k), dz / 2, 1e-12) << k;
  }
  EXPECT_GT(slipping, 100);
}

TEST(Reduced, GaitStarAdvancesTwoPerPeriod) {
  const auto g = gait_star();
  const auto r = simulate_reduced(g, rest_configuration(g, 0.0), 0.0, 10, 2000);
  const auto v = estimate_velocity(r.motion);
  EXPECT_NEAR(v.v0, 2.0, 0.02);
  EXPECT_TRUE(v.converged);
  EXPECT_FALSE(verify_trajectory(SweepingProblem(build_moving_set(g)), r.sweep));
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Reduced, MirroredGaitReversesTheVelocity) {
  const auto g = gait_star_mirror();
  const auto r = simulate_reduced(g, rest_configuration(g, 0.0), 0.0, 10, 2000);
  EXPECT_NEAR(estimate_velocity(r.motion).v0, -2.0, 0.02);
}

TEST(Reduced, VelocityIndependentOfTheStart) {
  const auto g = gait_star();
  const int m = 2000;
  std::mt19937_64 rng(21);
  std::vector<double> v;
  for (int i = 0; i < 5; ++i) {
    const auto r = simulate_reduced(g, random_admissible_state(g, 0.0, rng), 0.0, 10, m);
    v.push_back(estimate_velocity(r.motion).v0);
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  EXPECT_LE(*hi - *lo, 1e-6 + 10.0 / m);
}

TEST(Reduced, StatesStayInTheMovingSet) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 6; ++trial) {
    const auto g = oracle::random_gait(rng, 2 + trial % 2, 0.1);
    const auto r = simulate_reduced(g, random_admissible_state(g, 0.0, rng), 0.0, 3, 200);
    const auto fail = verify_trajectory(SweepingProblem(build_moving_set(g)), r.sweep);
    EXPECT_FALSE(fail) << fail.value_or("");
    for (int k = 0; k <= r.motion.steps(); ++k) EXPECT_TRUE(admissible(g, r.motion.time(k), r.motion.x.col(k)));
  }
}

TEST(Reduced, RejectsBadStartsAndDegenerateGaits) {
  const auto g = gait_star();
  EXPECT_THROW(simulate_reduced(g, compose_state(0.0, Vector{{5.0}}), 0.0, 3, 100), InadmissibleState);
  EXPECT_THROW(simulate_reduced(g, Vector::Zero(3), 0.0, 3, 100), DimensionMismatch);
  const auto d = gait_degenerate();
  EXPECT_THROW(simulate_reduced(d, rest_configuration(d, 0.0), 0.0, 3, 100), GaitRejected);
}

TEST(Reduced, IsolatedDegenerateTimesOnlyWarn) {
  const Gait g(2, 1.0, 1.0, {PeriodicSignal::triangle(1.0, 0.0, 1.0)},
               {PeriodicSignal::constant(1.0, 1.0), PeriodicSignal::constant(1.0, 1.0)},
               {PeriodicSignal::triangle(1.0, 0.5, 1.5), PeriodicSignal::constant(1.0, 2.0)});
  const auto r = simulate_reduced(g, rest_configuration(g, 0.0), 0.0, 3, 4000);
  EXPECT_EQ(r.warnings.size(), 1U);
  EXPECT_EQ(r.margin.min_margin, 0.0);
}

TEST(BarycentreIncrement, SignsAndHomogeneity) {
  const auto g = gait_three_blocks();
  Vector eta = Vector::Zero(6);
  eta(1) = 0.3;
  EXPECT_DOUBLE_EQ(barycentre_increment(g, eta), 0.1);
  eta(4) = 0.6;
  EXPECT_DOUBLE_EQ(barycentre_increment(g, eta), -0.1);
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 6; ++j) eta(j) = u(rng);
    const double c = 3.0 * u(rng);
    EXPECT_NEAR(barycentre_increment(g, c * eta), c * barycentre_increment(g, eta), 1e-14);
  }
  EXPECT_THROW(barycentre_increment(g, Vector::Zero(4)), DimensionMismatch);
}

TEST(Oracle, SmallActuationSticks) {
  const auto g = two_blocks(PeriodicSignal::triangle(1.0, 0.0, 0.5));
  const Vector x0 = rest_configuration(g, 0.0);
  const auto m = incremental_oracle(g, x0, 0.0, 2, 100);
  for (int k = 0; k <= m.steps(); ++k) EXPECT_EQ(m.x.col(k), x0);
}

TEST(Oracle, GaitStarMatchesTheReducedPipeline) {
  const auto g = gait_star();
  const Vector x0 = rest_configuration(g, 0.0);
  const auto o = incremental_oracle(g, x0, 0.0, 5, 2000);
  const auto r = simulate_reduced(g, x0, 0.0, 5, 2000);
  EXPECT_NEAR(estimate_velocity(o).v0, 2.0, 0.02);
  EXPECT_LE((o.x - r.motion.x).cwiseAbs().maxCoeff(), 0.02);
  for (int k = 0; k <= o.steps(); ++k) EXPECT_TRUE(admissible(g, o.time(k), o.x.col(k)));
}

TEST(Oracle, RandomGaitsMatchTheReducedPipeline) {
  std::mt19937_64 rng(31);
  const int steps = 400;
  const double h = 1.0 / steps;
  double worst = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    const auto g = oracle::random_gait(rng, 2 + trial % 2, 0.1);
    const Vector x0 = random_admissible_state(g, 0.0, rng);
    const auto o = incremental_oracle(g, x0, 0.0, 5, steps);
    const auto r = simulate_reduced(g, x0, 0.0, 5, steps);
    const double d = (o.x - r.motion.x).cwiseAbs().maxCoeff();
    worst = std::max(worst, d);
    EXPECT_LE(d, 10.0 * h) << "trial " << trial;
  }
  RecordProperty("empirical_C", std::to_string(worst / h));
}

TEST(Oracle, Errors) {
  const auto g = gait_star();
  EXPECT_THROW(incremental_oracle(g, compose_state(0.0, Vector{{5.0}}), 0.0, 1, 10), InadmissibleState);
  EXPECT_THROW(incremental_oracle(g, Vector::Zero(2), 0.0, 0, 10), InvalidArgument);
  const auto one = PeriodicSignal::constant(1.0, 1.0);
  const Gait big(9, 1.0, 1.0, std::vector<PeriodicSignal>(8, one), std::vector<PeriodicSignal>(9, one),
                 std::vector<PeriodicSignal>(9, PeriodicSignal::constant(1.0, 2.0)));
  EXPECT_THROW(incremental_oracle(big, Vector::Zero(9), 0.0, 1, 10), EnumerationCapExceeded);
  const auto d = gait_degenerate();
  EXPECT_THROW(incremental_oracle(d, rest_configuration(d, 0.0), 0.0, 1, 10), GaitRejected);
}

TEST(Velocity, NeedsThreePeriods) {
  const auto g = gait_star();
  const auto r = simulate_reduced(g, rest_configuration(g, 0.0), 0.0, 2, 100);
  EXPECT_THROW(estimate_velocity(r.motion), InsufficientData);
}

TEST(Velocity, PerPeriodDisplacements) {
  const auto g = gait_star();
  const auto r = simulate_reduced(g, rest_configuration(g, 0.0), 0.0, 4, 200);
  const auto v = estimate_velocity(r.motion);
  ASSERT_EQ(v.per_period.size(), 4U);
  EXPECT_DOUBLE_EQ(v.per_period[2], r.motion.y(600) - r.motion.y(400));
  EXPECT_EQ(v.v0, v.per_period.back());
}

TEST(RunningPeriodic, StillGaitIsConstant) {
  const auto g = still_gait();
  const auto r = running_periodic_decomposition(simulate_reduced(g, rest_configuration(g, 0.0), 0.0, 3, 20).motion);
  EXPECT_EQ(r.v0, 0.0);
  EXPECT_EQ(r.residual, 0.0);
  for (int j = 1; j < r.periodic.cols(); ++j) EXPECT_EQ(r.periodic.col(j), r.periodic.col(0));
}

TEST(RunningPeriodic, GaitStarConvergesAndIgnoresAPeriodShift) {
  const auto g = gait_star();
  const Vector x0 = rest_configuration(g, 0.0);
  const auto a = running_periodic_decomposition(simulate_reduced(g, x0, 0.0, 10, 2000).motion);
  const auto b = running_periodic_decomposition(simulate_reduced(g, x0, 1.0, 10, 2000).motion);
  EXPECT_LT(a.residual, 1e-3);
  EXPECT_TRUE(a.converged);
  EXPECT_NEAR(a.v0, b.v0, 1e-9);
  EXPECT_LE((a.periodic - b.periodic).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GaitJson, RoundTrip) {
  for (const auto& g : reference_gaits()) {
    const auto back = gait_from_json(nlohmann::json::parse(nlohmann::json(g).dump()));
    EXPECT_EQ(back.blocks(), g.blocks());
    EXPECT_EQ(back.stiffness(), g.stiffness());
    for (double t : {0.0, 0.3, 0.9}) {
      EXPECT_EQ(back.lengths_at(t), g.lengths_at(t));
      EXPECT_EQ(back.mu_plus_at(t), g.mu_plus_at(t));
      EXPECT_EQ(back.mu_minus_at(t), g.mu_minus_at(t));
    }
  }
  EXPECT_THROW(gait_from_json(nlohmann::json::parse(R"({"N": 2})")), InvalidArgument);
}

TEST(MotionCsv, Header) {
  const auto g = gait_three_blocks();
  const auto r = simulate_reduced(g, rest_configuration(g, 0.0), 0.0, 1, 4);
  std::stringstream ss;
  write_motion_csv(ss, r.motion);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "t,x1,x2,x3,y,z1,z2,w1,w2");
}
