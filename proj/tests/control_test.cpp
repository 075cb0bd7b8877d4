#include "racestack/control.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "racestack/tracks.hpp"

namespace racestack::control {
namespace {

Path straight_path() {
  geometry::TrackDefinition t;
  for (int i = 0; i < 41; ++i) t.samples.push_back({0.25 * i, 0.0, 1.0, 1.0});
  return geometry::resample_track(t, 0.05);
}

Path circle_path(double radius) {
  geometry::TrackDefinition t;
  t.closed = true;
  for (int i = 0; i < 200; ++i) {
    const double a = kTwoPi * i / 200.0;
    t.samples.push_back({radius * std::cos(a), radius * std::sin(a), 0.5, 0.5});
  }
  return geometry::resample_track(t, 0.02);
}

LookaheadSchedule fixed(double ld) { return {{0.0}, {ld}}; }

TEST(PurePursuit, ArcCurvatureClosedForms) {
  EXPECT_DOUBLE_EQ(pure_pursuit_arc_curvature(kPi / 6.0, 1.0), 2.0 * std::sin(kPi / 6.0));
  EXPECT_NEAR(pure_pursuit_arc_curvature(kPi / 6.0, 1.0), 1.0, 1e-15);
  EXPECT_EQ(pure_pursuit_arc_curvature(0.0, 1.3), 0.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lam(-1.5, 1.5), ld(0.5, 2.0);
  for (int k = 0; k < 1000; ++k) {
    const double l = lam(rng), d = ld(rng);
    EXPECT_EQ(pure_pursuit_arc_curvature(-l, d), -pure_pursuit_arc_curvature(l, d));
  }
}

TEST(PurePursuit, AlignedOnStraightIsZero) {
  const Path p = straight_path();
  const auto ref = pure_pursuit_curvature({2.0, 0.0, 0.0, 0.0}, 2.0, p, fixed(1.0), 1.5, 0.05);
  ASSERT_EQ(ref.rho.size(), 31u);
  for (double r : ref.rho) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(PurePursuit, LateralOffsetMatchesChordGeometry) {
  const Path p = straight_path();
  const auto ref = pure_pursuit_curvature({2.0, 0.2, 0.0, 0.0}, 2.0, p, fixed(1.0), 1.0, 0.05);
  // Exact triangle: target at (1.0, -0.2) in the vehicle frame.
  const double xl = 1.0, yl = -0.2;
  const double expected = 2.0 * yl / (xl * xl + yl * yl);
  EXPECT_NEAR(ref.rho.front(), expected, 1e-12);
  EXPECT_NEAR(ref.rho.front(), -0.4, 0.02);
  // Mirror image steers the other way by exactly the same amount.
  const auto mirror = pure_pursuit_curvature({2.0, -0.2, 0.0, 0.0}, 2.0, p, fixed(1.0), 1.0, 0.05);
  EXPECT_NEAR(mirror.rho.front(), -ref.rho.front(), 1e-12);
}

TEST(PurePursuit, OnCircleReproducesPathCurvature) {
  const double R = 2.0;
  const Path p = circle_path(R);
  for (double a : {0.3, 1.7, 4.0}) {
    const PoseCurv on{R * std::cos(a), R * std::sin(a), a + kPi / 2.0, 0.0};
    const auto ref = pure_pursuit_curvature(on, 2.5, p, LookaheadSchedule::pure_pursuit(), 2.0, 0.05);
    for (double r : ref.rho) EXPECT_NEAR(r, 1.0 / R, 0.05 / R);
  }
}

TEST(PurePursuit, ContinuesWithPathCurvatureBeyondArc) {
  const Path p = circle_path(2.0);
  const PoseCurv on{2.0, 0.0, kPi / 2.0, 0.0};
  const auto ref = pure_pursuit_curvature(on, 1.0, p, fixed(0.8), 4.0, 0.05);
  EXPECT_GT(ref.lead_length, 0.79);
  EXPECT_LT(ref.lead_length, 0.82);
  EXPECT_NEAR(ref.rho.back(), 0.5, 2e-3);
}

TEST(Clothoid, MatchedArcGivesArcCurvature) {
  const double R = 2.0;
  const Path p = circle_path(R);
  const PoseCurv pose = geometry::pose_at(p, 1.0);
  const auto ref = clothoid_curvature(pose, 2.0, p, LookaheadSchedule::clothoid(), 2.0, 0.05);
  EXPECT_FALSE(ref.fallback);
  EXPECT_EQ(ref.source, Tracker::Clothoid);
  for (double r : ref.rho) EXPECT_NEAR(r, 1.0 / R, 0.05 / R);
  for (double r : ref.rho) EXPECT_NEAR(r, pose.rho, 5e-3);
}

TEST(Clothoid, AlignedOnStraightIsZero) {
  const Path p = straight_path();
  const auto ref = clothoid_curvature({2.0, 0.0, 0.0, 0.0}, 2.0, p, fixed(1.0), 2.0, 0.05);
  EXPECT_FALSE(ref.fallback);
  for (double r : ref.rho) EXPECT_NEAR(r, 0.0, 1e-9);
}

TEST(Clothoid, OffsetStartClosesGap) {
  const Path p = straight_path();
  const auto ref = clothoid_curvature({2.0, 0.2, 0.0, 0.0}, 2.0, p, fixed(1.0), 2.0, 1e-4);
  ASSERT_FALSE(ref.fallback);
  // Forward-integrate the sampled curvature over the spiral.
  double x = 2.0, y = 0.2, psi = 0.0;
  const double h = ref.ds;
  const auto steps = static_cast<std::size_t>(std::round(ref.lead_length / h));
  for (std::size_t k = 0; k < steps; ++k) {
    const double k0 = ref.rho[k], k1 = ref.rho[k + 1];
    const double psi_mid = psi + 0.25 * h * (k0 + 0.5 * (k0 + k1));
    x += h * std::cos(psi_mid);
    y += h * std::sin(psi_mid);
    psi += 0.5 * h * (k0 + k1);
  }
  const double rest = ref.lead_length - h * static_cast<double>(steps);
  x += rest * std::cos(psi);
  y += rest * std::sin(psi);
  EXPECT_NEAR(y, 0.0, 1e-5);
  EXPECT_NEAR(psi, 0.0, 1e-5);
  EXPECT_NEAR(ref.at(ref.lead_length), 0.0, 1e-3);  // linear interpolation across the spiral end
  EXPECT_LT(ref.rho[10], 0.0);
}

TEST(Clothoid, FallsBackToPurePursuitOnFailure) {
  const Path p = straight_path();
  PathTracker tracker(Tracker::Clothoid, fixed(1.0));
  // Facing backwards: the target heading differs by pi.
  const auto proj = geometry::project_to_path(p, 3.0, 0.0);
  const auto ref = tracker.reference(3.0, 0.0, kPi, 1.0, p, proj, 1.0, 0.05);
  EXPECT_TRUE(ref.fallback);
  EXPECT_EQ(ref.source, Tracker::PurePursuit);
  EXPECT_EQ(tracker.fallbacks(), 1u);
  const auto ok = tracker.reference(3.0, 0.0, 0.0, 1.0, p, proj, 1.0, 0.05);
  EXPECT_FALSE(ok.fallback);
  EXPECT_EQ(tracker.fallbacks(), 1u);
  EXPECT_EQ(tracker.ticks(), 2u);
}

TEST(KinematicSteering, ClosedFormsAndSymmetry) {
  EXPECT_EQ(kinematic_steering(0.0, 0.33), 0.0);
  EXPECT_NEAR(kinematic_steering(1.0, 0.33), 0.3187, 5e-5);
  EXPECT_DOUBLE_EQ(kinematic_steering(1.0, 0.33), std::atan(0.33));
  EXPECT_NEAR(kinematic_steering(-2.0, 0.33), -0.5834, 5e-5);
  EXPECT_DOUBLE_EQ(kinematic_steering(-2.0, 0.33), -kinematic_steering(2.0, 0.33));
  EXPECT_EQ(kinematic_steering(-2.0, 0.33, 0.4), -0.4);
  double prev = -1e9;
  for (double r = -5.0; r <= 5.0; r += 0.01) {
    const double d = kinematic_steering(r, 0.33);
    EXPECT_GT(d, prev);
    EXPECT_EQ(kinematic_steering(-r, 0.33), -d);
    prev = d;
  }
  EXPECT_THROW(kinematic_steering(1.0, 0.0), Error);
}

TEST(LookaheadSchedule, InterpolatesAndValidates) {
  const auto pp = LookaheadSchedule::pure_pursuit();
  EXPECT_DOUBLE_EQ(pp.at(0.0), 0.8);
  EXPECT_DOUBLE_EQ(pp.at(2.5), 1.1);
  EXPECT_DOUBLE_EQ(pp.at(9.0), 1.4);
  LookaheadSchedule bad{{1.0, 2.0}, {1.0, 0.9}};
  EXPECT_THROW(bad.validate(), Error);
  LookaheadSchedule neg{{1.0}, {0.0}};
  EXPECT_THROW(neg.validate(), Error);
}

TEST(ProjectNear, AgreesWithGlobalProjectionNearHint) {
  const Path p = geometry::resample_track(geometry::make_track_b(), 0.05);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> us(0.0, p.length), off(-0.5, 0.5);
  for (int k = 0; k < 200; ++k) {
    const double s = us(rng);
    const PoseCurv q = geometry::pose_at(p, s);
    const double o = off(rng);
    const double x = q.x - o * std::sin(q.psi), y = q.y + o * std::cos(q.psi);
    const auto g = geometry::project_to_path(p, x, y);
    const auto n = geometry::project_near(p, x, y, s + 0.3, 1.5);
    EXPECT_NEAR(n.s_star, g.s_star, 1e-9);
    EXPECT_NEAR(n.lateral_error, g.lateral_error, 1e-12);
  }
}

}  // namespace
}  // namespace racestack::control
