#include "racestack/sim.hpp"

#include <cmath>
#include <sstream>

#include "gtest/gtest.h"
#include "racestack/tracks.hpp"

namespace racestack::sim {
namespace {

TEST(Plant, StraightLineStaysStraight) {
  VehicleState s;
  s.vx = 2.0;
  Plant p(PlantConfig{}, s);
  for (int k = 0; k < 300; ++k) p.tick(0.0, 2.0);
  EXPECT_EQ(p.state().vy, 0.0);
  EXPECT_EQ(p.state().r, 0.0);
  EXPECT_EQ(p.state().y, 0.0);
  EXPECT_EQ(p.state().psi, 0.0);
  EXPECT_NEAR(p.state().x, 2.0 * 2.0, 1e-9);
}

TEST(Plant, SteadyStateYawRateMatchesBicycleClosedForm) {
  const PlantConfig c;
  for (double vx : {1.0, 2.0, 3.5}) {
    for (double delta : {0.01, -0.02}) {
      VehicleState s;
      s.vx = vx;
      s.delta_act = delta;
      Plant p(c, s);
      for (int k = 0; k < 150 * 8; ++k) p.tick(delta, vx);
      // Linear bicycle: delta = L/R + K vx^2/R with K the understeer gradient.
      const double R = (c.wheelbase + c.understeer_gradient() * vx * vx) / delta;
      EXPECT_NEAR(p.state().r / (vx / R), 1.0, 1e-3) << "vx=" << vx << " delta=" << delta;
    }
  }
}

TEST(Plant, SteeringStepReaches63PercentOneLagAfterTheDelay) {
  const PlantConfig c;
  VehicleState s;
  s.vx = 1.0;
  Plant p(c, s);
  const double step = 0.1;
  const auto ticks = static_cast<int>(std::llround((c.steer_delay + c.steer_lag) * c.tick_rate));
  for (int k = 0; k < ticks; ++k) {
    p.tick(step, 1.0);
    if (k + 1 < static_cast<int>(std::llround(c.steer_delay * c.tick_rate))) EXPECT_EQ(p.state().delta_act, 0.0);
  }
  EXPECT_NEAR(p.state().delta_act / step, 1.0 - std::exp(-1.0), 0.02 * (1.0 - std::exp(-1.0)));
}

TEST(Plant, SpeedDecaysMonotonicallyToZero) {
  VehicleState s;
  s.vx = 3.0;
  Plant p(PlantConfig{}, s);
  double prev = s.vx;
  for (int k = 0; k < 150 * 5; ++k) {
    p.tick(0.0, 0.0);
    EXPECT_LE(p.state().vx, prev);
    EXPECT_GE(p.state().vx, 0.0);
    prev = p.state().vx;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Plant, RejectsBadConfigAndInputs) {
  PlantConfig c;
  c.steer_delay = 0.15 + 0.3 / 1500.0;
  EXPECT_THROW(c.validate(), Error);
  c = PlantConfig{};
  c.mass = 0.0;
  EXPECT_THROW(c.validate(), Error);
  Plant p{PlantConfig{}};
  EXPECT_THROW(p.tick(std::nan(""), 1.0), Error);
  EXPECT_THROW(step_plant(VehicleState{}, 0.0, INFINITY, PlantConfig{}, 1e-3), Error);
}

class ClosedLoop : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    track_ = new geometry::TrackDefinition(geometry::make_track_a());
    line_ = new Raceline(raceline::generate_raceline(*track_, ggv::cautious(), 0.35));
  }
  static void TearDownTestSuite() {
    delete track_;
    delete line_;
  }
  static geometry::TrackDefinition* track_;
  static Raceline* line_;
};

geometry::TrackDefinition* ClosedLoop::track_ = nullptr;
Raceline* ClosedLoop::line_ = nullptr;

TEST_F(ClosedLoop, ZeroLapsGivesEmptyTrace) {
  const RunTrace tr = run_closed_loop(*line_, *track_, StackConfig{}, PlantConfig{}, 0, 1);
  EXPECT_TRUE(tr.rows.empty());
  EXPECT_FALSE(tr.crashed);
}

TEST_F(ClosedLoop, CautiousPurePursuitCompletesLaps) {
  const RunTrace tr = run_closed_loop(*line_, *track_, StackConfig{}, PlantConfig{}, 2, 1);
  ASSERT_TRUE(tr.completed(2));
  EXPECT_EQ(tr.lap_times.size(), 2u);
  // Laps take a little longer than the raceline promises, not wildly longer.
  EXPECT_GT(tr.lap_times[1], raceline::lap_time(*line_));
  EXPECT_LT(tr.lap_times[1], 1.2 * raceline::lap_time(*line_));
  for (const auto& r : tr.rows) EXPECT_LT(std::abs(r.lat_err), 0.2);
}

TEST_F(ClosedLoop, ClothoidCompletesLapsWithoutFallbacks) {
  StackConfig sc;
  sc.controller = control::Tracker::Clothoid;
  const RunTrace tr = run_closed_loop(*line_, *track_, sc, PlantConfig{}, 1, 1);
  EXPECT_TRUE(tr.completed(1));
  EXPECT_LT(static_cast<double>(tr.fallbacks), 0.01 * static_cast<double>(tr.rows.size()));
}

TEST_F(ClosedLoop, CrashIsFlaggedWithPosition) {
  PlantConfig weak;
  weak.steer_range = 0.05;  // cannot make the turns
  const RunTrace tr = run_closed_loop(*line_, *track_, StackConfig{}, weak, 1, 1);
  ASSERT_TRUE(tr.crashed);
  EXPECT_TRUE(tr.lap_times.empty());
  EXPECT_EQ(tr.crash_tick + 1, tr.rows.size());
  EXPECT_EQ(tr.crash_x, tr.rows.back().x);
  EXPECT_EQ(tr.crash_y, tr.rows.back().y);
}

bool same_except_timing(const RunTrace& a, const RunTrace& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& p = a.rows[i];
    const auto& q = b.rows[i];
    if (p.t != q.t || p.x != q.x || p.y != q.y || p.psi != q.psi || p.vx != q.vx || p.vy != q.vy || p.r != q.r ||
        p.delta_cmd != q.delta_cmd || p.delta_act != q.delta_act || p.v_cmd != q.v_cmd || p.rho_ref != q.rho_ref ||
        p.lat_err != q.lat_err || p.s_proj != q.s_proj)
      return false;
  }
  return a.lap_times == b.lap_times && a.crashed == b.crashed;
}

TEST_F(ClosedLoop, DeterministicForEqualSeeds) {
  StackConfig sc;
  sc.fbga = true;
  sc.pose_noise = 0.005;
  const RunTrace a = run_closed_loop(*line_, *track_, sc, PlantConfig{}, 1, 42);
  const RunTrace b = run_closed_loop(*line_, *track_, sc, PlantConfig{}, 1, 42);
  const RunTrace c = run_closed_loop(*line_, *track_, sc, PlantConfig{}, 1, 43);
  EXPECT_TRUE(same_except_timing(a, b));
  EXPECT_FALSE(same_except_timing(a, c));
}

TEST_F(ClosedLoop, TraceFileRoundTripAndSchemaCheck) {
  PlantConfig weak;
  weak.steer_range = 0.05;
  const RunTrace tr = run_closed_loop(*line_, *track_, StackConfig{}, weak, 1, 1);
  std::stringstream ss;
  write_trace(ss, tr);
  const RunTrace back = parse_trace(ss);
  EXPECT_TRUE(same_except_timing(tr, back));
  EXPECT_EQ(back.crashed, tr.crashed);
  EXPECT_EQ(back.crash_tick, tr.crash_tick);
  EXPECT_EQ(back.path_length, tr.path_length);
  EXPECT_EQ(back.rows.back().cpu_us_planner, tr.rows.back().cpu_us_planner);

  std::stringstream bad_header("t,x,y\n0,1,2\n");
  EXPECT_THROW(parse_trace(bad_header), Error);
  std::stringstream short_row(std::string(kTraceHeader) + "\n0,1,2\n");
  EXPECT_THROW(parse_trace(short_row), Error);
  std::stringstream text_cell(std::string(kTraceHeader) + "\n0,1,2,3,4,5,6,7,8,9,10,11,x,13,14,15\n");
  EXPECT_THROW(parse_trace(text_cell), Error);
}

}  // namespace
}  // namespace racestack::sim
