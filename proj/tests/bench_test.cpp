#include "racestack/bench.hpp"

#include <cmath>

#include "gtest/gtest.h"
#include "racestack/tracks.hpp"

namespace racestack::bench {
namespace {

class BenchFixture : public ::testing::Test {
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

geometry::TrackDefinition* BenchFixture::track_ = nullptr;
Raceline* BenchFixture::line_ = nullptr;

RunTrace synthetic(std::size_t n, double rate, const std::function<void(std::size_t, sim::TraceRow&)>& fill) {
  RunTrace tr;
  tr.tick_rate = rate;
  for (std::size_t i = 0; i < n; ++i) {
    sim::TraceRow r;
    r.t = static_cast<double>(i) / rate;
    fill(i, r);
    tr.rows.push_back(r);
  }
  return tr;
}

TEST_F(BenchFixture, GluedTraceHasZeroLateralError) {
  const auto& p = line_->path;
  const RunTrace tr = synthetic(400, 150.0, [&](std::size_t i, sim::TraceRow& r) {
    const auto pose = geometry::pose_at(p, 0.013 * static_cast<double>(i));
    r.x = pose.x;
    r.y = pose.y;
    r.vx = 2.0;
  });
  const RunMetrics m = compute_metrics(tr, *line_);
  EXPECT_NEAR(m.mean_lat_err, 0.0, 1e-9);
  EXPECT_NEAR(m.max_lat_err, 0.0, 1e-9);
  EXPECT_TRUE(m.partial);
  EXPECT_FALSE(m.lap_time.has_value());
}

TEST_F(BenchFixture, ConstantSteeringHasZeroRate) {
  const RunTrace tr = synthetic(300, 150.0, [](std::size_t, sim::TraceRow& r) { r.delta_cmd = 0.17; });
  EXPECT_EQ(compute_metrics(tr, *line_).rms_steering_rate, 0.0);
}

TEST_F(BenchFixture, SinusoidalSteeringRateMatchesClosedForm) {
  const double amp = 0.2, omega = 3.0, rate = 1000.0;
  // Whole number of periods so the RMS of the cosine is exactly 1/sqrt(2).
  const auto n = static_cast<std::size_t>(std::llround(4.0 * 2.0 * M_PI / omega * rate)) + 1;
  const RunTrace tr = synthetic(n, rate, [&](std::size_t i, sim::TraceRow& r) {
    r.delta_cmd = amp * std::sin(omega * static_cast<double>(i) / rate);
  });
  EXPECT_NEAR(compute_metrics(tr, *line_).rms_steering_rate / (amp * omega / std::sqrt(2.0)), 1.0, 0.01);
}

TEST_F(BenchFixture, EmptyTraceRejected) { EXPECT_THROW(compute_metrics(RunTrace{}, *line_), Error); }

TEST_F(BenchFixture, CrashHasNoLapTime) {
  sim::PlantConfig weak;
  weak.steer_range = 0.05;
  const RunTrace tr = sim::run_closed_loop(*line_, *track_, sim::StackConfig{}, weak, 1, 1);
  const RunMetrics m = compute_metrics(tr, *line_);
  EXPECT_TRUE(m.crash);
  EXPECT_FALSE(m.lap_time.has_value());
  EXPECT_FALSE(m.partial);
  EXPECT_GE(m.max_v, 0.0);
  EXPECT_GE(m.cpu_controller.mean_us, 0.0);
}

// Every start index whose last sample still lies inside the segment, found by
// stepping one tick at a time and testing the span directly.
std::size_t naive_count(std::size_t n, std::size_t w, double step, std::size_t stride) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % stride != 0) continue;
    bool inside = true;
    for (std::size_t j = 0; j <= w; ++j)
      if (static_cast<double>(i) + static_cast<double>(j) * step > static_cast<double>(n - 1) + 1e-9) inside = false;
    if (inside) ++count;
  }
  return count;
}

TEST(Dataset, WindowCountMatchesNaiveEnumerator) {
  for (std::size_t n : {10u, 68u, 69u, 70u, 500u, 3601u})
    for (std::size_t w : {0u, 1u, 4u, 9u})
      for (double step : {1.0, 7.5, 2.25})
        for (std::size_t stride : {1u, 2u, 5u}) {
          const auto starts = window_starts(n, w, step, stride);
          EXPECT_EQ(starts.size(), naive_count(n, w, step, stride)) << n << ' ' << w << ' ' << step << ' ' << stride;
        }
}

RunTrace driving_trace(double seconds, double rate) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  return synthetic(n, rate, [&](std::size_t i, sim::TraceRow& r) {
    const double t = static_cast<double>(i) / rate;
    r.vx = 2.0 + 0.5 * std::sin(0.7 * t);
    r.r = 1.2 * std::sin(1.3 * t);
    r.delta_cmd = 0.3 * std::sin(1.3 * t + 0.4);
  });
}

TEST(Dataset, TwentyFourSecondsSplitsThreeToOne) {
  const RunTrace tr = driving_trace(24.0, 150.0);
  const DatasetSplit d = extract_dataset(tr);
  EXPECT_NEAR(d.train_seconds, 18.0, 0.6);
  EXPECT_NEAR(d.val_seconds, 6.0, 0.6);
  ASSERT_FALSE(d.train.empty());
  EXPECT_EQ(d.train.front().window.size(), 10u);
  // Samples are T_s apart: the second sample is 7.5 ticks after the first.
  const double expect_v = 0.5 * (tr.rows[7].vx + tr.rows[8].vx);
  EXPECT_NEAR(d.train.front().window.v[1], expect_v, 1e-12);
  EXPECT_NEAR(d.train.front().window.ay[0], tr.rows[0].vx * tr.rows[0].r, 1e-15);
  EXPECT_EQ(d.train.front().delta, tr.rows[0].delta_cmd);
}

TEST(Dataset, ZeroWidthGivesSingleSampleWindows) {
  ExtractOptions opt;
  opt.w = 0;
  const DatasetSplit d = extract_dataset(driving_trace(4.0, 150.0), opt);
  ASSERT_FALSE(d.val.empty());
  for (const auto& s : d.val) EXPECT_EQ(s.window.size(), 1u);
}

TEST(Dataset, WindowsNeverCrossResets) {
  RunTrace tr = driving_trace(8.0, 150.0);
  // Reset at tick 450: time jumps and the speed changes level, so a window
  // mixing both segments would show both levels.
  for (std::size_t i = 0; i < tr.rows.size(); ++i) {
    tr.rows[i].vx = i < 450 ? 1.0 : 3.0;
    if (i >= 450) tr.rows[i].t += 10.0;
  }
  ExtractOptions opt;
  opt.split_ratio = 0.5;
  const DatasetSplit d = extract_dataset(tr, opt);
  std::size_t n = 0;
  for (const auto* part : {&d.train, &d.val})
    for (const auto& s : *part) {
      ++n;
      for (double v : s.window.v) EXPECT_EQ(v, s.window.v.front());
    }
  EXPECT_GT(n, 0u);
}

TEST(Dataset, RejectsShortOrCrashedTraces) {
  EXPECT_THROW(extract_dataset(driving_trace(0.3, 150.0)), Error);
  RunTrace crashed = driving_trace(4.0, 150.0);
  crashed.crashed = true;
  EXPECT_THROW(extract_dataset(crashed), Error);
}

TEST_F(BenchFixture, GridHasOneRowPerCellAndIsDeterministic) {
  AblationSetup s;
  s.track = *track_;
  s.presets = {{"cautious", ggv::cautious(), *line_}};
  s.model = msnn::make_model(msnn::Variant::Extended, 9, 1, 1.0, 3.5, 0.05, 0.33);
  s.model->filters[0][4] = 1.0;  // a plain delayed steady-state map
  s.laps = 1;
  s.seed = 5;
  const auto rows = run_ablation(s, 4);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].cell.controller, control::Tracker::PurePursuit);
  EXPECT_FALSE(rows[0].cell.msnn);
  EXPECT_TRUE(rows[1].cell.fbga);
  EXPECT_TRUE(rows[7].cell.msnn);
  const std::string table = summary_table(rows);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 9);
  EXPECT_NE(table.find("lap_time_s"), std::string::npos);
  EXPECT_NE(table.find("rms_steer_rate_rad_s"), std::string::npos);
  EXPECT_EQ(summary_table(run_ablation(s, 1)), table);
}

TEST_F(BenchFixture, GridWithoutModelIsRejected) {
  AblationSetup s;
  s.track = *track_;
  s.presets = {{"cautious", ggv::cautious(), *line_}};
  EXPECT_THROW(run_ablation(s), Error);
}

TEST_F(BenchFixture, ExpansionDegenerateStepReturnsBase) {
  ExpansionOptions opt;
  opt.step = 5.0;
  opt.laps = 1;
  const auto res = expand_ggv(ggv::cautious(), *track_, sim::StackConfig{}, sim::PlantConfig{}, opt);
  EXPECT_EQ(res.factor, 1.0);
  ASSERT_EQ(res.log.size(), 2u);
  EXPECT_TRUE(res.log[0].feasible);
  EXPECT_FALSE(res.log[1].feasible);
  EXPECT_EQ(ggv::to_json(res.preset), ggv::to_json(ggv::cautious()));
}

TEST_F(BenchFixture, ExpansionStopsAtTheLastFeasibleEnvelope) {
  ExpansionOptions opt;
  opt.step = 0.25;
  opt.laps = 1;
  const auto res = expand_ggv(ggv::cautious(), *track_, sim::StackConfig{}, sim::PlantConfig{}, opt);
  ASSERT_GE(res.log.size(), 2u);
  EXPECT_FALSE(res.log.back().feasible);
  EXPECT_TRUE(res.log[res.log.size() - 2].feasible);
  EXPECT_NEAR(res.log[res.log.size() - 2].factor, res.factor, 1e-12);
  EXPECT_NEAR(res.log.back().factor, res.factor * 1.25, 1e-12);
  EXPECT_TRUE(ggv::dominates(res.preset, ggv::cautious()));
}

TEST_F(BenchFixture, InfeasibleBaseIsRejected) {
  sim::PlantConfig weak;
  weak.steer_range = 0.05;
  ExpansionOptions opt;
  opt.laps = 1;
  EXPECT_THROW(expand_ggv(ggv::cautious(), *track_, sim::StackConfig{}, weak, opt), Error);
}

TEST(Svg, WellFormedDocument) {
  const std::string svg = svg_plot({{"a", {0, 1, 2}, {0, 1, 4}}}, "t", "x", "y");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
}

}  // namespace
}  // namespace racestack::bench
