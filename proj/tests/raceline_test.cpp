#include "racestack/raceline.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "gtest/gtest.h"
#include "racestack/tracks.hpp"

namespace racestack::raceline {
namespace {

using geometry::StadiumLayout;

constexpr double kMargin = 0.3;

// Log-barrier interior-point reference for the offset QP. The Hessian and the
// objective are assembled here from the centerline geometry, independently of
// the library's residual code.
struct QpReference {
  std::vector<double> x;
  double objective;
};

// Linearised curvature of the offset path at sample i, written out directly.
double reference_curvature(const MinCurvatureProblem& p, const std::vector<double>& n, std::size_t i) {
  const std::size_t m = p.size();
  const std::size_t a = (i + m - 1) % m, b = (i + 1) % m;
  const double second = (n[a] - 2.0 * n[i] + n[b]) / (p.h * p.h);
  return p.kappa[i] * (1.0 + p.kappa[i] * n[i]) + second;
}

double reference_objective(const MinCurvatureProblem& p, const std::vector<double>& n) {
  const std::size_t m = p.size();
  double f = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!p.closed && (i == 0 || i + 1 == m)) continue;
    f += p.h * square(reference_curvature(p, n, i));
  }
  return f;
}

std::vector<double> solve_dense(std::vector<std::vector<double>> A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= A[r][k] * x[k];
    x[r] = s / A[r][r];
  }
  return x;
}

QpReference interior_point(const MinCurvatureProblem& p) {
  const std::size_t m = p.size();
  // Row i of the residual is kappa_i + sum_j c_ij n_j with c = (1/h^2,
  // kappa_i^2 - 2/h^2, 1/h^2) on (i-1, i, i+1); the objective is h |row|^2.
  std::vector<std::vector<double>> H(m, std::vector<double>(m, 0.0));
  std::vector<double> lin(m, 0.0);
  const double ih2 = 1.0 / (p.h * p.h);
  for (std::size_t i = 0; i < m; ++i) {
    if (!p.closed && (i == 0 || i + 1 == m)) continue;
    const std::size_t idx[3] = {(i + m - 1) % m, i, (i + 1) % m};
    const double w[3] = {ih2, p.kappa[i] * p.kappa[i] - 2.0 * ih2, ih2};
    for (int u = 0; u < 3; ++u) {
      lin[idx[u]] += 2.0 * p.h * w[u] * p.kappa[i];
      for (int q = 0; q < 3; ++q) H[idx[u]][idx[q]] += 2.0 * p.h * w[u] * w[q];
    }
  }
  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = 0.5 * (p.lo[i] + p.hi[i]);
  for (double t = 1.0; t < 1e11; t *= 4.0) {
    for (int newton = 0; newton < 60; ++newton) {
      std::vector<std::vector<double>> K(H);
      std::vector<double> g(m);
      for (std::size_t j = 0; j < m; ++j) {
        double hx = 0.0;
        for (std::size_t k = 0; k < m; ++k) hx += H[j][k] * x[k];
        const double a = p.hi[j] - x[j], b = x[j] - p.lo[j];
        g[j] = -(t * (hx + lin[j]) + 1.0 / a - 1.0 / b);
        for (std::size_t k = 0; k < m; ++k) K[j][k] *= t;
        K[j][j] += 1.0 / (a * a) + 1.0 / (b * b);
      }
      const std::vector<double> dx = solve_dense(K, g);
      double step = 1.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (dx[j] > 0.0) step = std::min(step, 0.99 * (p.hi[j] - x[j]) / dx[j]);
        if (dx[j] < 0.0) step = std::min(step, 0.99 * (p.lo[j] - x[j]) / dx[j]);
      }
      double dec = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        x[j] += step * dx[j];
        dec += -g[j] * dx[j];
      }
      if (std::abs(dec) < 1e-12) break;
    }
  }
  return {x, reference_objective(p, x)};
}

geometry::TrackDefinition random_stadium(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> straight(3.0, 6.0), radius(1.4, 2.5), width(1.5, 2.2),
      swing(0.0, 0.2), bump(0.0, 0.4);
  StadiumLayout lay;
  lay.straight = straight(rng);
  lay.radius = radius(rng);
  lay.width_mean = width(rng);
  lay.width_swing = swing(rng);
  lay.bump_height = bump(rng);
  auto track = geometry::make_stadium_track(lay);
  try {
    for (double ds : {0.02, 0.05, 0.25}) geometry::resample_corridor(track, ds);
  } catch (const TrackError&) {
    return random_stadium(rng);  // folded corridor, draw again
  }
  return track;
}

TEST(MinCurvaturePath, StraightCorridorKeepsCenterline) {
  geometry::TrackDefinition t;
  for (int i = 0; i < 30; ++i) t.samples.push_back({0.2 * i, 0.0, 0.8, 0.8});
  const auto prob = make_min_curvature_problem(t, kMargin, 0.25);
  const auto sol = solve_min_curvature(prob);
  for (double n : sol.offsets) EXPECT_NEAR(n, 0.0, 1e-12);
  const Path p = min_curvature_path(t, kMargin);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p.y[i], 0.0, 1e-9);
}

TEST(MinCurvaturePath, RingHugsConstantRadiusWithLowerCurvature) {
  geometry::TrackDefinition t;
  t.closed = true;
  for (int i = 0; i < 120; ++i) {
    const double a = kTwoPi * i / 120.0;
    t.samples.push_back({3.0 * std::cos(a), 3.0 * std::sin(a), 0.5, 0.5});
  }
  const Path p = min_curvature_path(t, 0.1);
  double rmin = 1e9, rmax = 0.0, kmax = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = std::hypot(p.x[i], p.y[i]);
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
    kmax = std::max(kmax, std::abs(p.rho[i]));
  }
  EXPECT_LT(rmax - rmin, 0.01);
  EXPECT_LT(kmax, 1.0 / 3.0);
  EXPECT_NEAR(rmin, 3.4, 0.01);  // pushed against the outer bound
}

TEST(MinCurvaturePath, ObjectiveMatchesInteriorPointReference) {
  const auto track = geometry::make_track_a();
  MinCurvatureOptions opt;
  opt.coarse_ds = 0.1;
  const auto prob = make_min_curvature_problem(track, kMargin, opt.coarse_ds);
  const auto sol = solve_min_curvature(prob, opt);
  const QpReference ref = interior_point(prob);
  for (std::size_t i = 0; i < prob.size(); ++i) {
    ASSERT_GE(sol.offsets[i], prob.lo[i]);
    ASSERT_LE(sol.offsets[i], prob.hi[i]);
  }
  const double ours = reference_objective(prob, sol.offsets);
  EXPECT_NEAR(ours, sol.objective, 1e-12 * (1.0 + ours));
  EXPECT_LT(std::abs(ours - ref.objective) / ref.objective, 0.01)
      << "projected gradient " << ours << " interior point " << ref.objective;
}

TEST(MinCurvaturePath, RejectsMarginWiderThanCorridor) {
  auto track = geometry::make_track_a();
  track.samples[17].w_right = 0.25;
  try {
    min_curvature_path(track, kMargin);
    FAIL() << "expected TrackError";
  } catch (const TrackError& e) {
    EXPECT_EQ(e.sample_index(), 17u);
  }
}

TEST(ProfileRaceline, CircleRunsAtSteadyCorneringSpeed) {
  geometry::TrackDefinition t;
  t.closed = true;
  for (int i = 0; i < 100; ++i) {
    const double a = kTwoPi * i / 100.0;
    t.samples.push_back({2.0 * std::cos(a), 2.0 * std::sin(a), 0.5, 0.5});
  }
  const Path p = geometry::resample_track(t, 0.05);
  const Raceline r = profile_raceline(p, ggv::cautious());
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_NEAR(r.v[i], std::sqrt(3.0 / std::abs(p.rho[i])), 2e-3);
    EXPECT_NEAR(r.ax[i], 0.0, 0.05);
  }
}

TEST(ProfileRaceline, LongStraightsReachTopSpeedAtEnvelopeBound) {
  StadiumLayout lay;
  lay.straight = 30.0;
  lay.radius = 3.0;
  lay.width_swing = 0.0;
  ggv::GgvDiagram g = ggv::cautious();
  g.knots[0].ax_acc_max = 3.0;
  g.knots[0].ax_dec_max = 3.0;
  const Path p = geometry::resample_track(geometry::make_stadium_track(lay), 0.05);
  const Raceline r = profile_raceline(p, g);
  double vmax = 0.0;
  bool saw_acc = false, saw_dec = false;
  for (std::size_t i = 0; i < r.size(); ++i) {
    vmax = std::max(vmax, r.v[i]);
    if (std::abs(p.rho[i]) < 1e-6 && r.v[i] < g.v_max - 0.1) {
      // Straight-line transitions run on the longitudinal bound.
      const double bound = r.ax[i] > 0.0 ? 3.0 : -3.0;
      if (std::abs(r.ax[i]) > 0.1) {
        EXPECT_NEAR(r.ax[i], bound, 0.05) << i;
        (r.ax[i] > 0.0 ? saw_acc : saw_dec) = true;
      }
    }
  }
  EXPECT_NEAR(vmax, g.v_max, 1e-9);
  EXPECT_TRUE(saw_acc);
  EXPECT_TRUE(saw_dec);
}

TEST(ProfileRaceline, LapTimeMatchesDynamicProgramming) {
  const Path p = min_curvature_path(geometry::make_track_a(), kMargin);
  const Raceline r = profile_raceline(p, ggv::cautious());
  std::vector<double> rho(p.rho);
  rho.push_back(p.rho.front());
  const double ds = p.length / static_cast<double>(p.size());
  const double dp = velocity::dp_speed_oracle(rho, ds, r.v.front(), ggv::cautious(), 300, r.v.front());
  EXPECT_LT(std::abs(lap_time(r) - dp) / dp, 0.02) << lap_time(r) << " vs " << dp;
}

TEST(ProfileRaceline, InvariantsOnRandomTracks) {
  std::mt19937_64 rng(5);
  const ggv::GgvDiagram g = ggv::cautious();
  for (int k = 0; k < 8; ++k) {
    const auto track = random_stadium(rng);
    const Raceline r = generate_raceline(track, g, kMargin);
    const geometry::Corridor c = geometry::resample_corridor(track, 0.02);
    const std::size_t n = r.size();
    // The stored lap closes on itself: the last cell ends at the first sample.
    EXPECT_NEAR(r.v[n - 1] * r.v[n - 1] + 2.0 * r.ax[n - 1] * r.ds(), r.v[0] * r.v[0], 2e-3);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(r.ay[i], r.v[i] * r.v[i] * r.path.rho[i], 1e-3);
      EXPECT_TRUE(ggv::contains(g, r.v[i], r.ax[i], r.ay[i], 1e-6)) << "track " << k << " i " << i;
      const auto pr = geometry::project_to_path(c.center, r.path.x[i], r.path.y[i]);
      const double wl = geometry::value_at(c.center, c.w_left, pr.s_star);
      const double wr = geometry::value_at(c.center, c.w_right, pr.s_star);
      EXPECT_LE(pr.lateral_error, wl - 0.15);
      EXPECT_GE(pr.lateral_error, -(wr - 0.15));
    }
  }
}

TEST(ProfileRaceline, LargerEnvelopeNeverSlower) {
  const Path p = min_curvature_path(geometry::make_track_b(), kMargin);
  const double base = lap_time(profile_raceline(p, ggv::cautious()));
  const double big = lap_time(profile_raceline(p, ggv::scaled(ggv::cautious(), 1.2)));
  EXPECT_LE(big, base);
  EXPECT_THROW(profile_raceline(geometry::resample_track(
                                    [] {
                                      geometry::TrackDefinition t;
                                      for (int i = 0; i < 20; ++i) t.samples.push_back({0.1 * i, 0, 1, 1});
                                      return t;
                                    }(),
                                    0.05),
                                ggv::cautious()),
               Error);
}

TEST(RacelineFile, BitExactRoundTrip) {
  const Raceline r = generate_raceline(geometry::make_track_a(), ggv::cautious(), kMargin);
  std::stringstream ss;
  write_raceline(ss, r);
  const Raceline back = parse_raceline(ss);
  ASSERT_EQ(back.size(), r.size());
  EXPECT_EQ(back.path.length, r.path.length);
  EXPECT_TRUE(back.path.closed);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(back.path.s[i], r.path.s[i]);
    EXPECT_EQ(back.path.x[i], r.path.x[i]);
    EXPECT_EQ(back.path.psi[i], r.path.psi[i]);
    EXPECT_EQ(back.path.rho[i], r.path.rho[i]);
    EXPECT_EQ(back.v[i], r.v[i]);
    EXPECT_EQ(back.ax[i], r.ax[i]);
    EXPECT_EQ(back.ay[i], r.ay[i]);
  }
  std::stringstream bad("s,x,y\n0,0,0\n");
  EXPECT_THROW(parse_raceline(bad), Error);
}

}  // namespace
}  // namespace racestack::raceline
