#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "racestack/common.hpp"
#include "racestack/geometry.hpp"
#include "racestack/spiral.hpp"

namespace racestack::control {

using geometry::Path;
using geometry::PoseCurv;
using geometry::Projection;

/// Piecewise-linear look-ahead distance as a function of speed, held constant
/// outside the knot range.
struct LookaheadSchedule {
  std::vector<double> v_knots{1.0, 4.0};
  std::vector<double> ld_knots{0.8, 1.4};

  void validate() const {
    if (v_knots.empty() || v_knots.size() != ld_knots.size())
      throw Error("control", "look-ahead schedule needs matching, non-empty knot lists");
    for (std::size_t i = 0; i < v_knots.size(); ++i) {
      if (!(ld_knots[i] > 0.0)) throw Error("control", "look-ahead distances must be positive");
      if (i > 0 && !(v_knots[i] > v_knots[i - 1]))
        throw Error("control", "look-ahead speed knots must be strictly increasing");
      if (i > 0 && ld_knots[i] < ld_knots[i - 1])
        throw Error("control", "look-ahead distance must be non-decreasing in speed");
    }
  }

  double at(double v) const { return interp_clamped(v_knots, ld_knots, v); }

  static LookaheadSchedule pure_pursuit() { return {{1.0, 4.0}, {0.8, 1.4}}; }
  static LookaheadSchedule clothoid() { return {{1.0, 4.0}, {1.0, 1.4}}; }
};

enum class Tracker { PurePursuit, Clothoid };

inline std::string to_string(Tracker t) { return t == Tracker::PurePursuit ? "PP" : "CL"; }

inline Tracker tracker_from_string(std::string_view s) {
  if (s == "PP" || s == "pp" || s == "pure_pursuit") return Tracker::PurePursuit;
  if (s == "CL" || s == "cl" || s == "clothoid") return Tracker::Clothoid;
  throw Error("config", "unknown controller '" + std::string(s) + "' (expected PP or CL)");
}

/// Curvature samples on a uniform arc-length grid starting at the vehicle.
struct CurvatureReference {
  std::vector<double> rho;
  double ds = 0.0;
  Tracker source = Tracker::PurePursuit;
  bool fallback = false;  // CL requested but PP used this tick
  double lookahead = 0.0;
  double lead_length = 0.0;  // arc length of the PP arc or the spiral

  /// Linear interpolation at arc length s, held beyond the last sample.
  double at(double s) const {
    if (rho.empty()) return 0.0;
    const double k = s / ds;
    if (k <= 0.0) return rho.front();
    const auto i = static_cast<std::size_t>(k);
    if (i + 1 >= rho.size()) return rho.back();
    const double f = k - static_cast<double>(i);
    return rho[i] + f * (rho[i + 1] - rho[i]);
  }
};

/// Curvature of the circular arc that leaves the vehicle along its heading and
/// reaches a point at distance ld seen under angle lambda.
inline double pure_pursuit_arc_curvature(double lambda, double ld) { return 2.0 * std::sin(lambda) / ld; }

/// Steering angle of a kinematic bicycle following curvature rho, clamped to
/// the actuator range.
inline double kinematic_steering(double rho, double wheelbase,
                                 double range = std::numeric_limits<double>::infinity()) {
  if (!(wheelbase > 0.0)) throw Error("control", "wheelbase must be positive");
  return clamp(std::atan(rho * wheelbase), -range, range);
}

namespace detail {

inline std::size_t horizon_samples(double horizon, double ds) {
  if (!(ds > 0.0)) throw Error("control", "reference grid step must be positive");
  return static_cast<std::size_t>(std::floor(std::max(horizon, 0.0) / ds + 1e-9)) + 1;
}

}  // namespace detail

/// Pure Pursuit: the look-ahead point sits ld(v) ahead of the projection along
/// the path. The constant arc curvature covers the arc to that point; beyond
/// it the path's own curvature fills the horizon.
inline CurvatureReference pure_pursuit_curvature(const PoseCurv& pose, double v, const Path& path,
                                                 const LookaheadSchedule& sched, const Projection& proj,
                                                 double horizon, double ds) {
  const double ld = sched.at(std::max(v, 0.0));
  const double s_target = proj.s_star + ld;
  const PoseCurv target = geometry::pose_at(path, s_target);
  const double dx = target.x - pose.x, dy = target.y - pose.y;
  const double c = std::cos(pose.psi), s = std::sin(pose.psi);
  const double xl = c * dx + s * dy;
  const double yl = -s * dx + c * dy;
  const double chord = std::hypot(xl, yl);
  CurvatureReference ref;
  ref.ds = ds;
  ref.source = Tracker::PurePursuit;
  ref.lookahead = ld;
  const std::size_t n = detail::horizon_samples(horizon, ds);
  ref.rho.resize(n);
  if (chord < 1e-9) {
    for (std::size_t k = 0; k < n; ++k) ref.rho[k] = geometry::curvature_at(path, s_target + ds * k);
    return ref;
  }
  const double lambda = std::atan2(yl, xl);
  const double rho = pure_pursuit_arc_curvature(lambda, chord);
  // Arc length of the circular arc subtending the chord.
  const double arc = std::abs(lambda) < 1e-9 ? chord : 2.0 * lambda / rho;
  ref.lead_length = arc;
  for (std::size_t k = 0; k < n; ++k) {
    const double sk = ds * static_cast<double>(k);
    ref.rho[k] = sk <= arc ? rho : geometry::curvature_at(path, s_target + (sk - arc));
  }
  return ref;
}

inline CurvatureReference pure_pursuit_curvature(const PoseCurv& pose, double v, const Path& path,
                                                 const LookaheadSchedule& sched, double horizon, double ds) {
  return pure_pursuit_curvature(pose, v, path, sched, geometry::project_to_path(path, pose.x, pose.y), horizon,
                                ds);
}

/// Clothoid-based tracking: a G2 polynomial spiral from the current pose and
/// curvature (pose.rho) to the path point ld(v) ahead. Falls back to
/// Pure Pursuit when the fit fails.
inline CurvatureReference clothoid_curvature(const PoseCurv& pose, double v, const Path& path,
                                             const LookaheadSchedule& sched, const Projection& proj,
                                             double horizon, double ds,
                                             const geometry::SpiralOptions& opt = {}) {
  const double ld = sched.at(std::max(v, 0.0));
  const double s_target = proj.s_star + ld;
  PoseCurv target = geometry::pose_at(path, s_target);
  target.psi = pose.psi + wrap_angle(target.psi - pose.psi);
  try {
    const geometry::SpiralFit fit = geometry::fit_g2_spiral(pose, target, opt);
    if (fit.converged) {
      CurvatureReference ref;
      ref.ds = ds;
      ref.source = Tracker::Clothoid;
      ref.lookahead = ld;
      ref.lead_length = fit.spiral.length;
      ref.rho = geometry::spiral_curvature_profile(
          fit.spiral, ds * static_cast<double>(detail::horizon_samples(horizon, ds) - 1), ds,
          [&](double past) { return geometry::curvature_at(path, s_target + past); });
      return ref;
    }
  } catch (const Error&) {
    // Degenerate boundary data; handled by the fallback below.
  }
  CurvatureReference ref = pure_pursuit_curvature(pose, v, path, sched, proj, horizon, ds);
  ref.fallback = true;
  return ref;
}

inline CurvatureReference clothoid_curvature(const PoseCurv& pose, double v, const Path& path,
                                             const LookaheadSchedule& sched, double horizon, double ds) {
  return clothoid_curvature(pose, v, path, sched, geometry::project_to_path(path, pose.x, pose.y), horizon,
                            ds);
}

/// Where the clothoid takes its start curvature from.
enum class StartCurvature {
  Measured,   // yaw rate over speed, as estimated from the vehicle state
  Commanded,  // the previous tick's commanded path curvature
};

/// Per-run tracking state: the selected law, the clothoid start curvature and
/// the fallback counter.
class PathTracker {
 public:
  PathTracker(Tracker kind, LookaheadSchedule sched) : kind_(kind), sched_(std::move(sched)) {
    sched_.validate();
  }

  CurvatureReference reference(double x, double y, double psi, double v, const Path& path,
                               const Projection& proj, double horizon, double ds) {
    ++ticks_;
    if (kind_ == Tracker::PurePursuit)
      return pure_pursuit_curvature({x, y, psi, 0.0}, v, path, sched_, proj, horizon, ds);
    CurvatureReference ref = clothoid_curvature({x, y, psi, last_rho_}, v, path, sched_, proj, horizon, ds);
    if (ref.fallback) ++fallbacks_;
    return ref;
  }

  /// Sets the curvature the next clothoid starts from.
  void set_start_curvature(double rho) { last_rho_ = rho; }

  Tracker kind() const { return kind_; }
  const LookaheadSchedule& schedule() const { return sched_; }
  std::size_t fallbacks() const { return fallbacks_; }
  std::size_t ticks() const { return ticks_; }

 private:
  Tracker kind_;
  LookaheadSchedule sched_;
  double last_rho_ = 0.0;
  std::size_t fallbacks_ = 0;
  std::size_t ticks_ = 0;
};

}  // namespace racestack::control
