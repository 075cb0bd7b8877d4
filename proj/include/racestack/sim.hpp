#pragma once

#include <time.h>

#include <cmath>
#include <deque>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "racestack/common.hpp"
#include "racestack/control.hpp"
#include "racestack/geometry.hpp"
#include "racestack/ggv.hpp"
#include "racestack/msnn.hpp"
#include "racestack/raceline.hpp"
#include "racestack/velocity.hpp"

namespace racestack::sim {

using raceline::Raceline;

/// Dynamic bicycle with linear tires, a steering actuator (pure delay then
/// first-order lag) and a first-order speed loop standing in for the motor
/// controller. Defaults are assumed values for a 1:10 scale car.
struct PlantConfig {
  double wheelbase = 0.33;
  double front_share = 0.5;       // distance CG -> front axle as a share of the wheelbase
  double mass = 3.5;              // kg
  double yaw_inertia = 0.05;      // kg m^2
  double cf = 60.0;               // front cornering stiffness, N/rad
  double cr = 120.0;              // rear cornering stiffness, N/rad
  double steer_lag = 0.05;        // s
  double steer_delay = 0.15;      // s
  double steer_range = 0.36;      // rad
  double speed_lag = 0.25;        // s
  double accel_cap = 8.0;         // m/s^2, above every envelope
  double decel_cap = 10.0;        // m/s^2
  double slip_speed_floor = 0.5;  // m/s, keeps slip angles finite near standstill
  double tick_rate = 150.0;       // Hz
  int substeps = 10;

  double lf() const { return front_share * wheelbase; }
  double lr() const { return (1.0 - front_share) * wheelbase; }
  double substep() const { return 1.0 / (tick_rate * substeps); }
  double tick() const { return 1.0 / tick_rate; }
  std::size_t delay_substeps() const {
    return static_cast<std::size_t>(std::llround(steer_delay / substep()));
  }
  /// Understeer gradient: steady-state steering beyond the kinematic value per
  /// unit lateral acceleration, rad/(m/s^2).
  double understeer_gradient() const { return mass / wheelbase * (lr() / cf - lf() / cr); }
  /// Delay seen by a steering command: pure delay plus the lag time constant.
  double effective_delay() const { return steer_delay + steer_lag; }

  void validate() const {
    for (double v : {wheelbase, mass, yaw_inertia, cf, cr, steer_lag, steer_range, speed_lag, accel_cap, decel_cap,
                     slip_speed_floor, tick_rate})
      if (!(v > 0.0) || !std::isfinite(v)) throw Error("plant", "plant parameters must be positive and finite");
    if (!(front_share > 0.0 && front_share < 1.0)) throw Error("plant", "front_share must lie in (0, 1)");
    if (substeps < 1) throw Error("plant", "substeps must be at least 1");
    if (!(steer_delay >= 0.0)) throw Error("plant", "steering delay must be non-negative");
    const double k = steer_delay / substep();
    if (std::abs(k - std::round(k)) > 1e-6)
      throw Error("plant", "steering delay must be a whole number of integrator substeps");
  }
};

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double r = 0.0;
  double delta_act = 0.0;
};

namespace detail {

struct Deriv {
  double x, y, psi, vx, vy, r, delta;
};

inline Deriv plant_rhs(const VehicleState& s, double delta_in, double v_cmd, const PlantConfig& c) {
  const double u = std::max(s.vx, c.slip_speed_floor);
  const double alpha_f = s.delta_act - std::atan((s.vy + c.lf() * s.r) / u);
  const double alpha_r = -std::atan((s.vy - c.lr() * s.r) / u);
  const double fyf = c.cf * alpha_f;
  const double fyr = c.cr * alpha_r;
  const double cd = std::cos(s.delta_act);
  Deriv d;
  d.x = s.vx * std::cos(s.psi) - s.vy * std::sin(s.psi);
  d.y = s.vx * std::sin(s.psi) + s.vy * std::cos(s.psi);
  d.psi = s.r;
  d.vx = clamp((v_cmd - s.vx) / c.speed_lag, -c.decel_cap, c.accel_cap);
  d.vy = (fyf * cd + fyr) / c.mass - s.r * s.vx;
  d.r = (c.lf() * fyf * cd - c.lr() * fyr) / c.yaw_inertia;
  d.delta = (delta_in - s.delta_act) / c.steer_lag;
  return d;
}

inline VehicleState advance(const VehicleState& s, const Deriv& d, double h) {
  return {s.x + h * d.x, s.y + h * d.y, s.psi + h * d.psi, s.vx + h * d.vx,
          s.vy + h * d.vy, s.r + h * d.r, s.delta_act + h * d.delta};
}

}  // namespace detail

/// One RK4 step of length dt. `delta_in` is the input of the steering lag, that
/// is the command after the pure delay; the Plant class owns the delay line.
inline VehicleState step_plant(const VehicleState& s, double delta_in, double v_cmd, const PlantConfig& c,
                               double dt) {
  if (!std::isfinite(delta_in) || !std::isfinite(v_cmd) || !(dt > 0.0))
    throw Error("plant", "non-finite plant input");
  using detail::advance;
  const auto k1 = detail::plant_rhs(s, delta_in, v_cmd, c);
  const auto k2 = detail::plant_rhs(advance(s, k1, dt / 2), delta_in, v_cmd, c);
  const auto k3 = detail::plant_rhs(advance(s, k2, dt / 2), delta_in, v_cmd, c);
  const auto k4 = detail::plant_rhs(advance(s, k3, dt), delta_in, v_cmd, c);
  VehicleState n = s;
  n.x += dt / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
  n.y += dt / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
  n.psi += dt / 6 * (k1.psi + 2 * k2.psi + 2 * k3.psi + k4.psi);
  n.vx += dt / 6 * (k1.vx + 2 * k2.vx + 2 * k3.vx + k4.vx);
  n.vy += dt / 6 * (k1.vy + 2 * k2.vy + 2 * k3.vy + k4.vy);
  n.r += dt / 6 * (k1.r + 2 * k2.r + 2 * k3.r + k4.r);
  n.delta_act += dt / 6 * (k1.delta + 2 * k2.delta + 2 * k3.delta + k4.delta);
  n.vx = std::max(n.vx, 0.0);
  n.psi = wrap_angle(n.psi);
  return n;
}

/// Plant with its steering delay line. Commands are held over one tick.
class Plant {
 public:
  explicit Plant(PlantConfig cfg, VehicleState init = {}) : cfg_(std::move(cfg)), state_(init) {
    cfg_.validate();
    delay_.assign(cfg_.delay_substeps(), init.delta_act);
  }

  /// Applies a steering and speed command for one control tick.
  void tick(double delta_cmd, double v_cmd) {
    if (!std::isfinite(delta_cmd) || !std::isfinite(v_cmd)) throw Error("plant", "non-finite command");
    delta_cmd = clamp(delta_cmd, -cfg_.steer_range, cfg_.steer_range);
    const double h = cfg_.substep();
    for (int k = 0; k < cfg_.substeps; ++k) {
      double delayed = delta_cmd;
      if (!delay_.empty()) {
        delayed = delay_.front();
        delay_.pop_front();
        delay_.push_back(delta_cmd);
      }
      state_ = step_plant(state_, delayed, v_cmd, cfg_, h);
    }
  }

  const VehicleState& state() const { return state_; }
  const PlantConfig& config() const { return cfg_; }

 private:
  PlantConfig cfg_;
  VehicleState state_;
  std::deque<double> delay_;
};

// ---- closed loop ------------------------------------------------------------

/// Everything above the plant: tracker, steering law, speed source.
struct StackConfig {
  control::Tracker controller = control::Tracker::PurePursuit;
  std::optional<msnn::MsnnModel> msnn;  // steering from the MS-NN instead of atan(rho L)
  bool fbga = false;                    // online speed replanning
  ggv::GgvDiagram ggv = ggv::cautious();
  // Look-ahead schedules per tracker, with separate ones for MS-NN steering:
  // the MS-NN removes the understeer lag of the kinematic law, which raises the
  // loop gain and calls for a longer look-ahead.
  control::LookaheadSchedule pp_schedule{{1.0, 4.0}, {0.9, 1.2}};
  control::LookaheadSchedule cl_schedule{{1.0, 4.0}, {0.8, 1.7}};
  control::LookaheadSchedule pp_msnn_schedule{{1.0, 4.0}, {1.8, 1.8}};
  control::LookaheadSchedule cl_msnn_schedule{{1.0, 4.0}, {0.9, 2.2}};
  control::StartCurvature cl_start = control::StartCurvature::Measured;
  // Without the MS-NN, the kinematic law steers for the reference curvature this
  // far ahead in time, which offsets the actuator delay.
  double steer_preview = 0.18;    // s
  double reference_ds = 0.05;     // grid of the curvature reference and the speed plan, m
  double planner_horizon = 4.0;   // m
  double footprint_radius = 0.15; // m
  double pose_noise = 0.0;        // std of the position seen by the stack, m (heading uses noise/1 m)
  double time_limit = 0.0;        // s, 0 picks a limit from the raceline lap time

  const control::LookaheadSchedule& schedule() const {
    if (controller == control::Tracker::PurePursuit) return msnn ? pp_msnn_schedule : pp_schedule;
    return msnn ? cl_msnn_schedule : cl_schedule;
  }
};

struct TraceRow {
  double t = 0, x = 0, y = 0, psi = 0, vx = 0, vy = 0, r = 0;
  double delta_cmd = 0, delta_act = 0, v_cmd = 0, rho_ref = 0, lat_err = 0, s_proj = 0;
  double cpu_us_controller = 0, cpu_us_planner = 0, cpu_us_msnn = 0;
};

inline constexpr const char* kTraceHeader =
    "t,x,y,psi,vx,vy,r,delta_cmd,delta_act,v_cmd,rho_ref,lat_err,s_proj,cpu_us_controller,cpu_us_planner,"
    "cpu_us_msnn";

struct RunTrace {
  std::vector<TraceRow> rows;
  double tick_rate = 150.0;
  double path_length = 0.0;  // raceline length, for lap bookkeeping
  bool crashed = false;
  double crash_x = 0.0, crash_y = 0.0;
  std::size_t crash_tick = 0;
  bool timed_out = false;
  std::vector<double> lap_times;
  std::size_t fallbacks = 0;  // clothoid ticks that used Pure Pursuit
  // Largest gap between the measured speed and the speed the stack aimed for
  // at that point: the raceline profile, or the previous tick's replan.
  double max_speed_error = 0.0;

  bool completed(std::size_t laps) const { return !crashed && !timed_out && lap_times.size() >= laps; }
};

namespace detail {

// Position, speed and acceleration along the planned arc after time t, found
// by marching along a profile v(s) that starts at the vehicle.
struct ProfileClock {
  std::vector<double> v, ax;  // per grid sample
  double ds = 0.0;

  double speed(double s) const { return sample(v, s); }
  double accel(double s) const { return sample(ax, s); }
  double sample(const std::vector<double>& f, double s) const {
    const double k = s / ds;
    if (k <= 0.0) return f.front();
    const auto i = static_cast<std::size_t>(k);
    if (i + 1 >= f.size()) return f.back();
    const double w = k - static_cast<double>(i);
    return f[i] + w * (f[i + 1] - f[i]);
  }
  /// Arc lengths reached at times j*T for j = 0..w.
  std::vector<double> positions(std::size_t count, double period) const {
    std::vector<double> out(count, 0.0);
    const int sub = 8;
    double s = 0.0;
    for (std::size_t j = 1; j < count; ++j) {
      const double h = period / sub;
      for (int k = 0; k < sub; ++k) {
        // Midpoint rule on ds/dt = v(s).
        const double mid = s + 0.5 * h * std::max(speed(s), 0.0);
        s += h * std::max(speed(mid), 0.0);
      }
      out[j] = s;
    }
    return out;
  }
};

// CPU time of the calling thread, so that runs sharing a core with other grid
// cells are not charged for time spent descheduled.
inline double thread_cpu_us() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) * 1e6 + static_cast<double>(ts.tv_nsec) * 1e-3;
}

inline double micros_since(double t0) {
  return thread_cpu_us() - t0;
}

}  // namespace detail

/// Runs the stack against the plant from a flying start on the raceline
/// (start pose at s = 0 and raceline speed) until `laps` laps are completed, the
/// footprint leaves the corridor, or the time limit passes.
inline RunTrace run_closed_loop(const Raceline& rl, const geometry::TrackDefinition& track, const StackConfig& stack,
                                const PlantConfig& plant_cfg, std::size_t laps, std::uint64_t seed) {
  RunTrace trace;
  trace.tick_rate = plant_cfg.tick_rate;
  trace.path_length = rl.path.length;
  if (laps == 0) return trace;
  if (rl.size() < 3 || !rl.path.closed) throw Error("sim", "closed-loop runs need a closed raceline");
  plant_cfg.validate();
  ggv::validate(stack.ggv);
  if (stack.msnn) stack.msnn->validate();

  const geometry::Corridor corridor = geometry::resample_corridor(track, 0.05);
  const auto& path = rl.path;
  const double L = path.length;

  VehicleState init;
  init.x = path.x[0];
  init.y = path.y[0];
  init.psi = path.psi[0];
  init.vx = rl.v[0];
  init.delta_act = control::kinematic_steering(path.rho[0], plant_cfg.wheelbase, plant_cfg.steer_range);
  Plant plant(plant_cfg, init);

  control::PathTracker tracker(stack.controller, stack.schedule());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double dt = plant_cfg.tick();
  const double limit = stack.time_limit > 0.0 ? stack.time_limit
                                              : 5.0 + 3.0 * static_cast<double>(laps) * raceline::lap_time(rl);
  const double ds = stack.reference_ds;
  const std::size_t window = stack.msnn ? stack.msnn->width() : 1;
  const double period = stack.msnn ? stack.msnn->period : dt;

  double s_hint = 0.0, c_hint = 0.0;
  double progress = 0.0, last_lap_t = 0.0;
  double prev_s = 0.0;
  detail::ProfileClock prev_plan;
  double prev_speed = 0.0;
  const auto steps = static_cast<std::size_t>(std::ceil(limit / dt));

  for (std::size_t tick = 0; tick <= steps; ++tick) {
    const VehicleState& st = plant.state();
    const double t = static_cast<double>(tick) * dt;
    TraceRow row;
    row.t = t;
    row.x = st.x;
    row.y = st.y;
    row.psi = st.psi;
    row.vx = st.vx;
    row.vy = st.vy;
    row.r = st.r;
    row.delta_act = st.delta_act;

    // Footprint against the corridor.
    const auto cp = geometry::project_near(corridor.center, st.x, st.y, c_hint, 1.0);
    c_hint = cp.s_star;
    const double wl = geometry::value_at(corridor.center, corridor.w_left, cp.s_star);
    const double wr = geometry::value_at(corridor.center, corridor.w_right, cp.s_star);
    if (cp.lateral_error + stack.footprint_radius > wl || -cp.lateral_error + stack.footprint_radius > wr) {
      trace.crashed = true;
      trace.crash_x = st.x;
      trace.crash_y = st.y;
      trace.crash_tick = tick;
    }

    // What the stack sees.
    double mx = st.x, my = st.y, mpsi = st.psi;
    if (stack.pose_noise > 0.0) {
      mx += stack.pose_noise * noise(rng);
      my += stack.pose_noise * noise(rng);
      mpsi += stack.pose_noise * noise(rng);
    }

    double t0 = detail::thread_cpu_us();
    const auto proj = geometry::project_near(path, mx, my, s_hint, 1.0);
    s_hint = proj.s_star;
    const double v_now = std::max(st.vx, 0.0);
    const double ctrl_horizon = std::max(1.0, static_cast<double>(window) * period * std::max(v_now, 1.0) + 0.5);
    const double horizon = stack.fbga ? std::max(stack.planner_horizon, ctrl_horizon) : ctrl_horizon;
    if (stack.cl_start == control::StartCurvature::Measured)
      tracker.set_start_curvature(st.r / std::max(st.vx, plant_cfg.slip_speed_floor));
    const control::CurvatureReference ref = tracker.reference(mx, my, mpsi, v_now, path, proj, horizon, ds);
    row.cpu_us_controller = detail::micros_since(t0);

    // Speed profile along the reference.
    t0 = detail::thread_cpu_us();
    detail::ProfileClock clock;
    clock.ds = ds;
    if (stack.fbga) {
      const double cap = geometry::value_at(path, rl.v, proj.s_star + ref.ds * static_cast<double>(ref.rho.size() - 1));
      const auto plan = velocity::plan_speed(ref.rho, ds, v_now, stack.ggv, cap);
      clock.v = plan.v;
      clock.ax = plan.ax;
    } else {
      clock.v.resize(ref.rho.size());
      clock.ax.resize(ref.rho.size());
      for (std::size_t k = 0; k < ref.rho.size(); ++k) {
        const double sk = proj.s_star + ds * static_cast<double>(k);
        clock.v[k] = geometry::value_at(path, rl.v, sk);
        clock.ax[k] = geometry::value_at(path, rl.ax, sk);
      }
    }
    // With replanning the plan starts at the measured speed, so the lagging
    // speed loop gets the planned acceleration as feed-forward. Without it the
    // raceline speed is sent as is.
    row.v_cmd = stack.fbga ? clock.v[0] + plant_cfg.speed_lag * clock.ax[0] : clock.v[0];
    row.cpu_us_planner = detail::micros_since(t0);
    if (!stack.fbga) {
      trace.max_speed_error =
          std::max(trace.max_speed_error, std::abs(v_now - geometry::value_at(path, rl.v, proj.s_star)));
    } else if (tick > 0) {
      trace.max_speed_error = std::max(trace.max_speed_error, std::abs(v_now - prev_plan.speed(prev_speed * dt)));
    }
    prev_plan = clock;
    prev_speed = v_now;

    row.rho_ref = ref.at(v_now * stack.steer_preview);
    if (stack.msnn) {
      t0 = detail::thread_cpu_us();
      const auto& m = *stack.msnn;
      const auto pos = clock.positions(m.width(), m.period);
      msnn::ReferenceWindow win;
      for (double sj : pos) {
        const double rho = ref.at(sj);
        const double v = clock.speed(sj);
        win.rho.push_back(rho);
        win.v.push_back(v);
        win.ay.push_back(v * v * rho);
        win.ax.push_back(clock.accel(sj));
      }
      row.delta_cmd = clamp(msnn::msnn_forward(m, win), -plant_cfg.steer_range, plant_cfg.steer_range);
      row.cpu_us_msnn = detail::micros_since(t0);
    } else {
      row.delta_cmd = control::kinematic_steering(row.rho_ref, plant_cfg.wheelbase, plant_cfg.steer_range);
    }
    if (stack.cl_start == control::StartCurvature::Commanded)
      tracker.set_start_curvature(std::tan(row.delta_cmd) / plant_cfg.wheelbase);
    row.lat_err = proj.lateral_error;
    row.s_proj = proj.s_star;

    // Lap bookkeeping on raceline progress.
    if (tick > 0) {
      double d = proj.s_star - prev_s;
      if (d > L / 2) d -= L;
      if (d < -L / 2) d += L;
      progress += d;
      while (progress >= L * static_cast<double>(trace.lap_times.size() + 1)) {
        trace.lap_times.push_back(t - last_lap_t);
        last_lap_t = t;
      }
    }
    prev_s = proj.s_star;
    trace.rows.push_back(row);
    if (trace.crashed || trace.lap_times.size() >= laps) break;
    if (tick == steps) {
      trace.timed_out = true;
      break;
    }
    plant.tick(row.delta_cmd, row.v_cmd);
  }
  trace.fallbacks = tracker.fallbacks();
  return trace;
}

// ---- trace files ------------------------------------------------------------

inline void write_trace(std::ostream& out, const RunTrace& tr) {
  out << "# tick_rate=" << format_double(tr.tick_rate) << "\n";
  out << "# path_length=" << format_double(tr.path_length) << "\n";
  out << "# crashed=" << (tr.crashed ? 1 : 0);
  if (tr.crashed)
    out << " crash_x=" << format_double(tr.crash_x) << " crash_y=" << format_double(tr.crash_y)
        << " crash_tick=" << tr.crash_tick;
  out << "\n# timed_out=" << (tr.timed_out ? 1 : 0) << "\n# fallbacks=" << tr.fallbacks
      << "\n# max_speed_error=" << format_double(tr.max_speed_error) << "\n# lap_times=";
  for (std::size_t i = 0; i < tr.lap_times.size(); ++i) out << (i ? ";" : "") << format_double(tr.lap_times[i]);
  out << "\n" << kTraceHeader << "\n";
  for (const auto& r : tr.rows) {
    const double vals[] = {r.t,         r.x,       r.y,       r.psi,     r.vx,      r.vy,
                           r.r,         r.delta_cmd, r.delta_act, r.v_cmd, r.rho_ref, r.lat_err,
                           r.s_proj,    r.cpu_us_controller, r.cpu_us_planner, r.cpu_us_msnn};
    for (std::size_t k = 0; k < std::size(vals); ++k) out << (k ? "," : "") << format_double(vals[k]);
    out << "\n";
  }
}

inline void write_trace(const std::string& filename, const RunTrace& tr) {
  std::ofstream f(filename);
  if (!f) throw Error("io", "cannot write trace '" + filename + "'");
  write_trace(f, tr);
}

/// Reads a trace file, rejecting any header or row that does not match the
/// column schema.
inline RunTrace parse_trace(std::istream& in) {
  RunTrace tr;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  const auto meta = [](std::string_view text, std::string_view key) -> std::optional<std::string_view> {
    const auto pos = text.find(key);
    if (pos == std::string_view::npos) return std::nullopt;
    auto rest = text.substr(pos + key.size());
    return rest.substr(0, rest.find(' '));
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view l = trim(line);
    if (l.empty()) continue;
    if (l.front() == '#') {
      if (auto v = meta(l, "tick_rate=")) tr.tick_rate = parse_double(*v);
      if (auto v = meta(l, "path_length=")) tr.path_length = parse_double(*v);
      if (auto v = meta(l, "crashed=")) tr.crashed = *v == "1";
      if (auto v = meta(l, "crash_x=")) tr.crash_x = parse_double(*v);
      if (auto v = meta(l, "crash_y=")) tr.crash_y = parse_double(*v);
      if (auto v = meta(l, "crash_tick=")) tr.crash_tick = static_cast<std::size_t>(parse_double(*v));
      if (auto v = meta(l, "timed_out=")) tr.timed_out = *v == "1";
      if (auto v = meta(l, "fallbacks=")) tr.fallbacks = static_cast<std::size_t>(parse_double(*v));
      if (auto v = meta(l, "max_speed_error=")) tr.max_speed_error = parse_double(*v);
      if (auto v = meta(l, "lap_times=")) {
        if (!v->empty())
          for (auto part : split(*v, ';')) tr.lap_times.push_back(parse_double(part));
      }
      continue;
    }
    if (!header) {
      if (l != kTraceHeader) throw Error("trace", "unexpected trace header at line " + std::to_string(lineno));
      header = true;
      continue;
    }
    const auto f = split(l, ',');
    if (f.size() != 16) throw Error("trace", "expected 16 columns at line " + std::to_string(lineno));
    double v[16];
    for (std::size_t k = 0; k < 16; ++k) {
      try {
        v[k] = parse_double(f[k]);
      } catch (const Error&) {
        throw Error("trace", "non-numeric value at line " + std::to_string(lineno));
      }
    }
    tr.rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11], v[12], v[13],
                       v[14], v[15]});
  }
  if (!header) throw Error("trace", "trace has no header row");
  return tr;
}

inline RunTrace read_trace(const std::string& filename) {
  std::ifstream f(filename);
  if (!f) throw Error("io", "cannot open trace '" + filename + "'");
  return parse_trace(f);
}

}  // namespace racestack::sim
