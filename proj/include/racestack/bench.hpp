#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "racestack/common.hpp"
#include "racestack/geometry.hpp"
#include "racestack/ggv.hpp"
#include "racestack/msnn.hpp"
#include "racestack/raceline.hpp"
#include "racestack/sim.hpp"

namespace racestack::bench {

using raceline::Raceline;
using sim::RunTrace;

// ---- metrics ----------------------------------------------------------------

struct CpuStats {
  double mean_us = 0.0;
  double p99_us = 0.0;
  double max_us = 0.0;
};

struct RunMetrics {
  std::vector<double> lap_times;  // s, one per completed lap
  std::optional<double> lap_time;  // s, mean over completed laps; absent on crash
  double mean_lat_err = 0.0;       // m
  double max_lat_err = 0.0;        // m
  double rms_steering_rate = 0.0;  // rad/s
  double max_v = 0.0;              // m/s
  double max_ax = 0.0;             // m/s^2
  double max_ay = 0.0;             // m/s^2
  bool crash = false;
  bool partial = false;  // no completed lap and no crash
  CpuStats cpu_controller, cpu_planner, cpu_msnn;
  double cpu_total_mean_us = 0.0;
};

namespace detail {

inline CpuStats cpu_stats(std::vector<double> v) {
  CpuStats s;
  if (v.empty()) return s;
  s.mean_us = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  s.max_us = v.back();
  s.p99_us = v[std::min(v.size() - 1, static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(v.size()))) - 1)];
  return s;
}

}  // namespace detail

/// Steering-rate RMS from first differences of the commanded steering at the
/// tick rate.
inline double rms_rate(const std::vector<double>& delta, double tick_rate) {
  if (delta.size() < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 1; i < delta.size(); ++i) acc += square((delta[i] - delta[i - 1]) * tick_rate);
  return std::sqrt(acc / static_cast<double>(delta.size() - 1));
}

inline RunMetrics compute_metrics(const RunTrace& trace, const Raceline& rl) {
  if (trace.rows.empty()) throw Error("metrics", "cannot compute metrics of an empty trace");
  RunMetrics m;
  m.crash = trace.crashed;
  if (!trace.crashed) {
    m.lap_times = trace.lap_times;
    if (!m.lap_times.empty())
      m.lap_time = std::accumulate(m.lap_times.begin(), m.lap_times.end(), 0.0) / static_cast<double>(m.lap_times.size());
  }
  m.partial = !trace.crashed && trace.lap_times.empty();

  const auto& rows = trace.rows;
  const double rate = trace.tick_rate;
  std::vector<double> delta, c1, c2, c3, tot;
  double s_hint = geometry::project_to_path(rl.path, rows.front().x, rows.front().y).s_star;
  double sum_lat = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto p = geometry::project_near(rl.path, r.x, r.y, s_hint, 1.0);
    s_hint = p.s_star;
    sum_lat += std::abs(p.lateral_error);
    m.max_lat_err = std::max(m.max_lat_err, std::abs(p.lateral_error));
    m.max_v = std::max(m.max_v, std::hypot(r.vx, r.vy));
    m.max_ay = std::max(m.max_ay, std::abs(r.vx * r.r));
    if (i > 0) m.max_ax = std::max(m.max_ax, std::abs(r.vx - rows[i - 1].vx) * rate);
    delta.push_back(r.delta_cmd);
    c1.push_back(r.cpu_us_controller);
    c2.push_back(r.cpu_us_planner);
    c3.push_back(r.cpu_us_msnn);
    tot.push_back(r.cpu_us_controller + r.cpu_us_planner + r.cpu_us_msnn);
  }
  m.mean_lat_err = sum_lat / static_cast<double>(rows.size());
  m.rms_steering_rate = rms_rate(delta, rate);
  m.cpu_controller = detail::cpu_stats(c1);
  m.cpu_planner = detail::cpu_stats(c2);
  m.cpu_msnn = detail::cpu_stats(c3);
  m.cpu_total_mean_us = detail::cpu_stats(tot).mean_us;
  return m;
}

// ---- dataset extraction -----------------------------------------------------

struct DatasetSplit {
  msnn::SteerDataset train;
  msnn::SteerDataset val;
  double train_seconds = 0.0;  // time spanned by the training windows' start times
  double val_seconds = 0.0;
};

struct ExtractOptions {
  std::size_t w = 9;
  double period = 0.05;       // T_s
  double split_ratio = 0.75;  // share of the time span used for training
  std::size_t stride = 1;     // ticks between window starts
  double curvature_speed_floor = 0.3;  // m/s, below it curvature is not measurable
};

/// Window start ticks whose (w+1) samples, spaced `step` ticks apart, all fall
/// inside a segment of n ticks.
inline std::vector<std::size_t> window_starts(std::size_t n, std::size_t w, double step, std::size_t stride) {
  std::vector<std::size_t> out;
  if (stride == 0) throw Error("dataset", "window stride must be positive");
  const double span = static_cast<double>(w) * step;
  for (std::size_t i = 0; static_cast<double>(i) + span <= static_cast<double>(n) - 1.0 + 1e-9; i += stride)
    out.push_back(i);
  return out;
}

/// Sliding windows of the realized motion (curvature r/vx, speed, lateral and
/// longitudinal acceleration) sampled every T_s from each tick, paired with
/// the steering command issued at the window's first tick. Windows never span
/// a time discontinuity. The split is chronological: training windows end
/// before the split time and validation windows start after it.
inline DatasetSplit extract_dataset(const RunTrace& trace, const ExtractOptions& opt = {}) {
  const auto& rows = trace.rows;
  if (trace.crashed) throw Error("dataset", "refusing to extract training data from a crashed run");
  if (!(opt.period > 0.0) || !(trace.tick_rate > 0.0)) throw Error("dataset", "period and tick rate must be positive");
  if (!(opt.split_ratio > 0.0 && opt.split_ratio < 1.0)) throw Error("dataset", "split ratio must lie in (0, 1)");
  const double dt = 1.0 / trace.tick_rate;
  const double step = opt.period * trace.tick_rate;  // ticks per sample, may be fractional
  if (rows.size() < 2 || static_cast<double>(rows.size() - 1) < static_cast<double>(opt.w) * step)
    throw Error("dataset", "trace is shorter than one window");

  // Contiguous segments: a reset shows up as a time step that is not one tick.
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= rows.size(); ++i) {
    if (i == rows.size() || std::abs(rows[i].t - rows[i - 1].t - dt) > 0.5 * dt) {
      segments.emplace_back(begin, i);
      begin = i;
    }
  }

  const double t0 = rows.front().t;
  const double t1 = rows.back().t;
  const double t_split = t0 + opt.split_ratio * (t1 - t0);
  const double window_time = static_cast<double>(opt.w) * opt.period;

  DatasetSplit out;
  for (const auto& [a, b] : segments) {
    const std::size_t n = b - a;
    if (static_cast<double>(n) - 1.0 < static_cast<double>(opt.w) * step) continue;
    // Per-tick signals of this segment.
    std::vector<double> rho(n), v(n), ay(n), ax(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& r = rows[a + k];
      v[k] = r.vx;
      rho[k] = r.r / std::max(r.vx, opt.curvature_speed_floor);
      ay[k] = r.vx * r.r;
      const std::size_t lo = k == 0 ? 0 : k - 1;
      const std::size_t hi = k + 1 == n ? n - 1 : k + 1;
      ax[k] = (rows[a + hi].vx - rows[a + lo].vx) / (rows[a + hi].t - rows[a + lo].t);
    }
    const auto sample = [&](const std::vector<double>& f, double pos) {
      const auto i = static_cast<std::size_t>(std::floor(pos));
      if (i + 1 >= n) return f[n - 1];
      const double u = pos - static_cast<double>(i);
      return f[i] + u * (f[i + 1] - f[i]);
    };
    for (std::size_t i : window_starts(n, opt.w, step, opt.stride)) {
      const double ts = rows[a + i].t;
      const bool train = ts + window_time <= t_split;
      const bool val = ts >= t_split;
      if (!train && !val) continue;
      msnn::Sample smp;
      for (std::size_t j = 0; j <= opt.w; ++j) {
        const double pos = static_cast<double>(i) + static_cast<double>(j) * step;
        smp.window.rho.push_back(sample(rho, pos));
        smp.window.v.push_back(sample(v, pos));
        smp.window.ay.push_back(sample(ay, pos));
        smp.window.ax.push_back(sample(ax, pos));
      }
      smp.delta = rows[a + i].delta_cmd;
      (train ? out.train : out.val).push_back(std::move(smp));
    }
  }
  out.train_seconds = static_cast<double>(out.train.size() * opt.stride) * dt;
  out.val_seconds = static_cast<double>(out.val.size() * opt.stride) * dt;
  return out;
}

// ---- closed-loop feasibility and envelope expansion ---------------------------

struct Feasibility {
  double lat_share = 0.5;        // max |lateral error| <= share x narrowest half-width
  double max_speed_error = 0.5;  // m/s
};

struct FeasibilityResult {
  bool feasible = false;
  std::string reason;  // empty when feasible
};

inline double min_half_width(const geometry::TrackDefinition& track) {
  double w = std::numeric_limits<double>::infinity();
  for (const auto& s : track.samples) w = std::min({w, s.w_left, s.w_right});
  return w;
}

inline FeasibilityResult check_feasible(const RunTrace& tr, const Raceline& rl, const geometry::TrackDefinition& track,
                                        std::size_t laps, const Feasibility& f) {
  if (tr.crashed) return {false, "corridor exit"};
  if (tr.timed_out || tr.lap_times.size() < laps) return {false, "laps not completed"};
  const RunMetrics m = compute_metrics(tr, rl);
  if (m.max_lat_err > f.lat_share * min_half_width(track)) return {false, "lateral error bound"};
  if (tr.max_speed_error > f.max_speed_error) return {false, "speed error bound"};
  return {true, ""};
}

struct ExpansionStep {
  double factor = 1.0;
  bool feasible = false;
  std::string reason;
  std::optional<double> lap_time;
  double max_lat_err = 0.0;
  double max_speed_error = 0.0;
};

struct ExpansionResult {
  ggv::GgvDiagram preset;
  Raceline raceline;
  double factor = 1.0;  // relative to the base envelope
  std::vector<ExpansionStep> log;
};

struct ExpansionOptions {
  double step = 0.05;  // growth per iteration, fraction
  std::size_t max_iterations = 40;
  std::size_t laps = 2;
  std::uint64_t seed = 1;
  double raceline_margin = 0.35;
  Feasibility feasibility;
};

/// Grows the acceleration limits by (1 + step) per iteration, regenerating the
/// raceline and re-running the closed loop each time, and returns the last
/// envelope that stayed feasible.
inline ExpansionResult expand_ggv(const ggv::GgvDiagram& base, const geometry::TrackDefinition& track,
                                  const sim::StackConfig& stack, const sim::PlantConfig& plant,
                                  const ExpansionOptions& opt = {}) {
  if (!(opt.step > 0.0)) throw Error("expand", "expansion step must be positive");
  const auto attempt = [&](double factor, ExpansionStep& rec, Raceline& rl_out) {
    const ggv::GgvDiagram g = ggv::scaled(base, factor);
    rec.factor = factor;
    Raceline rl;
    try {
      rl = raceline::generate_raceline(track, g, opt.raceline_margin);
    } catch (const Error& e) {
      rec.reason = std::string("raceline: ") + e.what();
      return false;
    }
    sim::StackConfig sc = stack;
    sc.ggv = g;
    const RunTrace tr = sim::run_closed_loop(rl, track, sc, plant, opt.laps, opt.seed);
    const auto fr = check_feasible(tr, rl, track, opt.laps, opt.feasibility);
    rec.feasible = fr.feasible;
    rec.reason = fr.reason;
    rec.max_speed_error = tr.max_speed_error;
    if (!tr.rows.empty()) {
      const RunMetrics m = compute_metrics(tr, rl);
      rec.lap_time = m.lap_time;
      rec.max_lat_err = m.max_lat_err;
    }
    rl_out = std::move(rl);
    return fr.feasible;
  };

  ExpansionResult out;
  ExpansionStep rec;
  if (!attempt(1.0, rec, out.raceline))
    throw Error("expand", "base envelope is not closed-loop feasible (" + rec.reason + ")");
  out.log.push_back(rec);
  out.preset = base;
  double factor = 1.0;
  for (std::size_t k = 0; k < opt.max_iterations; ++k) {
    const double next = factor * (1.0 + opt.step);
    ExpansionStep r;
    Raceline rl;
    const bool ok = attempt(next, r, rl);
    out.log.push_back(r);
    if (!ok) break;
    factor = next;
    out.preset = ggv::scaled(base, factor);
    out.raceline = std::move(rl);
  }
  out.factor = factor;
  return out;
}

// ---- ablation -----------------------------------------------------------------

struct PresetLine {
  std::string name;
  ggv::GgvDiagram ggv;
  Raceline raceline;
};

struct AblationSetup {
  geometry::TrackDefinition track;
  std::vector<PresetLine> presets;
  std::vector<control::Tracker> controllers{control::Tracker::PurePursuit, control::Tracker::Clothoid};
  std::vector<bool> msnn{false, true};
  std::vector<bool> fbga{false, true};
  std::optional<msnn::MsnnModel> model;
  sim::StackConfig stack;  // template for everything the grid does not vary
  sim::PlantConfig plant;
  std::size_t laps = 3;
  std::uint64_t seed = 1;
};

struct AblationCell {
  std::string preset;
  control::Tracker controller = control::Tracker::PurePursuit;
  bool msnn = false;
  bool fbga = false;
};

struct AblationRow {
  AblationCell cell;
  RunMetrics metrics;
  RunTrace trace;
};

/// Grid cells in fixed order: preset, controller, MS-NN, replanning.
inline std::vector<AblationCell> ablation_cells(const AblationSetup& s) {
  std::vector<AblationCell> cells;
  for (const auto& p : s.presets)
    for (auto c : s.controllers)
      for (bool m : s.msnn)
        for (bool f : s.fbga) cells.push_back({p.name, c, m, f});
  return cells;
}

/// Runs every grid cell, spread over `jobs` threads. Each cell owns its state;
/// results are stored by grid index so the output order never depends on
/// scheduling. A crash in one cell does not stop the others.
inline std::vector<AblationRow> run_ablation(const AblationSetup& s, std::size_t jobs = 1) {
  const auto cells = ablation_cells(s);
  for (const auto& c : cells)
    if (c.msnn && !s.model) throw Error("ablate", "grid asks for the MS-NN but no model was given");
  std::vector<AblationRow> rows(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto& c = cells[i];
      const auto& preset = *std::find_if(s.presets.begin(), s.presets.end(),
                                         [&](const PresetLine& p) { return p.name == c.preset; });
      sim::StackConfig sc = s.stack;
      sc.controller = c.controller;
      sc.fbga = c.fbga;
      sc.ggv = preset.ggv;
      sc.msnn = c.msnn ? s.model : std::nullopt;
      try {
        rows[i].cell = c;
        rows[i].trace = sim::run_closed_loop(preset.raceline, s.track, sc, s.plant, s.laps, s.seed);
        rows[i].metrics = compute_metrics(rows[i].trace, preset.raceline);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!errors[i].empty()) throw Error("ablate", "grid cell " + std::to_string(i) + " failed: " + errors[i]);
  return rows;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

}  // namespace detail

/// Deterministic summary table. CPU times are excluded because they vary from
/// run to run; see timing_table.
inline std::string summary_table(const std::vector<AblationRow>& rows) {
  std::ostringstream o;
  o << "preset,controller,msnn,fbga,crash,laps,lap_time_s,mean_lat_err_m,max_lat_err_m,rms_steer_rate_rad_s,"
       "max_v_m_s,max_ax_m_s2,max_ay_m_s2\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    o << r.cell.preset << ',' << control::to_string(r.cell.controller) << ',' << (r.cell.msnn ? "on" : "off") << ','
      << (r.cell.fbga ? "on" : "off") << ',' << (m.crash ? "yes" : "no") << ',' << m.lap_times.size() << ','
      << (m.lap_time ? detail::fixed(*m.lap_time, 4) : std::string("crash")) << ','
      << detail::fixed(m.mean_lat_err, 5) << ',' << detail::fixed(m.max_lat_err, 5) << ','
      << detail::fixed(m.rms_steering_rate, 5) << ',' << detail::fixed(m.max_v, 4) << ','
      << detail::fixed(m.max_ax, 4) << ',' << detail::fixed(m.max_ay, 4) << '\n';
  }
  return o.str();
}

inline std::string timing_table(const std::vector<AblationRow>& rows) {
  std::ostringstream o;
  o << "preset,controller,msnn,fbga,controller_mean_us,controller_p99_us,planner_mean_us,planner_p99_us,"
       "msnn_mean_us,msnn_p99_us,total_mean_us\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    o << r.cell.preset << ',' << control::to_string(r.cell.controller) << ',' << (r.cell.msnn ? "on" : "off") << ','
      << (r.cell.fbga ? "on" : "off") << ',' << detail::fixed(m.cpu_controller.mean_us, 1) << ','
      << detail::fixed(m.cpu_controller.p99_us, 1) << ',' << detail::fixed(m.cpu_planner.mean_us, 1) << ','
      << detail::fixed(m.cpu_planner.p99_us, 1) << ',' << detail::fixed(m.cpu_msnn.mean_us, 1) << ','
      << detail::fixed(m.cpu_msnn.p99_us, 1) << ',' << detail::fixed(m.cpu_total_mean_us, 1) << '\n';
  }
  return o.str();
}

// ---- static plots -------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

/// Minimal line plot as a standalone SVG document.
inline std::string svg_plot(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                            const std::string& ylabel, bool equal_axes = false) {
  const double W = 720, H = 480, ml = 70, mr = 20, mt = 40, mb = 55;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!(x1 > x0)) x0 -= 1, x1 += 1;
  if (!(y1 > y0)) y0 -= 1, y1 += 1;
  double sx = (W - ml - mr) / (x1 - x0), sy = (H - mt - mb) / (y1 - y0);
  if (equal_axes) sx = sy = std::min(sx, sy);
  const auto px = [&](double x) { return ml + (x - x0) * sx; };
  const auto py = [&](double y) { return H - mb - (y - y0) * sy; };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">" << detail::fixed(xv, 2) << "</text>\n";
    o << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << detail::fixed(yv, 2) << "</text>\n";
  }
  o << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  o << "<text x=\"16\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (mt + H - mb) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
      << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) o << detail::fixed(px(s.x[i]), 2) << ',' << detail::fixed(py(s.y[i]), 2) << ' ';
    o << "\"/>\n";
    const double ly = mt + 14.0 * static_cast<double>(k) + 6;
    o << "<line x1=\"" << W - mr - 150 << "\" y1=\"" << ly << "\" x2=\"" << W - mr - 130 << "\" y2=\"" << ly
      << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - mr - 125 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline void write_text(const std::string& filename, const std::string& text) {
  std::ofstream f(filename);
  if (!f) throw Error("io", "cannot write '" + filename + "'");
  f << text;
}

}  // namespace racestack::bench
