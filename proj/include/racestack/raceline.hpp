#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "racestack/common.hpp"
#include "racestack/geometry.hpp"
#include "racestack/ggv.hpp"
#include "racestack/velocity.hpp"

namespace racestack::raceline {

using geometry::Path;
using geometry::TrackDefinition;
using geometry::TrackError;

/// Reference trajectory: a closed path plus speed and acceleration profiles
/// sampled on path.s. ax[i] is the acceleration over the cell that starts at
/// sample i (the last cell wraps to sample 0).
struct Raceline {
  Path path;
  std::vector<double> v;
  std::vector<double> ax;
  std::vector<double> ay;

  std::size_t size() const { return path.size(); }
  double ds() const { return path.size() > 1 ? path.s[1] - path.s[0] : 0.0; }
};

/// Box-constrained quadratic program behind the minimum-curvature path.
/// Offsets n_i move the centerline points along their unit left normals. The
/// curvature of the offset path, linearised in n, is
///   kappa_i(n) = kc_i + kc_i^2 n_i + (n_{i-1} - 2 n_i + n_{i+1}) / h^2
/// and the objective is h * sum_i kappa_i(n)^2.
struct MinCurvatureProblem {
  std::vector<double> cx, cy, nx, ny;
  std::vector<double> kappa;  // centerline curvature
  std::vector<double> lo, hi;
  double h = 0.0;             // grid spacing
  bool closed = true;

  std::size_t size() const { return cx.size(); }

  bool has_row(std::size_t i) const { return closed || (i > 0 && i + 1 < size()); }

  void residuals(const std::vector<double>& n, std::vector<double>& r) const {
    const std::size_t m = size();
    const double inv_h2 = 1.0 / (h * h);
    r.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      if (!has_row(i)) continue;
      const std::size_t a = (i + m - 1) % m, b = (i + 1) % m;
      r[i] = kappa[i] + kappa[i] * kappa[i] * n[i] + (n[a] - 2.0 * n[i] + n[b]) * inv_h2;
    }
  }

  double objective(const std::vector<double>& n) const {
    std::vector<double> r;
    residuals(n, r);
    double f = 0.0;
    for (double v : r) f += v * v;
    return h * f;
  }

  void gradient(const std::vector<double>& n, std::vector<double>& g) const {
    std::vector<double> r;
    residuals(n, r);
    const std::size_t m = size();
    const double inv_h2 = 1.0 / (h * h);
    g.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t a = (j + m - 1) % m, b = (j + 1) % m;
      double acc = r[j] * (kappa[j] * kappa[j] - 2.0 * inv_h2);
      if (has_row(a) && (closed || j > 0)) acc += r[a] * inv_h2;
      if (has_row(b) && (closed || j + 1 < m)) acc += r[b] * inv_h2;
      g[j] = 2.0 * h * acc;
    }
  }

  /// Upper bound on the gradient's Lipschitz constant.
  double lipschitz() const {
    double kk = 0.0;
    for (double k : kappa) kk = std::max(kk, k * k);
    const double norm = kk + 4.0 / (h * h);
    return 2.0 * h * norm * norm;
  }
};

struct MinCurvatureOptions {
  double coarse_ds = 0.25;
  double output_ds = 0.05;
  int max_iterations = 40000;
  double tolerance = 1e-10;
};

struct MinCurvatureSolution {
  std::vector<double> offsets;
  double objective = 0.0;
  int iterations = 0;
};

/// Accelerated projected gradient (FISTA with restart) on the box QP.
inline MinCurvatureSolution solve_min_curvature(const MinCurvatureProblem& prob,
                                                const MinCurvatureOptions& opt = {}) {
  const std::size_t m = prob.size();
  const double step = 1.0 / prob.lipschitz();
  std::vector<double> x(m, 0.0), x_prev(m, 0.0), y(m, 0.0), g;
  for (std::size_t i = 0; i < m; ++i) x[i] = x_prev[i] = y[i] = clamp(0.0, prob.lo[i], prob.hi[i]);
  double t = 1.0;
  double f_prev = prob.objective(x);
  MinCurvatureSolution out;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    prob.gradient(y, g);
    double change = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double xi = clamp(y[i] - step * g[i], prob.lo[i], prob.hi[i]);
      change = std::max(change, std::abs(xi - x[i]));
      x_prev[i] = x[i];
      x[i] = xi;
    }
    const double f = prob.objective(x);
    if (f > f_prev) {
      // Momentum overshoot: restart from the last iterate.
      t = 1.0;
      y = x_prev;
      x = x_prev;
      continue;
    }
    f_prev = f;
    if (change < opt.tolerance) break;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    for (std::size_t i = 0; i < m; ++i) y[i] = x[i] + beta * (x[i] - x_prev[i]);
    t = t_next;
  }
  out.offsets = x;
  out.objective = prob.objective(x);
  out.iterations = it;
  return out;
}

/// Builds the offset problem on a coarse uniform resampling of the corridor.
/// Offsets are positive to the left of the centerline.
inline MinCurvatureProblem make_min_curvature_problem(const TrackDefinition& track, double margin,
                                                      double coarse_ds) {
  if (!(margin >= 0.0)) throw Error("raceline", "margin must be non-negative");
  const TrackDefinition t = geometry::normalized(track);
  geometry::validate(t);
  for (std::size_t i = 0; i < t.samples.size(); ++i)
    if (margin >= t.samples[i].w_left || margin >= t.samples[i].w_right)
      throw TrackError(i, "margin " + format_double(margin) + " m leaves no room inside the corridor");
  const geometry::Corridor c = geometry::resample_corridor(t, coarse_ds);
  MinCurvatureProblem prob;
  prob.closed = t.closed;
  const std::size_t m = c.center.size();
  prob.h = c.center.length / static_cast<double>(t.closed ? m : m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    prob.cx.push_back(c.center.x[i]);
    prob.cy.push_back(c.center.y[i]);
    prob.nx.push_back(-std::sin(c.center.psi[i]));
    prob.ny.push_back(std::cos(c.center.psi[i]));
    prob.kappa.push_back(c.center.rho[i]);
    prob.lo.push_back(-(c.w_right[i] - margin));
    prob.hi.push_back(c.w_left[i] - margin);
  }
  return prob;
}

/// Minimum-curvature path inside the corridor shrunk by margin on each side.
inline Path min_curvature_path(const TrackDefinition& track, double margin, const MinCurvatureOptions& opt = {}) {
  const MinCurvatureProblem prob = make_min_curvature_problem(track, margin, opt.coarse_ds);
  const MinCurvatureSolution sol = solve_min_curvature(prob, opt);
  TrackDefinition line;
  line.closed = prob.closed;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double n = sol.offsets[i];
    line.samples.push_back({prob.cx[i] + n * prob.nx[i], prob.cy[i] + n * prob.ny[i], prob.hi[i] - n + margin,
                            n - prob.lo[i] + margin});
  }
  return geometry::resample_track(line, opt.output_ds);
}

struct ProfileOptions {
  double tolerance = 1e-4;
  int max_sweeps = 20;
};

/// Periodic speed profile on a closed uniform path: forward-backward passes
/// over one lap plus the closing cell, repeated with wrap-around boundary
/// speeds until the profile stops changing.
inline Raceline profile_raceline(const Path& path, const ggv::GgvDiagram& g, const ProfileOptions& opt = {}) {
  if (!path.closed) throw Error("raceline", "profile_raceline needs a closed path");
  const std::size_t n = path.size();
  if (n < 3) throw Error("raceline", "path too short");
  const double ds = path.length / static_cast<double>(n);
  std::vector<double> rho(path.rho);
  rho.push_back(path.rho.front());

  double w_back = g.v_max;  // braking bound carried across the seam
  double w_fwd = 0.0;       // speed carried out of the last cell
  {
    // Start the forward seed from the slowest corner so the first sweep is
    // already feasible.
    double lo = g.v_max;
    for (double r : path.rho) lo = std::min(lo, ggv::max_cornering_speed(g, r));
    w_fwd = lo;
  }
  std::vector<double> prev;
  double last_delta = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    const velocity::SpeedPlan back = velocity::plan_speed(rho, ds, g.v_max, g, w_back);
    w_back = back.v.front();
    const velocity::SpeedPlan plan = velocity::plan_speed(rho, ds, w_fwd, g, w_back);
    w_fwd = plan.v.back();
    if (!prev.empty()) {
      last_delta = 0.0;
      for (std::size_t i = 0; i <= n; ++i) last_delta = std::max(last_delta, std::abs(plan.v[i] - prev[i]));
      last_delta = std::max(last_delta, std::abs(plan.v[n] - plan.v[0]));
      if (last_delta < opt.tolerance) {
        Raceline r;
        r.path = path;
        r.v.assign(plan.v.begin(), plan.v.begin() + static_cast<std::ptrdiff_t>(n));
        r.ax.assign(plan.ax.begin(), plan.ax.begin() + static_cast<std::ptrdiff_t>(n));
        r.ay.assign(plan.ay.begin(), plan.ay.begin() + static_cast<std::ptrdiff_t>(n));
        return r;
      }
    }
    prev = plan.v;
  }
  throw Error("raceline", "cyclic speed profile did not converge; last max |dv| = " + format_double(last_delta));
}

inline double lap_time(const Raceline& r) {
  std::vector<double> v(r.v);
  v.push_back(r.v.front());
  return velocity::traversal_time(v, r.path.length / static_cast<double>(r.size()));
}

// ---- raceline files -------------------------------------------------------

inline void write_raceline(std::ostream& out, const Raceline& r) {
  out << "# closed=" << (r.path.closed ? "true" : "false") << "\n";
  out << "# length=" << format_double(r.path.length) << "\n";
  out << "s,x,y,psi,rho,v,ax,ay\n";
  for (std::size_t i = 0; i < r.size(); ++i) {
    out << format_double(r.path.s[i]) << ',' << format_double(r.path.x[i]) << ',' << format_double(r.path.y[i])
        << ',' << format_double(r.path.psi[i]) << ',' << format_double(r.path.rho[i]) << ','
        << format_double(r.v[i]) << ',' << format_double(r.ax[i]) << ',' << format_double(r.ay[i]) << '\n';
  }
}

inline Raceline parse_raceline(std::istream& in) {
  Raceline r;
  bool header = false;
  bool have_length = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string_view body = trim(t.substr(1));
      if (body.starts_with("closed=")) r.path.closed = body.substr(7) == "true";
      if (body.starts_with("length=")) {
        r.path.length = parse_double(body.substr(7));
        have_length = true;
      }
      continue;
    }
    if (!header) {
      if (t != "s,x,y,psi,rho,v,ax,ay")
        throw Error("raceline", "expected header s,x,y,psi,rho,v,ax,ay at line " + std::to_string(lineno));
      header = true;
      continue;
    }
    const auto f = split(t, ',');
    if (f.size() != 8) throw Error("raceline", "expected 8 fields at line " + std::to_string(lineno));
    r.path.s.push_back(parse_double(f[0]));
    r.path.x.push_back(parse_double(f[1]));
    r.path.y.push_back(parse_double(f[2]));
    r.path.psi.push_back(parse_double(f[3]));
    r.path.rho.push_back(parse_double(f[4]));
    r.v.push_back(parse_double(f[5]));
    r.ax.push_back(parse_double(f[6]));
    r.ay.push_back(parse_double(f[7]));
  }
  if (r.size() < 2) throw Error("raceline", "raceline file has fewer than two samples");
  if (!have_length) {
    const std::size_t n = r.size();
    r.path.length = r.path.closed ? r.path.s[n - 1] + (r.path.s[n - 1] - r.path.s[n - 2]) : r.path.s[n - 1];
  }
  return r;
}

inline Raceline read_raceline(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw Error("io", "cannot open raceline file " + filename);
  return parse_raceline(in);
}

inline void write_raceline(const std::string& filename, const Raceline& r) {
  std::ofstream out(filename);
  if (!out) throw Error("io", "cannot write raceline file " + filename);
  write_raceline(out, r);
}

/// Track to raceline in one call: minimum-curvature path then cyclic profile.
inline Raceline generate_raceline(const TrackDefinition& track, const ggv::GgvDiagram& g, double margin,
                                  const MinCurvatureOptions& opt = {}) {
  return profile_raceline(min_curvature_path(track, margin, opt), g);
}

}  // namespace racestack::raceline
