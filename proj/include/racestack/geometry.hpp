#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "racestack/common.hpp"
#include "racestack/quadrature.hpp"

namespace racestack::geometry {

struct TrackSample {
  double x = 0.0;
  double y = 0.0;
  double w_left = 0.0;
  double w_right = 0.0;
};

/// Sampled centerline with per-sample corridor widths. Closed tracks are stored
/// without a duplicated end point; the closing segment last -> first is implied.
struct TrackDefinition {
  std::vector<TrackSample> samples;
  bool closed = false;
};

/// Rejection of a track, carrying the offending input sample.
class TrackError : public Error {
 public:
  TrackError(std::size_t index, const std::string& what)
      : Error("track", what + " (sample " + std::to_string(index) + ")"), index_(index) {}
  std::size_t sample_index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Arc-length parameterized curve. For closed paths the grid covers [0, length)
/// and the segment from the last sample back to the first has length
/// `length - s.back()`.
struct Path {
  std::vector<double> s;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> psi;
  std::vector<double> rho;
  bool closed = false;
  double length = 0.0;

  std::size_t size() const { return s.size(); }
  bool empty() const { return s.empty(); }
};

struct PoseCurv {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double rho = 0.0;
};

/// Resampled centerline plus the widths interpolated onto its grid.
struct Corridor {
  Path center;
  std::vector<double> w_left;
  std::vector<double> w_right;
};

struct Projection {
  double s_star = 0.0;
  double lateral_error = 0.0;  // positive to the left of the path
  double distance = 0.0;
};

// --------------------------------------------------------------------------
// Track validation and file format

/// Drops a duplicated closing point and checks the track invariants.
inline TrackDefinition normalized(TrackDefinition track) {
  if (track.closed && track.samples.size() >= 2) {
    const auto& a = track.samples.front();
    const auto& b = track.samples.back();
    if (std::hypot(a.x - b.x, a.y - b.y) <= 1e-6) track.samples.pop_back();
  }
  return track;
}

inline void validate(const TrackDefinition& track) {
  const auto& sm = track.samples;
  if (sm.size() < 10) throw TrackError(sm.size(), "track needs at least 10 samples");
  for (std::size_t i = 0; i < sm.size(); ++i) {
    const auto& p = sm[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.w_left) ||
        !std::isfinite(p.w_right))
      throw TrackError(i, "non-finite track sample");
    if (p.w_left <= 0.0 || p.w_right <= 0.0) throw TrackError(i, "corridor width must be positive");
    if (i > 0 && std::hypot(p.x - sm[i - 1].x, p.y - sm[i - 1].y) <= 1e-9)
      throw TrackError(i, "duplicate consecutive sample");
  }
  if (track.closed &&
      std::hypot(sm.front().x - sm.back().x, sm.front().y - sm.back().y) <= 1e-6)
    throw TrackError(sm.size() - 1, "closed track repeats its first sample; normalize first");
}

inline TrackDefinition parse_track(std::istream& in) {
  TrackDefinition track;
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      std::string flag(t.substr(1));
      flag.erase(std::remove_if(flag.begin(), flag.end(), ::isspace), flag.end());
      if (flag == "closed=true") track.closed = true;
      if (flag == "closed=false") track.closed = false;
      continue;
    }
    if (!header_seen) {
      std::string h(t);
      h.erase(std::remove_if(h.begin(), h.end(), ::isspace), h.end());
      if (h != "x,y,w_left,w_right")
        throw Error("track", "expected header 'x,y,w_left,w_right' at line " + std::to_string(line_no));
      header_seen = true;
      continue;
    }
    const auto cols = split(t, ',');
    if (cols.size() != 4)
      throw Error("track", "expected 4 columns at line " + std::to_string(line_no));
    track.samples.push_back({parse_double(cols[0]), parse_double(cols[1]), parse_double(cols[2]),
                             parse_double(cols[3])});
  }
  if (!header_seen) throw Error("track", "missing header");
  track = normalized(std::move(track));
  validate(track);
  return track;
}

inline TrackDefinition read_track(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw Error("io", "cannot open track file " + filename);
  return parse_track(in);
}

inline void write_track(std::ostream& out, const TrackDefinition& track) {
  out << "# closed=" << (track.closed ? "true" : "false") << '\n';
  out << "x,y,w_left,w_right\n";
  for (const auto& p : track.samples)
    out << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.w_left) << ','
        << format_double(p.w_right) << '\n';
}

inline void write_track(const std::string& filename, const TrackDefinition& track) {
  std::ofstream out(filename);
  if (!out) throw Error("io", "cannot write track file " + filename);
  write_track(out, track);
}

// --------------------------------------------------------------------------
// Interpolating cubic spline through planar points (chord-length parameter).

namespace detail {

class PlanarSpline {
 public:
  PlanarSpline(std::vector<double> xs, std::vector<double> ys, bool closed)
      : x_(std::move(xs)), y_(std::move(ys)), closed_(closed) {
    const std::size_t n = x_.size();
    const std::size_t segs = closed_ ? n : n - 1;
    h_.resize(segs);
    for (std::size_t i = 0; i < segs; ++i) {
      const std::size_t j = (i + 1) % n;
      h_[i] = std::hypot(x_[j] - x_[i], y_[j] - y_[i]);
    }
    mx_ = second_derivatives(x_);
    my_ = second_derivatives(y_);
    seg_len_.resize(segs);
    cum_len_.assign(segs + 1, 0.0);
    for (std::size_t i = 0; i < segs; ++i) {
      seg_len_[i] = arc_length(i, h_[i]);
      cum_len_[i + 1] = cum_len_[i] + seg_len_[i];
    }
  }

  std::size_t segments() const { return h_.size(); }
  double length() const { return cum_len_.back(); }
  double segment_start(std::size_t i) const { return cum_len_[i]; }
  double knot_spacing(std::size_t i) const { return h_[i]; }

  void eval(std::size_t i, double t, double& px, double& py) const {
    px = eval_coord(x_, mx_, i, t);
    py = eval_coord(y_, my_, i, t);
  }

  double speed(std::size_t i, double t) const {
    return std::hypot(deriv_coord(x_, mx_, i, t), deriv_coord(y_, my_, i, t));
  }

  // Arc length of segment i over local parameter [0, t].
  double arc_length(std::size_t i, double t) const {
    const auto& gl = gauss_legendre<16>();
    double acc = 0.0;
    for (std::size_t k = 0; k < 16; ++k) {
      const double u = 0.5 * t * (gl.nodes[k] + 1.0);
      acc += gl.weights[k] * speed(i, u);
    }
    return 0.5 * t * acc;
  }

  // Locates global arc length s: returns (segment, local parameter).
  std::pair<std::size_t, double> locate(double s) const {
    s = clamp(s, 0.0, length());
    auto it = std::upper_bound(cum_len_.begin(), cum_len_.end(), s);
    std::size_t i = it == cum_len_.begin() ? 0 : static_cast<std::size_t>(it - cum_len_.begin()) - 1;
    if (i >= segments()) i = segments() - 1;
    const double target = s - cum_len_[i];
    double t = h_[i] * target / seg_len_[i];
    for (int iter = 0; iter < 8; ++iter) {
      const double f = arc_length(i, t) - target;
      const double d = speed(i, t);
      if (d <= 0.0) break;
      const double dt = f / d;
      t = clamp(t - dt, 0.0, h_[i]);
      if (std::abs(dt) < 1e-13) break;
    }
    return {i, t};
  }

 private:
  std::vector<double> second_derivatives(const std::vector<double>& v) const {
    const std::size_t n = v.size();
    std::vector<double> m(n, 0.0);
    if (closed_) {
      // Cyclic tridiagonal system, Sherman-Morrison.
      std::vector<double> a(n), b(n), c(n), r(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t im = (i + n - 1) % n;
        const std::size_t ip = (i + 1) % n;
        a[i] = h_[im];
        b[i] = 2.0 * (h_[im] + h_[i]);
        c[i] = h_[i];
        r[i] = 6.0 * ((v[ip] - v[i]) / h_[i] - (v[i] - v[im]) / h_[im]);
      }
      const double alpha = c[n - 1];  // bottom-left corner
      const double beta = a[0];       // top-right corner
      const double gamma = -b[0];
      std::vector<double> bb = b;
      bb[0] = b[0] - gamma;
      bb[n - 1] = b[n - 1] - alpha * beta / gamma;
      std::vector<double> xsol = thomas(a, bb, c, r);
      std::vector<double> u(n, 0.0);
      u[0] = gamma;
      u[n - 1] = alpha;
      std::vector<double> z = thomas(a, bb, c, u);
      const double fact = (xsol[0] + beta * xsol[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
      for (std::size_t i = 0; i < n; ++i) m[i] = xsol[i] - fact * z[i];
    } else {
      // Natural end conditions.
      if (n < 3) return m;
      const std::size_t k = n - 2;
      std::vector<double> a(k), b(k), c(k), r(k);
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t i = j + 1;
        a[j] = h_[i - 1];
        b[j] = 2.0 * (h_[i - 1] + h_[i]);
        c[j] = h_[i];
        r[j] = 6.0 * ((v[i + 1] - v[i]) / h_[i] - (v[i] - v[i - 1]) / h_[i - 1]);
      }
      const auto sol = thomas(a, b, c, r);
      for (std::size_t j = 0; j < k; ++j) m[j + 1] = sol[j];
    }
    return m;
  }

  static std::vector<double> thomas(const std::vector<double>& a, const std::vector<double>& b,
                                    const std::vector<double>& c, const std::vector<double>& r) {
    const std::size_t n = b.size();
    std::vector<double> cp(n), dp(n), out(n);
    cp[0] = c[0] / b[0];
    dp[0] = r[0] / b[0];
    for (std::size_t i = 1; i < n; ++i) {
      const double den = b[i] - a[i] * cp[i - 1];
      cp[i] = c[i] / den;
      dp[i] = (r[i] - a[i] * dp[i - 1]) / den;
    }
    out[n - 1] = dp[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) out[i] = dp[i] - cp[i] * out[i + 1];
    return out;
  }

  double eval_coord(const std::vector<double>& v, const std::vector<double>& m, std::size_t i,
                    double t) const {
    const std::size_t j = (i + 1) % v.size();
    const double h = h_[i];
    const double u = h - t;
    return m[i] * u * u * u / (6.0 * h) + m[j] * t * t * t / (6.0 * h) +
           (v[i] / h - m[i] * h / 6.0) * u + (v[j] / h - m[j] * h / 6.0) * t;
  }

  double deriv_coord(const std::vector<double>& v, const std::vector<double>& m, std::size_t i,
                     double t) const {
    const std::size_t j = (i + 1) % v.size();
    const double h = h_[i];
    const double u = h - t;
    return -m[i] * u * u / (2.0 * h) + m[j] * t * t / (2.0 * h) - (v[i] / h - m[i] * h / 6.0) +
           (v[j] / h - m[j] * h / 6.0);
  }

  std::vector<double> x_, y_, h_, mx_, my_, seg_len_, cum_len_;
  bool closed_;
};

inline bool segments_intersect(double ax, double ay, double bx, double by, double cx, double cy,
                               double dx, double dy) {
  const auto orient = [](double px, double py, double qx, double qy, double rx, double ry) {
    return (qx - px) * (ry - py) - (qy - py) * (rx - px);
  };
  const double o1 = orient(ax, ay, bx, by, cx, cy);
  const double o2 = orient(ax, ay, bx, by, dx, dy);
  const double o3 = orient(cx, cy, dx, dy, ax, ay);
  const double o4 = orient(cx, cy, dx, dy, bx, by);
  return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 &&
         o4 != 0;
}

// Heading from central differences and curvature from smoothed second
// differences on a uniform grid.
inline void fill_heading_curvature(Path& p, double h) {
  const std::size_t n = p.size();
  p.psi.assign(n, 0.0);
  std::vector<double> raw(n, 0.0);
  const auto at = [&](const std::vector<double>& v, std::ptrdiff_t i) {
    if (p.closed) return v[static_cast<std::size_t>((i % static_cast<std::ptrdiff_t>(n) + n) % n)];
    return v[static_cast<std::size_t>(i)];
  };
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::ptrdiff_t>(k);
    double dx = 0, dy = 0, ddx = 0, ddy = 0;
    if (p.closed || (k > 0 && k + 1 < n)) {
      dx = (at(p.x, i + 1) - at(p.x, i - 1)) / (2.0 * h);
      dy = (at(p.y, i + 1) - at(p.y, i - 1)) / (2.0 * h);
      ddx = (at(p.x, i + 1) - 2.0 * at(p.x, i) + at(p.x, i - 1)) / (h * h);
      ddy = (at(p.y, i + 1) - 2.0 * at(p.y, i) + at(p.y, i - 1)) / (h * h);
    } else if (k == 0) {
      dx = (-3.0 * p.x[0] + 4.0 * p.x[1] - p.x[2]) / (2.0 * h);
      dy = (-3.0 * p.y[0] + 4.0 * p.y[1] - p.y[2]) / (2.0 * h);
      ddx = (p.x[0] - 2.0 * p.x[1] + p.x[2]) / (h * h);
      ddy = (p.y[0] - 2.0 * p.y[1] + p.y[2]) / (h * h);
    } else {
      const std::size_t m = n - 1;
      dx = (3.0 * p.x[m] - 4.0 * p.x[m - 1] + p.x[m - 2]) / (2.0 * h);
      dy = (3.0 * p.y[m] - 4.0 * p.y[m - 1] + p.y[m - 2]) / (2.0 * h);
      ddx = (p.x[m] - 2.0 * p.x[m - 1] + p.x[m - 2]) / (h * h);
      ddy = (p.y[m] - 2.0 * p.y[m - 1] + p.y[m - 2]) / (h * h);
    }
    p.psi[k] = std::atan2(dy, dx);
    raw[k] = (dx * ddy - dy * ddx) / std::pow(dx * dx + dy * dy, 1.5);
  }
  // 5-point moving average.
  p.rho.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    int cnt = 0;
    for (std::ptrdiff_t off = -2; off <= 2; ++off) {
      const auto i = static_cast<std::ptrdiff_t>(k) + off;
      if (!p.closed && (i < 0 || i >= static_cast<std::ptrdiff_t>(n))) continue;
      acc += at(raw, i);
      ++cnt;
    }
    p.rho[k] = acc / cnt;
  }
}

struct ResampleResult {
  Path path;
  std::vector<std::size_t> source_index;  // nearest input sample per output sample
  std::vector<std::size_t> segment;
  std::vector<double> fraction;  // local spline parameter / knot spacing
};

inline ResampleResult resample_points(const std::vector<double>& xs, const std::vector<double>& ys,
                                      bool closed, double ds) {
  if (!(ds > 0.0)) throw Error("geometry", "resampling step must be positive");
  if (xs.size() < 3) throw Error("geometry", "need at least 3 points to resample");
  const PlanarSpline spline(xs, ys, closed);
  const double total = spline.length();
  const auto intervals = static_cast<std::size_t>(std::ceil(total / ds - 1e-9));
  const double h = total / static_cast<double>(intervals);
  const std::size_t count = closed ? intervals : intervals + 1;

  ResampleResult out;
  Path& p = out.path;
  p.closed = closed;
  p.length = total;
  p.s.resize(count);
  p.x.resize(count);
  p.y.resize(count);
  out.source_index.resize(count);
  out.segment.resize(count);
  out.fraction.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double s = (k + 1 == count && !closed) ? total : h * static_cast<double>(k);
    p.s[k] = s;
    const auto [seg, t] = spline.locate(s);
    spline.eval(seg, t, p.x[k], p.y[k]);
    const double frac = t / spline.knot_spacing(seg);
    out.segment[k] = seg;
    out.fraction[k] = frac;
    out.source_index[k] = (frac < 0.5 ? seg : (seg + 1) % xs.size());
  }
  fill_heading_curvature(p, h);
  return out;
}

inline ResampleResult resample_checked(const TrackDefinition& track, double ds) {
  validate(track);
  const auto& sm = track.samples;
  const std::size_t n = sm.size();
  // Centerline self-intersection at input resolution.
  const std::size_t segs = track.closed ? n : n - 1;
  for (std::size_t i = 0; i < segs; ++i) {
    const auto& a = sm[i];
    const auto& b = sm[(i + 1) % n];
    for (std::size_t j = i + 2; j < segs; ++j) {
      if (track.closed && i == 0 && j == segs - 1) continue;
      const auto& c = sm[j];
      const auto& d = sm[(j + 1) % n];
      if (segments_intersect(a.x, a.y, b.x, b.y, c.x, c.y, d.x, d.y))
        throw TrackError(j, "self-intersecting centerline");
    }
  }
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = sm[i].x;
    ys[i] = sm[i].y;
  }
  return resample_points(xs, ys, track.closed, ds);
}

}  // namespace detail

/// Uniform-arc-length resampling of a track centerline with step <= ds.
inline Path resample_track(const TrackDefinition& track, double ds) {
  return detail::resample_checked(track, ds).path;
}

/// Centerline resampling plus widths, rejecting corridors whose boundaries fold
/// over at grid resolution.
inline Corridor resample_corridor(const TrackDefinition& track, double ds) {
  auto r = detail::resample_checked(track, ds);
  const auto& sm = track.samples;
  const std::size_t n = sm.size();
  Corridor c;
  c.w_left.resize(r.path.size());
  c.w_right.resize(r.path.size());
  for (std::size_t k = 0; k < r.path.size(); ++k) {
    const std::size_t i = r.segment[k];
    const std::size_t j = (i + 1) % n;
    const double f = r.fraction[k];
    c.w_left[k] = sm[i].w_left + f * (sm[j].w_left - sm[i].w_left);
    c.w_right[k] = sm[i].w_right + f * (sm[j].w_right - sm[i].w_right);
    const double rho = r.path.rho[k];
    if (rho * c.w_left[k] >= 1.0 || -rho * c.w_right[k] >= 1.0)
      throw TrackError(r.source_index[k], "corridor boundary folds over (width exceeds turn radius)");
  }
  c.center = std::move(r.path);
  return c;
}

// --------------------------------------------------------------------------
// Path queries

inline double segment_length(const Path& p, std::size_t i) {
  if (i + 1 < p.size()) return p.s[i + 1] - p.s[i];
  return p.length - p.s[i];
}

inline double wrap_s(const Path& p, double s) {
  if (!p.closed) return clamp(s, p.s.front(), p.s.back());
  double w = std::fmod(s, p.length);
  if (w < 0.0) w += p.length;
  if (w >= p.length) w = 0.0;
  return w;
}

/// Index of the grid segment containing s and the fraction along it.
inline std::pair<std::size_t, double> locate(const Path& p, double s) {
  s = wrap_s(p, s);
  const std::size_t n = p.size();
  auto it = std::upper_bound(p.s.begin(), p.s.end(), s);
  std::size_t i = it == p.s.begin() ? 0 : static_cast<std::size_t>(it - p.s.begin()) - 1;
  if (!p.closed && i + 1 >= n) i = n - 2;
  const double len = segment_length(p, i);
  const double f = len > 0.0 ? clamp((s - p.s[i]) / len, 0.0, 1.0) : 0.0;
  return {i, f};
}

inline PoseCurv pose_at(const Path& p, double s) {
  const auto [i, f] = locate(p, s);
  const std::size_t j = (i + 1) % p.size();
  PoseCurv out;
  out.x = p.x[i] + f * (p.x[j] - p.x[i]);
  out.y = p.y[i] + f * (p.y[j] - p.y[i]);
  out.psi = wrap_angle(p.psi[i] + f * wrap_angle(p.psi[j] - p.psi[i]));
  out.rho = p.rho[i] + f * (p.rho[j] - p.rho[i]);
  return out;
}

inline double curvature_at(const Path& p, double s) {
  const auto [i, f] = locate(p, s);
  const std::size_t j = (i + 1) % p.size();
  return p.rho[i] + f * (p.rho[j] - p.rho[i]);
}

/// Linear interpolation of any per-sample signal defined on the path grid.
inline double value_at(const Path& p, std::span<const double> values, double s) {
  const auto [i, f] = locate(p, s);
  const std::size_t j = (i + 1) % p.size();
  return values[i] + f * (values[j] - values[i]);
}

/// Closest point on the polyline through the path samples. Signed lateral
/// error is positive to the left of the path direction.
inline Projection project_to_path(const Path& p, double x, double y) {
  const std::size_t n = p.size();
  if (n == 0) throw Error("geometry", "cannot project onto an empty path");
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  if (n == 1) {
    best.s_star = p.s[0];
    best.distance = std::hypot(x - p.x[0], y - p.y[0]);
    best.lateral_error = best.distance;
    return best;
  }
  const std::size_t segs = p.closed ? n : n - 1;
  for (std::size_t i = 0; i < segs; ++i) {
    const std::size_t j = (i + 1) % n;
    const double ex = p.x[j] - p.x[i];
    const double ey = p.y[j] - p.y[i];
    const double len2 = ex * ex + ey * ey;
    double u = len2 > 0.0 ? ((x - p.x[i]) * ex + (y - p.y[i]) * ey) / len2 : 0.0;
    u = clamp(u, 0.0, 1.0);
    const double fx = p.x[i] + u * ex;
    const double fy = p.y[i] + u * ey;
    const double d = std::hypot(x - fx, y - fy);
    if (d < best.distance) {
      best.distance = d;
      best.s_star = p.s[i] + u * segment_length(p, i);
      const double cross = ex * (y - fy) - ey * (x - fx);
      best.lateral_error = cross >= 0.0 ? d : -d;
    }
  }
  if (p.closed && best.s_star >= p.length) best.s_star -= p.length;
  return best;
}

/// Projection restricted to the segments within +-window of arc length around
/// s_hint. Used for per-tick tracking, where the previous projection is known
/// and a global search could jump to a neighbouring part of the track.
inline Projection project_near(const Path& p, double x, double y, double s_hint, double window) {
  const std::size_t n = p.size();
  if (n < 2 || (p.closed && 2.0 * window >= p.length)) return project_to_path(p, x, y);
  const std::size_t segs = p.closed ? n : n - 1;
  const double step = p.length / static_cast<double>(segs);
  const auto span = static_cast<std::ptrdiff_t>(std::ceil(window / step)) + 1;
  const auto centre = static_cast<std::ptrdiff_t>(locate(p, s_hint).first);
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::ptrdiff_t k = -span; k <= span; ++k) {
    std::ptrdiff_t ii = centre + k;
    if (p.closed) {
      ii %= static_cast<std::ptrdiff_t>(n);
      if (ii < 0) ii += static_cast<std::ptrdiff_t>(n);
    } else if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(segs)) {
      continue;
    }
    const auto i = static_cast<std::size_t>(ii);
    const std::size_t j = (i + 1) % n;
    const double ex = p.x[j] - p.x[i];
    const double ey = p.y[j] - p.y[i];
    const double len2 = ex * ex + ey * ey;
    const double u = len2 > 0.0 ? clamp(((x - p.x[i]) * ex + (y - p.y[i]) * ey) / len2, 0.0, 1.0) : 0.0;
    const double fx = p.x[i] + u * ex;
    const double fy = p.y[i] + u * ey;
    const double d = std::hypot(x - fx, y - fy);
    if (d < best.distance) {
      best.distance = d;
      best.s_star = p.s[i] + u * segment_length(p, i);
      const double cross = ex * (y - fy) - ey * (x - fx);
      best.lateral_error = cross >= 0.0 ? d : -d;
    }
  }
  if (p.closed && best.s_star >= p.length) best.s_star -= p.length;
  return best;
}

}  // namespace racestack::geometry
