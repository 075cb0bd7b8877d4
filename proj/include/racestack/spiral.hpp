#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "racestack/common.hpp"
#include "racestack/geometry.hpp"
#include "racestack/quadrature.hpp"

namespace racestack::geometry {

/// Planar curve with cubic curvature in arc length:
///   kappa(s) = kappa0 + b s + c s^2 + d s^3,  s in [0, length].
struct Spiral {
  double x0 = 0.0;
  double y0 = 0.0;
  double psi0 = 0.0;
  double kappa0 = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double length = 0.0;

  double curvature(double s) const { return kappa0 + s * (b + s * (c + s * d)); }
  double curvature_rate(double s) const { return b + s * (2.0 * c + 3.0 * d * s); }
  double heading(double s) const {
    return psi0 + s * (kappa0 + s * (b / 2.0 + s * (c / 3.0 + s * d / 4.0)));
  }

  /// Pose at arc length s, integrating (cos psi, sin psi) with Gauss-Legendre
  /// panels of 0.5 m.
  PoseCurv evaluate(double s) const {
    const auto& gl = gauss_legendre<16>();
    const int panels = std::max(1, static_cast<int>(std::ceil(s / 0.5)));
    const double hw = 0.5 * s / panels;
    double cx = 0.0, sy = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double mid = (2 * p + 1) * hw;
      for (std::size_t k = 0; k < 16; ++k) {
        const double u = mid + hw * gl.nodes[k];
        const double psi = heading(u);
        cx += gl.weights[k] * std::cos(psi);
        sy += gl.weights[k] * std::sin(psi);
      }
    }
    return {x0 + hw * cx, y0 + hw * sy, wrap_angle(heading(s)), curvature(s)};
  }
};

struct SpiralOptions {
  int max_iterations = 50;
  double tolerance = 1e-10;
};

/// Outcome of a G2 fit. On failure `spiral` holds the last iterate and
/// `residuals` its endpoint errors (x, y, psi, rho).
struct SpiralFit {
  bool converged = false;
  Spiral spiral;
  std::array<double, 4> residuals{};
  int iterations = 0;

  double max_residual() const {
    double m = 0.0;
    for (double r : residuals) m = std::max(m, std::abs(r));
    return m;
  }
};

namespace detail {

struct SpiralEval {
  std::array<double, 4> r{};
  std::array<std::array<double, 4>, 4> J{};
};

// Endpoint residuals and Jacobian w.r.t. (b, c, d, S).
inline SpiralEval spiral_residuals(const Spiral& sp, const PoseCurv& end, double psi_end_unwrapped) {
  const auto& gl = gauss_legendre<16>();
  const double S = sp.length;
  const int panels = std::max(1, static_cast<int>(std::ceil(S / 0.5)));
  const double hw = 0.5 * S / panels;
  double ix = 0, iy = 0;
  double xs2 = 0, xs3 = 0, xs4 = 0;  // integrals of sin(psi) s^k / k
  double yc2 = 0, yc3 = 0, yc4 = 0;  // integrals of cos(psi) s^k / k
  for (int p = 0; p < panels; ++p) {
    const double mid = (2 * p + 1) * hw;
    for (std::size_t k = 0; k < 16; ++k) {
      const double u = mid + hw * gl.nodes[k];
      const double w = gl.weights[k];
      const double psi = sp.heading(u);
      const double cs = std::cos(psi);
      const double sn = std::sin(psi);
      const double u2 = u * u / 2.0;
      const double u3 = u * u * u / 3.0;
      const double u4 = u * u * u * u / 4.0;
      ix += w * cs;
      iy += w * sn;
      xs2 += w * sn * u2;
      xs3 += w * sn * u3;
      xs4 += w * sn * u4;
      yc2 += w * cs * u2;
      yc3 += w * cs * u3;
      yc4 += w * cs * u4;
    }
  }
  SpiralEval e;
  const double psiS = sp.heading(S);
  e.r[0] = sp.x0 + hw * ix - end.x;
  e.r[1] = sp.y0 + hw * iy - end.y;
  e.r[2] = psiS - psi_end_unwrapped;
  e.r[3] = sp.curvature(S) - end.rho;
  e.J[0] = {-hw * xs2, -hw * xs3, -hw * xs4, std::cos(psiS)};
  e.J[1] = {hw * yc2, hw * yc3, hw * yc4, std::sin(psiS)};
  e.J[2] = {S * S / 2.0, S * S * S / 3.0, S * S * S * S / 4.0, sp.curvature(S)};
  e.J[3] = {S, S * S, S * S * S, sp.curvature_rate(S)};
  return e;
}

inline bool solve4(std::array<std::array<double, 4>, 4> A, std::array<double, 4> b,
                   std::array<double, 4>& x) {
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    if (std::abs(A[piv][col]) < 1e-300) return false;
    std::swap(A[piv], A[col]);
    std::swap(b[piv], b[col]);
    for (int r = col + 1; r < 4; ++r) {
      const double f = A[r][col] / A[col][col];
      for (int k = col; k < 4; ++k) A[r][k] -= f * A[col][k];
      b[r] -= f * b[col];
    }
  }
  for (int r = 3; r >= 0; --r) {
    double acc = b[r];
    for (int k = r + 1; k < 4; ++k) acc -= A[r][k] * x[k];
    x[r] = acc / A[r][r];
  }
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

inline double norm(const std::array<double, 4>& r) {
  return std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + r[3] * r[3]);
}

}  // namespace detail

/// Connects `start` to `end` with a single cubic-curvature spiral matching
/// position, heading and curvature at both ends (damped Newton shooting on
/// b, c, d and the free length).
inline SpiralFit fit_g2_spiral(const PoseCurv& start, const PoseCurv& end, const SpiralOptions& opt = {}) {
  const double chord = std::hypot(end.x - start.x, end.y - start.y);
  if (!(chord > 1e-9)) throw Error("spiral", "start and end positions coincide");
  const double dpsi = wrap_angle(end.psi - start.psi);
  if (std::abs(dpsi) >= kPi) throw Error("spiral", "heading change must be below pi");
  const double psi_end = start.psi + dpsi;

  SpiralFit fit;
  Spiral& sp = fit.spiral;
  sp.x0 = start.x;
  sp.y0 = start.y;
  sp.psi0 = start.psi;
  sp.kappa0 = start.rho;
  sp.length = chord;
  sp.b = (end.rho - start.rho) / chord;

  auto ev = detail::spiral_residuals(sp, end, psi_end);
  double rn = detail::norm(ev.r);
  for (int it = 0; it < opt.max_iterations; ++it) {
    fit.iterations = it;
    double rmax = 0.0;
    for (double v : ev.r) rmax = std::max(rmax, std::abs(v));
    if (rmax <= opt.tolerance) {
      fit.converged = true;
      break;
    }
    std::array<double, 4> rhs{-ev.r[0], -ev.r[1], -ev.r[2], -ev.r[3]};
    std::array<double, 4> step{};
    if (!detail::solve4(ev.J, rhs, step)) break;
    double alpha = 1.0;
    bool improved = false;
    for (int h = 0; h < 30; ++h) {
      Spiral trial = sp;
      trial.b += alpha * step[0];
      trial.c += alpha * step[1];
      trial.d += alpha * step[2];
      trial.length += alpha * step[3];
      if (trial.length > 1e-6 && trial.length < 50.0 * chord) {
        auto tev = detail::spiral_residuals(trial, end, psi_end);
        const double tn = detail::norm(tev.r);
        if (std::isfinite(tn) && tn < rn) {
          sp = trial;
          ev = tev;
          rn = tn;
          improved = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!improved) break;
  }
  if (!fit.converged) {
    double rmax = 0.0;
    for (double v : ev.r) rmax = std::max(rmax, std::abs(v));
    fit.converged = rmax <= opt.tolerance;
  }
  fit.residuals = ev.r;
  return fit;
}

/// Samples the spiral as a Path on a grid of step <= ds.
inline Path sample_spiral(const Spiral& sp, double ds) {
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(sp.length / ds - 1e-9)));
  const double h = sp.length / static_cast<double>(n);
  Path p;
  p.closed = false;
  p.length = sp.length;
  for (std::size_t k = 0; k <= n; ++k) {
    const double s = h * static_cast<double>(k);
    const PoseCurv q = sp.evaluate(s);
    p.s.push_back(s);
    p.x.push_back(q.x);
    p.y.push_back(q.y);
    p.psi.push_back(q.psi);
    p.rho.push_back(q.rho);
  }
  return p;
}

/// Uniform curvature samples on [0, horizon]. Beyond the spiral end the
/// optional continuation (argument: distance past the end) supplies curvature;
/// without one the end curvature is held.
inline std::vector<double> spiral_curvature_profile(
    const Spiral& sp, double horizon, double ds,
    const std::function<double(double)>& continuation = {}) {
  const auto n = static_cast<std::size_t>(std::floor(horizon / ds + 1e-9));
  std::vector<double> out(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double s = ds * static_cast<double>(k);
    if (s <= sp.length)
      out[k] = sp.curvature(s);
    else
      out[k] = continuation ? continuation(s - sp.length) : sp.curvature(sp.length);
  }
  return out;
}

}  // namespace racestack::geometry
