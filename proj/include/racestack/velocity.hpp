#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "racestack/common.hpp"
#include "racestack/ggv.hpp"

namespace racestack::velocity {

/// Speed and acceleration profile on a uniform arc-length grid. ax[i] is the
/// constant acceleration over cell [s_i, s_{i+1}]; the last entry is 0.
struct SpeedPlan {
  std::vector<double> s;
  std::vector<double> v;
  std::vector<double> ax;
  std::vector<double> ay;
  /// v0 minus the largest feasible initial speed, when v0 had to be clamped.
  double v0_excess = 0.0;
  /// Largest |v_k - v_{k-1}| left by the braking fixed point.
  double fixed_point_residual = 0.0;

  std::size_t size() const { return v.size(); }
};

namespace detail {

// Largest entry speed v at a cell with curvature rho such that braking within
// the envelope over ds reaches v_next:  v^2 <= v_next^2 + 2 dec(v, v^2 rho) ds.
inline double max_entry_speed(const ggv::GgvDiagram& g, double v_next, double rho, double ds,
                              double cap, double& residual) {
  const auto violation = [&](double v) {
    return v * v - v_next * v_next - 2.0 * ggv::available_ax(g, v, v * v * rho).ax_dec * ds;
  };
  // Three fixed-point sweeps seeded with the neighbouring speed.
  double v = std::min(v_next, cap);
  for (int k = 0; k < 3; ++k)
    v = std::min(cap, std::sqrt(v_next * v_next + 2.0 * ggv::available_ax(g, v, v * v * rho).ax_dec * ds));
  const auto defect = [&](double u) {
    return std::abs(std::min(cap, std::sqrt(v_next * v_next +
                                            2.0 * ggv::available_ax(g, u, u * u * rho).ax_dec * ds)) -
                    u);
  };
  residual = defect(v);
  if (violation(v) > 1e-12 || residual > 1e-4) {
    // Near the cornering limit the map is steep and three sweeps may stall or
    // overshoot. The violation is increasing in v, so bisect onto its root.
    double lo = std::min(v_next, cap), hi = cap;
    if (violation(hi) <= 0.0) {
      lo = hi;
    } else {
      for (int k = 0; k < 80 && hi - lo > 1e-14; ++k) {
        const double m = 0.5 * (lo + hi);
        (violation(m) > 0.0 ? hi : lo) = m;
      }
    }
    v = lo;
    residual = defect(v);
  }
  return v;
}

inline double reach_speed(const ggv::GgvDiagram& g, double v, double rho, double ds) {
  return std::sqrt(v * v + 2.0 * ggv::available_ax(g, v, v * v * rho).ax_acc * ds);
}

}  // namespace detail

/// Forward-backward time-optimal speed profile over curvature samples on a
/// uniform grid of step ds: pointwise cornering caps, a backward braking pass
/// from the terminal cap and a forward acceleration pass from v0.
inline SpeedPlan plan_speed(std::span<const double> rho, double ds, double v0, const ggv::GgvDiagram& g,
                            double v_terminal_cap = std::numeric_limits<double>::infinity()) {
  if (!(ds > 0.0)) throw Error("velocity", "grid step must be positive");
  if (rho.empty()) throw Error("velocity", "empty curvature profile");
  if (!(v0 >= 0.0)) throw Error("velocity", "initial speed must be non-negative");
  const std::size_t n = rho.size();
  std::vector<double> cap(n);
  for (std::size_t i = 0; i < n; ++i) cap[i] = ggv::max_cornering_speed(g, rho[i]);

  SpeedPlan plan;
  std::vector<double> vb(n);
  vb[n - 1] = std::min(cap[n - 1], std::max(0.0, v_terminal_cap));
  for (std::size_t i = n - 1; i-- > 0;) {
    double res = 0.0;
    vb[i] = detail::max_entry_speed(g, vb[i + 1], rho[i], ds, cap[i], res);
    plan.fixed_point_residual = std::max(plan.fixed_point_residual, res);
  }

  plan.v.resize(n);
  plan.v[0] = v0;
  if (v0 > vb[0]) {
    plan.v0_excess = v0 - vb[0];
    plan.v[0] = vb[0];
  }
  for (std::size_t i = 0; i + 1 < n; ++i)
    plan.v[i + 1] = std::min(vb[i + 1], detail::reach_speed(g, plan.v[i], rho[i], ds));

  plan.s.resize(n);
  plan.ax.assign(n, 0.0);
  plan.ay.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    plan.s[i] = ds * static_cast<double>(i);
    plan.ay[i] = plan.v[i] * plan.v[i] * rho[i];
    if (i + 1 < n) plan.ax[i] = (plan.v[i + 1] * plan.v[i + 1] - plan.v[i] * plan.v[i]) / (2.0 * ds);
  }
  return plan;
}

/// Time to traverse the grid at constant acceleration per cell.
inline double traversal_time(std::span<const double> v, double ds) {
  double t = 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double sum = v[i] + v[i + 1];
    if (sum <= 0.0) return std::numeric_limits<double>::infinity();
    t += 2.0 * ds / sum;
  }
  return t;
}

inline double traversal_time(const SpeedPlan& plan) {
  const double ds = plan.s.size() > 1 ? plan.s[1] - plan.s[0] : 0.0;
  return traversal_time(plan.v, ds);
}

/// Minimum traversal time by dynamic programming over a position x speed-bin
/// lattice. Each label carries its exact speed. A transition into a bin lands
/// either on the fastest or on the slowest envelope-feasible speed inside it;
/// each bin keeps its quickest label and its slowest label, so the lattice
/// never loses the ability to brake for a later corner. Arrival speeds are
/// clamped to the highest speed from which full braking still respects every
/// later cap, found per station by bisection on a forward braking run.
inline double dp_speed_oracle(std::span<const double> rho, double ds, double v0, const ggv::GgvDiagram& g,
                              std::size_t n_speed_bins,
                              double v_terminal_cap = std::numeric_limits<double>::infinity()) {
  const std::size_t n = rho.size();
  if (n < 2) return 0.0;
  if (n_speed_bins < 2) throw Error("velocity", "need at least two speed bins");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> cap(n);
  double v_hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cap[i] = ggv::max_cornering_speed(g, rho[i]);
    v_hi = std::max(v_hi, cap[i]);
  }
  cap[n - 1] = std::min(cap[n - 1], std::max(0.0, v_terminal_cap));
  v_hi = std::max(v_hi, v0);
  const double width = v_hi / static_cast<double>(n_speed_bins);

  const auto brakes_in_time = [&](std::size_t i, double v) {
    for (std::size_t k = i; k < n; ++k) {
      if (v > cap[k]) return false;
      if (k + 1 == n) break;
      const double dec = ggv::available_ax(g, v, v * v * rho[k]).ax_dec;
      v = std::sqrt(std::max(0.0, v * v - 2.0 * dec * ds));
    }
    return true;
  };
  std::vector<double> v_safe(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lo = 0.0, hi = cap[i];
    if (brakes_in_time(i, hi)) {
      v_safe[i] = hi;
      continue;
    }
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (brakes_in_time(i, mid) ? lo : hi) = mid;
    }
    v_safe[i] = lo;
  }

  const auto bin_of = [&](double v) {
    return std::min(n_speed_bins - 1, static_cast<std::size_t>(std::floor(v / width)));
  };

  struct Label {
    double time = kInf;
    double v = 0.0;
  };
  struct Bin {
    Label fast;  // quickest arrival
    Label slow;  // lowest speed
  };
  const auto offer = [](Bin& bin, double t, double v) {
    if (t < bin.fast.time || (t == bin.fast.time && v > bin.fast.v)) bin.fast = {t, v};
    if (!std::isfinite(bin.slow.time) || v < bin.slow.v || (v == bin.slow.v && t < bin.slow.time))
      bin.slow = {t, v};
  };
  std::vector<Bin> cur(n_speed_bins), next(n_speed_bins);
  {
    const double vs = std::min(v0, v_safe[0]);
    offer(cur[bin_of(vs)], 0.0, vs);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::fill(next.begin(), next.end(), Bin{});
    for (const Bin& bin : cur) {
      for (const Label* lab : {&bin.fast, &bin.slow}) {
        if (!std::isfinite(lab->time)) continue;
        const double va = lab->v;
        const auto room = ggv::available_ax(g, va, va * va * rho[i]);
        const double hi2 = va * va + 2.0 * room.ax_acc * ds;
        const double lo2 = std::max(0.0, va * va - 2.0 * room.ax_dec * ds);
        const double r_hi = std::min(std::sqrt(hi2), v_safe[i + 1]);
        const double r_lo = std::sqrt(lo2);
        if (r_hi < r_lo) continue;
        for (std::size_t b = bin_of(r_lo); b <= bin_of(r_hi); ++b) {
          const double bottom = width * static_cast<double>(b);
          const double top = (b + 1 == n_speed_bins) ? v_hi : width * static_cast<double>(b + 1);
          for (const double vb : {std::min(r_hi, top), std::max(r_lo, bottom)}) {
            if (vb < r_lo || vb > r_hi) continue;
            const double sum = va + vb;
            if (sum <= 0.0) continue;
            offer(next[b], lab->time + 2.0 * ds / sum, vb);
          }
        }
      }
    }
    std::swap(cur, next);
  }
  double best = kInf;
  for (const Bin& bin : cur) best = std::min(best, bin.fast.time);
  return best;
}

}  // namespace racestack::velocity
