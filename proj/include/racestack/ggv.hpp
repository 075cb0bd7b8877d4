#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "racestack/common.hpp"

namespace racestack::ggv {

struct GgvKnot {
  double v = 0.0;
  double ay_max = 0.0;
  double ax_acc_max = 0.0;
  double ax_dec_max = 0.0;  // positive magnitude
};

struct Limits {
  double ay_max = 0.0;
  double ax_acc_max = 0.0;
  double ax_dec_max = 0.0;
};

struct AvailableAx {
  double ax_acc = 0.0;
  double ax_dec = 0.0;  // positive magnitude
};

/// Speed-dependent superellipse acceleration envelope with a top-speed cap.
/// Limits are linear between knots and held constant beyond the table.
struct GgvDiagram {
  std::string name;
  std::vector<GgvKnot> knots;
  double v_max = 0.0;
  double shape_exponent = 2.0;

  Limits limits(double v) const {
    if (knots.size() == 1 || v <= knots.front().v)
      return {knots.front().ay_max, knots.front().ax_acc_max, knots.front().ax_dec_max};
    if (v >= knots.back().v)
      return {knots.back().ay_max, knots.back().ax_acc_max, knots.back().ax_dec_max};
    std::size_t hi = 1;
    while (knots[hi].v < v) ++hi;
    const auto& a = knots[hi - 1];
    const auto& b = knots[hi];
    const double t = (v - a.v) / (b.v - a.v);
    return {a.ay_max + t * (b.ay_max - a.ay_max), a.ax_acc_max + t * (b.ax_acc_max - a.ax_acc_max),
            a.ax_dec_max + t * (b.ax_dec_max - a.ax_dec_max)};
  }

  double ay_max(double v) const { return limits(v).ay_max; }
};

inline void validate(const GgvDiagram& g) {
  if (g.knots.empty()) throw Error("ggv", "envelope needs at least one speed knot");
  if (g.knots.front().v != 0.0) throw Error("ggv", "first speed knot must be 0");
  for (std::size_t i = 0; i < g.knots.size(); ++i) {
    const auto& k = g.knots[i];
    if (!(k.ay_max > 0.0 && k.ax_acc_max > 0.0 && k.ax_dec_max > 0.0))
      throw Error("ggv", "envelope limits must be strictly positive at knot " + std::to_string(i));
    if (i > 0 && !(k.v > g.knots[i - 1].v))
      throw Error("ggv", "speed knots must be strictly increasing");
  }
  if (!(g.v_max > 0.0)) throw Error("ggv", "v_max must be positive");
  if (!(g.shape_exponent >= 1.0)) throw Error("ggv", "shape exponent must be >= 1");
}

/// Envelope membership with a relative slack.
inline bool contains(const GgvDiagram& g, double v, double ax, double ay, double slack = 0.0) {
  if (v > g.v_max * (1.0 + slack)) return false;
  const Limits lim = g.limits(v);
  const double p = g.shape_exponent;
  const double ax_lim = ax >= 0.0 ? lim.ax_acc_max : lim.ax_dec_max;
  const double lhs = std::pow(std::abs(ax) / ax_lim, p) + std::pow(std::abs(ay) / lim.ay_max, p);
  return lhs <= std::pow(1.0 + slack, p);
}

/// Longitudinal budget left after spending |ay| laterally.
inline AvailableAx available_ax(const GgvDiagram& g, double v, double ay) {
  const Limits lim = g.limits(v);
  const double ratio = std::abs(ay) / lim.ay_max;
  if (ratio >= 1.0) return {0.0, 0.0};
  const double p = g.shape_exponent;
  const double scale = std::pow(std::max(0.0, 1.0 - std::pow(ratio, p)), 1.0 / p);
  return {lim.ax_acc_max * scale, lim.ax_dec_max * scale};
}

/// Largest speed reachable from standstill with v^2 |rho| <= ay_max(v)
/// (first crossing), capped by v_max.
inline double max_cornering_speed(const GgvDiagram& g, double rho) {
  const double k = std::abs(rho);
  if (k == 0.0) return g.v_max;
  const auto infeasible = [&](double v) { return v * v * k > g.ay_max(v); };
  // Walk the piecewise-linear segments upward; bisect inside the first one
  // whose end is infeasible.
  std::vector<double> edges;
  for (const auto& kn : g.knots)
    if (kn.v < g.v_max) edges.push_back(kn.v);
  edges.push_back(g.v_max);
  double lo = 0.0;
  for (std::size_t i = 1; i < edges.size(); ++i) {
    const double hi = edges[i];
    if (infeasible(hi)) {
      double a = lo, b = hi;
      while (b - a > 1e-9) {
        const double m = 0.5 * (a + b);
        (infeasible(m) ? b : a) = m;
      }
      return a;
    }
    lo = hi;
  }
  return g.v_max;
}

/// Returns a copy with all acceleration limits multiplied by `factor`.
inline GgvDiagram scaled(const GgvDiagram& g, double factor) {
  GgvDiagram out = g;
  for (auto& k : out.knots) {
    k.ay_max *= factor;
    k.ax_acc_max *= factor;
    k.ax_dec_max *= factor;
  }
  return out;
}

/// True when every limit of `a` is >= the corresponding limit of `b` at every
/// knot of either table.
inline bool dominates(const GgvDiagram& a, const GgvDiagram& b) {
  if (a.v_max < b.v_max) return false;
  std::vector<double> vs;
  for (const auto& k : a.knots) vs.push_back(k.v);
  for (const auto& k : b.knots) vs.push_back(k.v);
  for (double v : vs) {
    const auto la = a.limits(v);
    const auto lb = b.limits(v);
    if (la.ay_max < lb.ay_max || la.ax_acc_max < lb.ax_acc_max || la.ax_dec_max < lb.ax_dec_max)
      return false;
  }
  return true;
}

/// Conservative elliptical envelope: ay 3.0, ax +/-1.0 m/s^2.
inline GgvDiagram cautious() {
  GgvDiagram g;
  g.name = "cautious";
  g.knots = {{0.0, 3.0, 1.0, 1.0}};
  g.v_max = 5.0;
  g.shape_exponent = 2.0;
  return g;
}

// --------------------------------------------------------------------------
// Preset files (JSON)

inline nlohmann::json to_json(const GgvDiagram& g) {
  nlohmann::json j;
  j["name"] = g.name;
  j["v_max"] = g.v_max;
  j["shape_exponent"] = g.shape_exponent;
  j["speed_knots"] = nlohmann::json::array();
  for (const auto& k : g.knots)
    j["speed_knots"].push_back(
        {{"v", k.v}, {"ay_max", k.ay_max}, {"ax_acc_max", k.ax_acc_max}, {"ax_dec_max", k.ax_dec_max}});
  return j;
}

inline GgvDiagram from_json(const nlohmann::json& j) {
  GgvDiagram g;
  try {
    g.name = j.value("name", std::string{});
    g.v_max = j.at("v_max").get<double>();
    g.shape_exponent = j.value("shape_exponent", 2.0);
    for (const auto& k : j.at("speed_knots"))
      g.knots.push_back({k.at("v").get<double>(), k.at("ay_max").get<double>(),
                         k.at("ax_acc_max").get<double>(), k.at("ax_dec_max").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error("ggv", std::string("malformed envelope preset: ") + e.what());
  }
  validate(g);
  return g;
}

inline GgvDiagram read_preset(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw Error("io", "cannot open envelope preset " + filename);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("ggv", std::string("cannot parse envelope preset: ") + e.what());
  }
  return from_json(j);
}

inline void write_preset(const std::string& filename, const GgvDiagram& g) {
  std::ofstream out(filename);
  if (!out) throw Error("io", "cannot write envelope preset " + filename);
  out << to_json(g).dump(2) << '\n';
}

}  // namespace racestack::ggv
