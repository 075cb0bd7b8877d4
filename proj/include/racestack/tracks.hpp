#pragma once

#include <cmath>

#include "racestack/common.hpp"
#include "racestack/geometry.hpp"

namespace racestack::geometry {

/// Stadium layout (two straights joined by semicircles), traversed
/// counter-clockwise starting at the middle of the lower straight. An optional
/// inward Gaussian bump on the upper straight adds an extra S-turn.
struct StadiumLayout {
  double straight = 4.2876;  // straight length, m
  double radius = 1.5;       // semicircle radius, m
  double bump_height = 0.0;  // inward bump amplitude on the upper straight, m
  double bump_sigma = 1.0;   // bump width, m
  double width_mean = 1.85;  // total corridor width, m
  double width_swing = 0.25; // +/- variation of the total width, m
  double spacing = 0.1;      // sample spacing along the layout parameter, m

  double parameter_length() const { return 2.0 * straight + 2.0 * kPi * radius; }
};

inline TrackDefinition make_stadium_track(const StadiumLayout& lay) {
  const double Ls = lay.straight;
  const double R = lay.radius;
  const double L = lay.parameter_length();
  const auto n = static_cast<std::size_t>(std::round(L / lay.spacing));
  TrackDefinition track;
  track.closed = true;
  for (std::size_t k = 0; k < n; ++k) {
    const double u = L * static_cast<double>(k) / static_cast<double>(n);
    double x = 0, y = 0;
    if (u < Ls / 2) {
      x = u;
      y = -R;
    } else if (u < Ls / 2 + kPi * R) {
      const double phi = (u - Ls / 2) / R;
      x = Ls / 2 + R * std::sin(phi);
      y = -R * std::cos(phi);
    } else if (u < 1.5 * Ls + kPi * R) {
      const double v = u - Ls / 2 - kPi * R;
      x = Ls / 2 - v;
      y = R - lay.bump_height * std::exp(-square((v - Ls / 2) / lay.bump_sigma));
    } else if (u < 1.5 * Ls + 2 * kPi * R) {
      const double phi = (u - 1.5 * Ls - kPi * R) / R;
      x = -Ls / 2 - R * std::sin(phi);
      y = R * std::cos(phi);
    } else {
      x = -Ls / 2 + (u - 1.5 * Ls - 2 * kPi * R);
      y = -R;
    }
    const double w = lay.width_mean + lay.width_swing * std::cos(4.0 * kPi * u / L);
    track.samples.push_back({x, y, w / 2.0, w / 2.0});
  }
  return track;
}

/// Near-oval layout, about 18 m long and 1.6-2.1 m wide.
inline TrackDefinition make_track_a() { return make_stadium_track(StadiumLayout{}); }

/// Longer oval with an additional S-turn on the back straight.
inline TrackDefinition make_track_b() {
  StadiumLayout lay;
  lay.straight = 5.0;
  lay.bump_height = 0.4;
  lay.bump_sigma = 1.0;
  lay.width_mean = 1.8;
  lay.width_swing = 0.2;
  return make_stadium_track(lay);
}

}  // namespace racestack::geometry
