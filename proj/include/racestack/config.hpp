#pragma once

// JSON run configurations shared by the command-line tool and the acceptance
// checks. Relative paths inside a config file resolve against the directory
// holding that file.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "racestack/bench.hpp"
#include "racestack/common.hpp"
#include "racestack/control.hpp"
#include "racestack/geometry.hpp"
#include "racestack/ggv.hpp"
#include "racestack/msnn.hpp"
#include "racestack/raceline.hpp"
#include "racestack/sim.hpp"
#include "racestack/tracks.hpp"

namespace racestack::config {

namespace fs = std::filesystem;
using nlohmann::json;

struct Document {
  json j;
  fs::path dir;  // base for relative paths

  std::string path(const std::string& key) const { return resolve(j.at(key).get<std::string>()); }
  std::string resolve(const std::string& p) const {
    const fs::path q(p);
    return (q.is_absolute() ? q : dir / q).lexically_normal().string();
  }
};

inline Document load(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw Error("config", "cannot open config file " + filename);
  Document d;
  try {
    in >> d.j;
  } catch (const json::exception& e) {
    throw Error("config", "cannot parse " + filename + ": " + e.what());
  }
  if (!d.j.is_object()) throw Error("config", filename + " must hold a JSON object");
  d.dir = fs::absolute(filename).parent_path();
  return d;
}

// Wraps json access errors (missing keys, wrong types) in the project error.
template <class F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error("config", what + ": " + e.what());
  }
}

inline sim::PlantConfig plant_from(const json& j) {
  sim::PlantConfig c;
  if (j.is_null()) return c;
  return guarded("plant", [&] {
    c.wheelbase = j.value("wheelbase", c.wheelbase);
    c.front_share = j.value("front_share", c.front_share);
    c.mass = j.value("mass", c.mass);
    c.yaw_inertia = j.value("yaw_inertia", c.yaw_inertia);
    c.cf = j.value("cornering_stiffness_front", c.cf);
    c.cr = j.value("cornering_stiffness_rear", c.cr);
    c.steer_lag = j.value("steer_lag", c.steer_lag);
    c.steer_delay = j.value("steer_delay", c.steer_delay);
    c.steer_range = j.value("steer_range", c.steer_range);
    c.speed_lag = j.value("speed_lag", c.speed_lag);
    c.accel_cap = j.value("accel_cap", c.accel_cap);
    c.decel_cap = j.value("decel_cap", c.decel_cap);
    c.tick_rate = j.value("tick_rate", c.tick_rate);
    c.substeps = j.value("substeps", c.substeps);
    c.validate();
    return c;
  });
}

inline control::LookaheadSchedule schedule_from(const json& j, control::LookaheadSchedule fallback) {
  if (j.is_null()) return fallback;
  control::LookaheadSchedule s{j.at("v").get<std::vector<double>>(), j.at("ld").get<std::vector<double>>()};
  s.validate();
  return s;
}

/// Stack options that do not vary across an ablation grid. The grid fills in
/// controller, MS-NN, replanning and envelope per cell.
inline sim::StackConfig stack_from(const Document& d, const json& j) {
  sim::StackConfig s;
  if (j.is_null()) return s;
  return guarded("stack", [&] {
    if (j.contains("controller")) s.controller = control::tracker_from_string(j.at("controller").get<std::string>());
    s.fbga = j.value("fbga", s.fbga);
    if (j.contains("msnn") && !j.at("msnn").is_null()) s.msnn = msnn::read_model(d.resolve(j.at("msnn").get<std::string>()));
    if (j.contains("ggv")) s.ggv = ggv::read_preset(d.resolve(j.at("ggv").get<std::string>()));
    if (j.contains("lookahead")) {
      const json& la = j.at("lookahead");
      s.pp_schedule = schedule_from(la.value("PP", json()), s.pp_schedule);
      s.cl_schedule = schedule_from(la.value("CL", json()), s.cl_schedule);
      s.pp_msnn_schedule = schedule_from(la.value("PP+MSNN", json()), s.pp_msnn_schedule);
      s.cl_msnn_schedule = schedule_from(la.value("CL+MSNN", json()), s.cl_msnn_schedule);
    }
    if (j.contains("cl_start")) {
      const auto v = j.at("cl_start").get<std::string>();
      if (v == "measured")
        s.cl_start = control::StartCurvature::Measured;
      else if (v == "commanded")
        s.cl_start = control::StartCurvature::Commanded;
      else
        throw Error("config", "cl_start must be 'measured' or 'commanded'");
    }
    s.steer_preview = j.value("steer_preview", s.steer_preview);
    s.reference_ds = j.value("reference_ds", s.reference_ds);
    s.planner_horizon = j.value("planner_horizon", s.planner_horizon);
    s.footprint_radius = j.value("footprint_radius", s.footprint_radius);
    s.pose_noise = j.value("pose_noise", s.pose_noise);
    s.time_limit = j.value("time_limit", s.time_limit);
    return s;
  });
}

inline geometry::TrackDefinition track_from(const Document& d) {
  const std::string key = guarded("track", [&] { return d.j.at("track").get<std::string>(); });
  // Built-in layouts are available by name; anything else is a file.
  if (key == "builtin:A") return geometry::make_track_a();
  if (key == "builtin:B") return geometry::make_track_b();
  return geometry::read_track(d.resolve(key));
}

/// The raceline named by `raceline` if present, otherwise one generated from
/// the track and envelope with the configured margin.
inline raceline::Raceline raceline_from(const Document& d, const json& j, const geometry::TrackDefinition& track,
                                        const ggv::GgvDiagram& g) {
  if (j.contains("raceline")) return raceline::read_raceline(d.resolve(j.at("raceline").get<std::string>()));
  const double margin = d.j.value("raceline_margin", 0.35);
  return raceline::generate_raceline(track, g, margin);
}

inline std::uint64_t seed_from(const Document& d, std::optional<std::uint64_t> override_seed) {
  if (override_seed) return *override_seed;
  return guarded("seed", [&] { return d.j.value("seed", std::uint64_t{1}); });
}

inline std::size_t laps_from(const Document& d, std::optional<std::size_t> override_laps, std::size_t fallback) {
  if (override_laps) return *override_laps;
  return guarded("laps", [&] { return d.j.value("laps", fallback); });
}

/// Everything an ablation grid needs, loaded from a config such as
///   { "track": "...", "presets": [{"name": "...", "ggv": "..."}],
///     "controllers": ["PP", "CL"], "msnn": [false, true], "fbga": [false, true],
///     "model": "...", "laps": 3, "seed": 1, "plant": {...}, "stack": {...} }
inline bench::AblationSetup ablation_from(const Document& d, std::optional<std::uint64_t> seed,
                                          std::optional<std::size_t> laps) {
  bench::AblationSetup s;
  s.track = track_from(d);
  guarded("ablation", [&] {
    s.plant = plant_from(d.j.value("plant", json()));
    s.stack = stack_from(d, d.j.value("stack", json()));
    for (const auto& p : d.j.at("presets")) {
      const auto g = ggv::read_preset(d.resolve(p.at("ggv").get<std::string>()));
      s.presets.push_back({p.at("name").get<std::string>(), g, raceline_from(d, p, s.track, g)});
    }
    if (d.j.contains("controllers")) {
      s.controllers.clear();
      for (const auto& c : d.j.at("controllers")) s.controllers.push_back(control::tracker_from_string(c.get<std::string>()));
    }
    if (d.j.contains("msnn")) s.msnn = d.j.at("msnn").get<std::vector<bool>>();
    if (d.j.contains("fbga")) s.fbga = d.j.at("fbga").get<std::vector<bool>>();
    if (d.j.contains("model")) s.model = msnn::read_model(d.path("model"));
    return 0;
  });
  if (s.presets.empty()) throw Error("config", "ablation needs at least one preset");
  s.laps = laps_from(d, laps, 3);
  s.seed = seed_from(d, seed);
  return s;
}

}  // namespace racestack::config
