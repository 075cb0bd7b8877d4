// racestack: command-line front end for raceline generation, MS-NN training,
// closed-loop runs, ablation grids, envelope expansion and reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "racestack/bench.hpp"
#include "racestack/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace racestack;

namespace {

struct Common {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> laps;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_laps, bool with_jobs) {
  cmd->add_option("--config", c.config, "JSON config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory (created if missing)");
  cmd->add_option("--seed", c.seed, "random seed, overrides the config");
  if (with_laps) cmd->add_option("--laps", c.laps, "number of laps, overrides the config");
  if (with_jobs) cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return fs::path(c.out);
}

std::string file_in(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void print_result(const json& j) { std::cout << j.dump() << std::endl; }

json metrics_json(const bench::RunMetrics& m) {
  json j;
  j["crash"] = m.crash;
  j["partial"] = m.partial;
  j["laps"] = m.lap_times.size();
  j["lap_times_s"] = m.lap_times;
  j["lap_time_s"] = m.lap_time ? json(*m.lap_time) : json(nullptr);
  j["mean_lat_err_m"] = m.mean_lat_err;
  j["max_lat_err_m"] = m.max_lat_err;
  j["rms_steer_rate_rad_s"] = m.rms_steering_rate;
  j["max_v_m_s"] = m.max_v;
  j["max_ax_m_s2"] = m.max_ax;
  j["max_ay_m_s2"] = m.max_ay;
  j["cpu_total_mean_us"] = m.cpu_total_mean_us;
  return j;
}

// ---- raceline ---------------------------------------------------------------

void cmd_raceline(const Common& c) {
  const auto d = config::load(c.config);
  const auto track = config::track_from(d);
  const auto g = ggv::read_preset(d.path("ggv"));
  const double margin = d.j.value("raceline_margin", 0.35);
  const auto rl = raceline::generate_raceline(track, g, margin);
  const auto dir = out_dir(c);
  const std::string file = file_in(dir, d.j.value("output", std::string("raceline.csv")));
  raceline::write_raceline(file, rl);
  print_result({{"raceline", file}, {"length_m", rl.path.length}, {"points", rl.size()},
                {"lap_time_s", raceline::lap_time(rl)}});
}

// ---- train ------------------------------------------------------------------

msnn::TrainConfig train_config_from(const json& j, std::optional<std::uint64_t> seed) {
  msnn::TrainConfig t;
  if (!j.is_null()) {
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.max_epochs = j.value("max_epochs", t.max_epochs);
    t.patience = j.value("patience", t.patience);
    t.seed = j.value("seed", t.seed);
  }
  if (seed) t.seed = *seed;
  return t;
}

void cmd_train(const Common& c) {
  const auto d = config::load(c.config);
  const auto dir = out_dir(c);
  const json& j = d.j;
  msnn::DatasetFile data;
  if (j.contains("dataset")) {
    data = msnn::read_dataset(d.path("dataset"));
  } else {
    // Extract windows from a closed-loop trace, optionally cut to its first
    // max_seconds, and keep the dataset next to the model.
    sim::RunTrace tr = sim::read_trace(d.path("trace"));
    const double keep = j.value("max_seconds", 0.0);
    if (keep > 0.0)
      while (!tr.rows.empty() && tr.rows.back().t - tr.rows.front().t > keep) tr.rows.pop_back();
    bench::ExtractOptions opt;
    opt.w = j.value("w", opt.w);
    opt.period = j.value("period", opt.period);
    opt.split_ratio = j.value("split_ratio", opt.split_ratio);
    opt.stride = j.value("stride", opt.stride);
    const auto split = bench::extract_dataset(tr, opt);
    data = {split.train, split.val, opt.period};
    std::ofstream ds(file_in(dir, "dataset.csv"));
    if (!ds) throw Error("io", "cannot write " + file_in(dir, "dataset.csv"));
    msnn::write_dataset(ds, data.train, data.val, data.period);
  }
  if (data.train.empty() || data.val.empty()) throw Error("train", "dataset needs both training and validation windows");
  const std::size_t w = data.train.front().window.size() - 1;
  const auto channels = j.value("channels", std::size_t{1});
  const double v_lo = j.value("v_lo", 1.0), v_hi = j.value("v_hi", 3.5);
  const double wheelbase = config::plant_from(j.value("plant", json())).wheelbase;
  const auto tc = train_config_from(j.value("training", json()), c.seed);
  const auto variants = j.value("variants", std::vector<std::string>{"extended"});
  const std::string hash = msnn::dataset_hash(data.train, data.val, data.period);

  json result;
  std::ostringstream table;
  table << "variant,train_rmse_rad,train_fvu,val_rmse_rad,val_fvu,val_aic,parameters,best_epoch,implied_delay_s\n";
  for (const auto& name : variants) {
    const auto var = msnn::variant_from_string(name);
    const auto init = msnn::make_model(var, w, channels, v_lo, v_hi, data.period, wheelbase);
    const auto res = msnn::train(init, data.train, data.val, tc);
    const auto et = msnn::evaluate(res.model, data.train);
    const auto ev = msnn::evaluate(res.model, data.val);
    const auto aic = msnn::aic(res.model, data.val);
    const auto wr = msnn::interpret_weights(res.model);
    const std::string file = file_in(dir, "msnn_" + name + ".json");
    msnn::write_model(file, res.model, {tc.seed, hash, data.train.size(), data.val.size()});
    std::ofstream hist(file_in(dir, "history_" + name + ".csv"));
    hist << "epoch,train_rmse_rad,val_rmse_rad\n";
    for (std::size_t e = 0; e < res.history.val_rmse.size(); ++e)
      hist << e + 1 << ',' << format_double(res.history.train_rmse[e]) << ','
           << format_double(res.history.val_rmse[e]) << '\n';
    table << name << ',' << format_double(et.rmse) << ',' << format_double(et.fvu) << ',' << format_double(ev.rmse)
          << ',' << format_double(ev.fvu) << ',' << format_double(aic.value) << ',' << res.model.parameter_count()
          << ',' << res.history.best_epoch << ',' << format_double(wr.implied_delay.front()) << '\n';
    result[name] = {{"model", file},
                    {"val_rmse_rad", ev.rmse},
                    {"val_fvu", ev.fvu_defined ? json(ev.fvu) : json(nullptr)},
                    {"implied_delay_s", wr.implied_delay},
                    {"best_epoch", res.history.best_epoch}};
  }
  bench::write_text(file_in(dir, "msnn_comparison.csv"), table.str());
  result["train_windows"] = data.train.size();
  result["val_windows"] = data.val.size();
  print_result(result);
}

// ---- race -------------------------------------------------------------------

void cmd_race(const Common& c) {
  const auto d = config::load(c.config);
  const auto track = config::track_from(d);
  const auto plant = config::plant_from(d.j.value("plant", json()));
  const auto stack = config::stack_from(d, d.j.value("stack", json()));
  const auto rl = config::raceline_from(d, d.j, track, stack.ggv);
  const auto laps = config::laps_from(d, c.laps, 3);
  const auto tr = sim::run_closed_loop(rl, track, stack, plant, laps, config::seed_from(d, c.seed));
  const auto dir = out_dir(c);
  sim::write_trace(file_in(dir, "trace.csv"), tr);
  json result = tr.rows.empty() ? json{{"rows", 0}} : metrics_json(bench::compute_metrics(tr, rl));
  result["trace"] = file_in(dir, "trace.csv");
  bench::write_text(file_in(dir, "metrics.json"), result.dump(2) + "\n");
  print_result(result);
}

// ---- ablate -----------------------------------------------------------------

void cmd_ablate(const Common& c) {
  const auto d = config::load(c.config);
  const auto setup = config::ablation_from(d, c.seed, c.laps);
  const auto rows = bench::run_ablation(setup, c.jobs);
  const auto dir = out_dir(c);
  fs::create_directories(dir / "traces");
  for (const auto& r : rows) {
    const std::string name = r.cell.preset + "_" + control::to_string(r.cell.controller) + (r.cell.msnn ? "_msnn" : "") +
                             (r.cell.fbga ? "_fbga" : "") + ".csv";
    sim::write_trace((dir / "traces" / name).string(), r.trace);
  }
  bench::write_text(file_in(dir, "summary.csv"), bench::summary_table(rows));
  bench::write_text(file_in(dir, "timing.csv"), bench::timing_table(rows));
  std::size_t crashes = 0;
  for (const auto& r : rows) crashes += r.metrics.crash ? 1 : 0;
  print_result({{"runs", rows.size()}, {"crashes", crashes}, {"summary", file_in(dir, "summary.csv")}});
}

// ---- expand-ggv ---------------------------------------------------------------

void cmd_expand(const Common& c) {
  const auto d = config::load(c.config);
  const auto track = config::track_from(d);
  const auto plant = config::plant_from(d.j.value("plant", json()));
  const auto stack = config::stack_from(d, d.j.value("stack", json()));
  const auto base = ggv::read_preset(d.path("base"));
  bench::ExpansionOptions opt;
  config::guarded("expand-ggv", [&] {
    opt.step = d.j.value("step", opt.step);
    opt.max_iterations = d.j.value("max_iterations", opt.max_iterations);
    opt.raceline_margin = d.j.value("raceline_margin", opt.raceline_margin);
    if (d.j.contains("feasibility")) {
      const auto& f = d.j.at("feasibility");
      opt.feasibility.lat_share = f.value("lat_share", opt.feasibility.lat_share);
      opt.feasibility.max_speed_error = f.value("max_speed_error", opt.feasibility.max_speed_error);
    }
    return 0;
  });
  opt.laps = config::laps_from(d, c.laps, opt.laps);
  opt.seed = config::seed_from(d, c.seed);
  auto res = bench::expand_ggv(base, track, stack, plant, opt);
  const std::string name = d.j.value("name", std::string("expanded"));
  res.preset.name = name;
  const auto dir = out_dir(c);
  ggv::write_preset(file_in(dir, name + ".json"), res.preset);
  raceline::write_raceline(file_in(dir, name + "_raceline.csv"), res.raceline);
  std::ostringstream log;
  log << "factor,feasible,reason,lap_time_s,max_lat_err_m,max_speed_err_m_s\n";
  for (const auto& s : res.log)
    log << format_double(s.factor) << ',' << (s.feasible ? "yes" : "no") << ',' << s.reason << ','
        << (s.lap_time ? format_double(*s.lap_time) : std::string()) << ',' << format_double(s.max_lat_err) << ','
        << format_double(s.max_speed_error) << '\n';
  bench::write_text(file_in(dir, name + "_search.csv"), log.str());
  print_result({{"preset", file_in(dir, name + ".json")}, {"factor", res.factor}, {"iterations", res.log.size()}});
}

// ---- report -----------------------------------------------------------------

void cmd_report(const Common& c) {
  const auto d = config::load(c.config);
  const auto dir = out_dir(c);
  const raceline::Raceline rl = raceline::read_raceline(d.path("raceline"));
  struct Item {
    std::string label;
    sim::RunTrace trace;
    bench::RunMetrics metrics;
  };
  std::vector<Item> items;
  config::guarded("report", [&] {
    for (const auto& t : d.j.at("traces")) {
      Item it;
      it.label = t.at("label").get<std::string>();
      it.trace = sim::read_trace(d.resolve(t.at("file").get<std::string>()));
      it.metrics = bench::compute_metrics(it.trace, rl);
      items.push_back(std::move(it));
    }
    return 0;
  });
  if (items.empty()) throw Error("report", "no traces listed");

  std::ostringstream table;
  table << "run,crash,laps,lap_time_s,mean_lat_err_m,max_lat_err_m,rms_steer_rate_rad_s,max_v_m_s,max_ax_m_s2,"
           "max_ay_m_s2,cpu_controller_mean_us,cpu_planner_mean_us,cpu_msnn_mean_us,cpu_total_p99_us\n";
  for (const auto& it : items) {
    const auto& m = it.metrics;
    std::vector<double> tot;
    for (const auto& r : it.trace.rows) tot.push_back(r.cpu_us_controller + r.cpu_us_planner + r.cpu_us_msnn);
    table << it.label << ',' << (m.crash ? "yes" : "no") << ',' << m.lap_times.size() << ','
          << (m.lap_time ? format_double(*m.lap_time) : std::string("crash")) << ',' << format_double(m.mean_lat_err)
          << ',' << format_double(m.max_lat_err) << ',' << format_double(m.rms_steering_rate) << ','
          << format_double(m.max_v) << ',' << format_double(m.max_ax) << ',' << format_double(m.max_ay) << ','
          << format_double(m.cpu_controller.mean_us) << ',' << format_double(m.cpu_planner.mean_us) << ','
          << format_double(m.cpu_msnn.mean_us) << ',' << format_double(bench::detail::cpu_stats(tot).p99_us) << '\n';
  }
  bench::write_text(file_in(dir, "report.csv"), table.str());

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const auto color = [&](std::size_t k) { return std::string(palette[k % 8]); };
  std::vector<bench::Series> xy{{"raceline", rl.path.x, rl.path.y, "#000000", true}};
  std::vector<bench::Series> lat, steer, speed, cpu;
  for (std::size_t k = 0; k < items.size(); ++k) {
    bench::Series p{items[k].label, {}, {}, color(k)}, e = p, s = p, v = p, u = p;
    for (const auto& r : items[k].trace.rows) {
      p.x.push_back(r.x);
      p.y.push_back(r.y);
      e.x.push_back(r.t);
      e.y.push_back(r.lat_err);
      s.x.push_back(r.t);
      s.y.push_back(r.delta_cmd);
      v.x.push_back(r.t);
      v.y.push_back(r.vx);
    }
    // CPU time per tick, sorted: an empirical quantile curve.
    std::vector<double> tot;
    for (const auto& r : items[k].trace.rows) tot.push_back(r.cpu_us_controller + r.cpu_us_planner + r.cpu_us_msnn);
    std::sort(tot.begin(), tot.end());
    for (std::size_t i = 0; i < tot.size(); ++i) {
      u.x.push_back(static_cast<double>(i + 1) / static_cast<double>(tot.size()));
      u.y.push_back(tot[i] / 1000.0);
    }
    xy.push_back(p);
    lat.push_back(e);
    steer.push_back(s);
    speed.push_back(v);
    cpu.push_back(u);
  }
  bench::write_text(file_in(dir, "trajectory.svg"), bench::svg_plot(xy, "Driven paths", "x [m]", "y [m]", true));
  bench::write_text(file_in(dir, "lateral_error.svg"),
                    bench::svg_plot(lat, "Lateral error to the raceline", "t [s]", "error [m]"));
  bench::write_text(file_in(dir, "steering.svg"), bench::svg_plot(steer, "Steering command", "t [s]", "delta [rad]"));
  bench::write_text(file_in(dir, "speed.svg"), bench::svg_plot(speed, "Speed", "t [s]", "v [m/s]"));
  bench::write_text(file_in(dir, "cpu.svg"),
                    bench::svg_plot(cpu, "Compute per tick (quantiles)", "quantile", "time [ms]"));
  print_result({{"report", file_in(dir, "report.csv")}, {"runs", items.size()}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"racestack: planning and control benchmark for small-scale autonomous racing"};
  app.require_subcommand(1);
  Common c;
  auto* raceline_cmd = app.add_subcommand("raceline", "generate a raceline from a track and an envelope");
  add_common(raceline_cmd, c, false, false);
  auto* train_cmd = app.add_subcommand("train", "train MS-NN steering models from a dataset or a trace");
  add_common(train_cmd, c, false, false);
  auto* race_cmd = app.add_subcommand("race", "run one closed-loop experiment");
  add_common(race_cmd, c, true, false);
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
  add_common(ablate_cmd, c, true, true);
  auto* expand_cmd = app.add_subcommand("expand-ggv", "grow an envelope until the closed loop breaks");
  add_common(expand_cmd, c, true, false);
  auto* report_cmd = app.add_subcommand("report", "metrics tables and plots from traces");
  add_common(report_cmd, c, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", {{"code", "usage"}, {"message", e.what()}}}}.dump() << std::endl;
    return 2;
  }

  try {
    if (*raceline_cmd) cmd_raceline(c);
    if (*train_cmd) cmd_train(c);
    if (*race_cmd) cmd_race(c);
    if (*ablate_cmd) cmd_ablate(c);
    if (*expand_cmd) cmd_expand(c);
    if (*report_cmd) cmd_report(c);
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
