#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "racestack/common.hpp"

namespace racestack::msnn {

/// Future reference signals over w+1 samples spaced by the model period.
struct ReferenceWindow {
  std::vector<double> rho;
  std::vector<double> v;
  std::vector<double> ay;
  std::vector<double> ax;

  std::size_t size() const { return rho.size(); }

  void validate() const {
    const std::size_t n = rho.size();
    if (n == 0 || v.size() != n || ay.size() != n || ax.size() != n)
      throw Error("msnn", "window vectors must share a non-zero length");
    if (!all_finite(rho) || !all_finite(v) || !all_finite(ay) || !all_finite(ax))
      throw Error("msnn", "window contains non-finite values");
    for (double s : v)
      if (s < 0.0) throw Error("msnn", "window speeds must be non-negative");
  }
};

struct Sample {
  ReferenceWindow window;
  double delta = 0.0;  // measured steering, rad
};

using SteerDataset = std::vector<Sample>;

enum class Variant { Extended, Baseline };

inline std::string to_string(Variant v) { return v == Variant::Extended ? "extended" : "baseline"; }

inline Variant variant_from_string(std::string_view s) {
  if (s == "extended") return Variant::Extended;
  if (s == "baseline") return Variant::Baseline;
  throw Error("config", "unknown model variant '" + std::string(s) + "'");
}

/// Triangular membership functions on fixed knots with saturating outer
/// shoulders, so the memberships sum to one at every speed.
inline std::vector<double> gate_values(const std::vector<double>& knots, double v) {
  const std::size_t n = knots.size();
  std::vector<double> psi(n, 0.0);
  if (n == 1) {
    psi[0] = 1.0;
    return psi;
  }
  if (v <= knots.front()) {
    psi[0] = 1.0;
    return psi;
  }
  if (v >= knots.back()) {
    psi[n - 1] = 1.0;
    return psi;
  }
  std::size_t i = 0;
  while (i + 2 < n && v >= knots[i + 1]) ++i;
  const double f = (v - knots[i]) / (knots[i + 1] - knots[i]);
  psi[i] = 1.0 - f;
  psi[i + 1] = f;
  return psi;
}

/// Model-structured steering network: a quasi-steady-state steering map per
/// window sample followed by speed-gated linear filters over the window.
struct MsnnModel {
  Variant variant = Variant::Extended;
  std::size_t window = 9;  // w; windows hold w+1 samples
  double period = 0.05;    // T_s
  double wheelbase = 0.33;
  std::vector<double> gate_knots{0.0};
  // Handling-diagram coefficients: Q = q0 + qv v + qx ax, S = s0 + sv v + sx ax.
  double q0 = 0.01, qv = 0.0, qx = 0.0;
  double s0 = 0.0, sv = 0.0, sx = 0.0;
  double A = 0.01;  // baseline slope
  std::vector<std::vector<double>> filters;

  std::size_t channels() const { return gate_knots.size(); }
  std::size_t width() const { return window + 1; }

  /// Learnable parameter count (gate knots are fixed hyperparameters).
  std::size_t parameter_count() const {
    return (variant == Variant::Extended ? 6 : 1) + channels() * width();
  }

  void validate() const {
    if (gate_knots.empty()) throw Error("msnn", "need at least one gating channel");
    for (std::size_t i = 1; i < gate_knots.size(); ++i)
      if (!(gate_knots[i] > gate_knots[i - 1])) throw Error("msnn", "gate knots must be strictly increasing");
    if (filters.size() != channels()) throw Error("msnn", "one filter per gating channel required");
    for (const auto& f : filters) {
      if (f.size() != width()) throw Error("msnn", "filter length must be w+1");
      if (!all_finite(f)) throw Error("msnn", "filter weights must be finite");
    }
    if (!(wheelbase > 0.0) || !(period > 0.0)) throw Error("msnn", "wheelbase and period must be positive");
  }

  std::vector<double> parameters() const {
    std::vector<double> p;
    if (variant == Variant::Extended)
      p = {q0, qv, qx, s0, sv, sx};
    else
      p = {A};
    for (const auto& f : filters) p.insert(p.end(), f.begin(), f.end());
    return p;
  }

  void set_parameters(const std::vector<double>& p) {
    if (p.size() != parameter_count()) throw Error("msnn", "parameter vector has the wrong length");
    std::size_t k = 0;
    if (variant == Variant::Extended) {
      q0 = p[0];
      qv = p[1];
      qx = p[2];
      s0 = p[3];
      sv = p[4];
      sx = p[5];
      k = 6;
    } else {
      A = p[0];
      k = 1;
    }
    for (auto& f : filters)
      for (double& x : f) x = p[k++];
  }
};

/// Fresh model with the default initialisation: mild understeer prior and
/// uniform averaging filters. Gate knots span [v_lo, v_hi] uniformly.
inline MsnnModel make_model(Variant variant, std::size_t w, std::size_t n_channels, double v_lo, double v_hi,
                            double period = 0.05, double wheelbase = 0.33) {
  if (n_channels == 0) throw Error("msnn", "need at least one gating channel");
  MsnnModel m;
  m.variant = variant;
  m.window = w;
  m.period = period;
  m.wheelbase = wheelbase;
  m.gate_knots.clear();
  if (n_channels == 1) {
    m.gate_knots.push_back(0.5 * (v_lo + v_hi));
  } else {
    if (!(v_hi > v_lo)) throw Error("msnn", "gating speed range is empty");
    for (std::size_t i = 0; i < n_channels; ++i)
      m.gate_knots.push_back(v_lo + (v_hi - v_lo) * static_cast<double>(i) / static_cast<double>(n_channels - 1));
  }
  m.filters.assign(n_channels, std::vector<double>(w + 1, 1.0 / static_cast<double>(w + 1)));
  return m;
}

/// Per-sample quasi-steady-state steering.
inline std::vector<double> qss_vector(const MsnnModel& m, const ReferenceWindow& win) {
  std::vector<double> out(win.size());
  for (std::size_t j = 0; j < win.size(); ++j) {
    const double kin = win.rho[j] * m.wheelbase;
    const double ay = win.ay[j];
    if (m.variant == Variant::Baseline) {
      out[j] = kin + m.A * ay;
    } else {
      const double Q = m.q0 + m.qv * win.v[j] + m.qx * win.ax[j];
      const double S = m.s0 + m.sv * win.v[j] + m.sx * win.ax[j];
      out[j] = kin + Q * ay + S * ay * ay;
    }
  }
  return out;
}

namespace detail {

// Effective weight of window sample j: sum over channels of gate * filter.
// The extended variant gates on each sample's own speed, the baseline on the
// current speed only.
inline std::vector<std::vector<double>> gates_for(const MsnnModel& m, const ReferenceWindow& win) {
  std::vector<std::vector<double>> g(win.size());
  if (m.variant == Variant::Baseline) {
    const auto now = gate_values(m.gate_knots, win.v.front());
    for (auto& row : g) row = now;
  } else {
    for (std::size_t j = 0; j < win.size(); ++j) g[j] = gate_values(m.gate_knots, win.v[j]);
  }
  return g;
}

}  // namespace detail

inline double msnn_forward(const MsnnModel& m, const ReferenceWindow& win) {
  if (win.size() != m.width()) throw Error("msnn", "window length does not match the model");
  const auto qss = qss_vector(m, win);
  const auto gates = detail::gates_for(m, win);
  double out = 0.0;
  for (std::size_t i = 0; i < m.channels(); ++i)
    for (std::size_t j = 0; j < win.size(); ++j) out += qss[j] * gates[j][i] * m.filters[i][j];
  return out;
}

/// Output and exact gradient with respect to parameters() for one window.
inline double forward_gradient(const MsnnModel& m, const ReferenceWindow& win, std::vector<double>& grad) {
  const std::size_t W = m.width(), C = m.channels();
  if (win.size() != W) throw Error("msnn", "window length does not match the model");
  const auto qss = qss_vector(m, win);
  const auto gates = detail::gates_for(m, win);
  grad.assign(m.parameter_count(), 0.0);
  const std::size_t off = m.variant == Variant::Extended ? 6 : 1;
  double out = 0.0;
  for (std::size_t j = 0; j < W; ++j) {
    double eff = 0.0;
    for (std::size_t i = 0; i < C; ++i) {
      eff += gates[j][i] * m.filters[i][j];
      grad[off + i * W + j] = qss[j] * gates[j][i];
    }
    out += qss[j] * eff;
    const double ay = win.ay[j];
    if (m.variant == Variant::Extended) {
      const double v = win.v[j], ax = win.ax[j];
      grad[0] += eff * ay;
      grad[1] += eff * v * ay;
      grad[2] += eff * ax * ay;
      grad[3] += eff * ay * ay;
      grad[4] += eff * v * ay * ay;
      grad[5] += eff * ax * ay * ay;
    } else {
      grad[0] += eff * ay;
    }
  }
  return out;
}

// ---- metrics ----------------------------------------------------------------

struct Evaluation {
  double rmse = 0.0;
  double fvu = 0.0;
  bool fvu_defined = true;
};

inline Evaluation evaluate(const MsnnModel& m, const SteerDataset& data) {
  if (data.empty()) throw Error("msnn", "cannot evaluate on an empty dataset");
  double sse = 0.0, mean = 0.0;
  for (const auto& s : data) mean += s.delta;
  mean /= static_cast<double>(data.size());
  double sst = 0.0;
  for (const auto& s : data) {
    sse += square(msnn_forward(m, s.window) - s.delta);
    sst += square(s.delta - mean);
  }
  Evaluation e;
  e.rmse = std::sqrt(sse / static_cast<double>(data.size()));
  // Targets equal up to rounding count as constant.
  const double n = static_cast<double>(data.size());
  if (sst > n * square(1e-12 * std::max(1.0, std::abs(mean)))) {
    e.fvu = sse / sst;
  } else {
    e.fvu = std::numeric_limits<double>::quiet_NaN();
    e.fvu_defined = false;
  }
  return e;
}

struct AicResult {
  double value = 0.0;
  bool finite = true;  // false when the fit is exact and the log diverges
};

inline AicResult aic_from(double mse, std::size_t n_samples, std::size_t k) {
  AicResult r;
  if (mse <= 0.0) {
    r.value = -std::numeric_limits<double>::infinity();
    r.finite = false;
    return r;
  }
  r.value = static_cast<double>(n_samples) * std::log(mse) + 2.0 * static_cast<double>(k);
  return r;
}

inline AicResult aic(const MsnnModel& m, const SteerDataset& data) {
  const Evaluation e = evaluate(m, data);
  return aic_from(e.rmse * e.rmse, data.size(), m.parameter_count());
}

struct WeightReport {
  std::vector<double> lookahead_time;          // j * T_s
  std::vector<std::vector<double>> weights;    // per channel
  std::vector<std::size_t> peak_index;         // per channel
  std::vector<bool> flat;                      // all weights equal
  std::vector<double> implied_delay;           // peak_index * T_s
};

/// Filter weights against look-ahead time, with the argmax (ties to the
/// earliest sample) read as the steering delay the model compensates.
inline WeightReport interpret_weights(const MsnnModel& m) {
  WeightReport r;
  for (std::size_t j = 0; j < m.width(); ++j) r.lookahead_time.push_back(m.period * static_cast<double>(j));
  for (const auto& f : m.filters) {
    r.weights.push_back(f);
    std::size_t best = 0;
    for (std::size_t j = 1; j < f.size(); ++j)
      if (f[j] > f[best]) best = j;
    const bool flat = std::all_of(f.begin(), f.end(), [&](double x) { return x == f.front(); });
    r.peak_index.push_back(best);
    r.flat.push_back(flat);
    r.implied_delay.push_back(m.period * static_cast<double>(best));
  }
  return r;
}

// ---- training ---------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 200;
  std::size_t max_epochs = 6000;
  std::size_t patience = 400;
  std::uint64_t seed = 1;
};

struct TrainHistory {
  std::vector<double> train_rmse;
  std::vector<double> val_rmse;
  std::size_t best_epoch = 0;
  double best_val_rmse = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

struct TrainResult {
  MsnnModel model;
  TrainHistory history;
};

namespace detail {

inline double rmse_on(const MsnnModel& m, const SteerDataset& d) {
  double sse = 0.0;
  for (const auto& s : d) sse += square(msnn_forward(m, s.window) - s.delta);
  return std::sqrt(sse / static_cast<double>(d.size()));
}

}  // namespace detail

/// RMSE loss on a batch and its exact gradient.
inline double batch_loss_gradient(const MsnnModel& m, const SteerDataset& data,
                                  const std::vector<std::size_t>& idx, std::vector<double>& grad) {
  const std::size_t k = m.parameter_count();
  std::vector<double> acc(k, 0.0), g;
  double sse = 0.0;
  for (std::size_t i : idx) {
    const double y = forward_gradient(m, data[i].window, g);
    const double e = y - data[i].delta;
    sse += e * e;
    for (std::size_t p = 0; p < k; ++p) acc[p] += e * g[p];
  }
  const double n = static_cast<double>(idx.size());
  const double rmse = std::sqrt(sse / n);
  grad.assign(k, 0.0);
  if (rmse > 0.0)
    for (std::size_t p = 0; p < k; ++p) grad[p] = acc[p] / (n * rmse);
  return rmse;
}

/// Adam on minibatch RMSE with early stopping on validation RMSE; the best
/// validation parameters are restored at the end.
inline TrainResult train(MsnnModel model, const SteerDataset& train_set, const SteerDataset& val_set,
                         const TrainConfig& cfg = {}) {
  if (train_set.empty() || val_set.empty()) throw Error("msnn", "training and validation splits must be non-empty");
  model.validate();
  for (const auto& s : train_set)
    if (s.window.size() != model.width()) throw Error("msnn", "training window length does not match the model");
  const std::size_t k = model.parameter_count();
  std::vector<double> theta = model.parameters(), m1(k, 0.0), m2(k, 0.0), grad;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);

  TrainResult out;
  std::vector<double> best = theta;
  out.history.best_val_rmse = detail::rmse_on(model, val_set);
  std::size_t since_best = 0;
  std::uint64_t step = 0;
  std::size_t batch_counter = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      const double loss = batch_loss_gradient(model, train_set, idx, grad);
      if (!std::isfinite(loss))
        throw Error("msnn", "loss became NaN at batch " + std::to_string(batch_counter) + " (epoch " +
                                std::to_string(epoch) + ")");
      ++batch_counter;
      sse += loss * loss * static_cast<double>(idx.size());
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < k; ++p) {
        m1[p] = cfg.beta1 * m1[p] + (1.0 - cfg.beta1) * grad[p];
        m2[p] = cfg.beta2 * m2[p] + (1.0 - cfg.beta2) * grad[p] * grad[p];
        theta[p] -= cfg.learning_rate * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + cfg.epsilon);
      }
      model.set_parameters(theta);
    }
    const double tr = std::sqrt(sse / static_cast<double>(order.size()));
    const double va = detail::rmse_on(model, val_set);
    if (!std::isfinite(va)) throw Error("msnn", "validation loss became NaN after epoch " + std::to_string(epoch));
    out.history.train_rmse.push_back(tr);
    out.history.val_rmse.push_back(va);
    if (va < out.history.best_val_rmse) {
      out.history.best_val_rmse = va;
      out.history.best_epoch = epoch + 1;
      best = theta;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      out.history.stopped_early = true;
      break;
    }
  }
  model.set_parameters(best);
  out.model = std::move(model);
  return out;
}

// ---- serialisation ----------------------------------------------------------

struct Provenance {
  std::uint64_t seed = 0;
  std::string dataset_hash;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
};

inline nlohmann::json to_json(const MsnnModel& m, const Provenance& prov = {}) {
  nlohmann::json j;
  j["variant"] = to_string(m.variant);
  j["window"] = m.window;
  j["period"] = m.period;
  j["wheelbase"] = m.wheelbase;
  j["gate_knots"] = m.gate_knots;
  j["coefficients"] = {{"q0", m.q0}, {"qv", m.qv}, {"qx", m.qx}, {"s0", m.s0}, {"sv", m.sv}, {"sx", m.sx}, {"A", m.A}};
  j["filters"] = m.filters;
  j["provenance"] = {{"seed", prov.seed},
                     {"dataset_hash", prov.dataset_hash},
                     {"train_samples", prov.train_samples},
                     {"val_samples", prov.val_samples}};
  return j;
}

inline MsnnModel from_json(const nlohmann::json& j) {
  MsnnModel m;
  try {
    m.variant = variant_from_string(j.at("variant").get<std::string>());
    m.window = j.at("window").get<std::size_t>();
    m.period = j.at("period").get<double>();
    m.wheelbase = j.at("wheelbase").get<double>();
    m.gate_knots = j.at("gate_knots").get<std::vector<double>>();
    const auto& c = j.at("coefficients");
    m.q0 = c.at("q0").get<double>();
    m.qv = c.at("qv").get<double>();
    m.qx = c.at("qx").get<double>();
    m.s0 = c.at("s0").get<double>();
    m.sv = c.at("sv").get<double>();
    m.sx = c.at("sx").get<double>();
    m.A = c.at("A").get<double>();
    m.filters = j.at("filters").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("msnn", std::string("malformed model file: ") + e.what());
  }
  m.validate();
  return m;
}

inline MsnnModel read_model(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw Error("io", "cannot open model file " + filename);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("msnn", std::string("model file is not valid JSON: ") + e.what());
  }
}

inline void write_model(const std::string& filename, const MsnnModel& m, const Provenance& prov = {}) {
  std::ofstream out(filename);
  if (!out) throw Error("io", "cannot write model file " + filename);
  out << to_json(m, prov).dump(2) << "\n";
}

/// Dataset rows: split tag, the four window vectors, then the target.
inline void write_dataset(std::ostream& out, const SteerDataset& train_set, const SteerDataset& val_set,
                          double period) {
  const std::size_t W = !train_set.empty() ? train_set.front().window.size()
                                           : (!val_set.empty() ? val_set.front().window.size() : 0);
  out << "# period=" << format_double(period) << "\n";
  out << "split";
  for (const char* name : {"rho", "v", "ay", "ax"})
    for (std::size_t j = 0; j < W; ++j) out << ',' << name << '_' << j;
  out << ",delta\n";
  const auto emit = [&](const SteerDataset& d, const char* tag) {
    for (const auto& s : d) {
      out << tag;
      for (const auto* vec : {&s.window.rho, &s.window.v, &s.window.ay, &s.window.ax})
        for (double x : *vec) out << ',' << format_double(x);
      out << ',' << format_double(s.delta) << '\n';
    }
  };
  emit(train_set, "train");
  emit(val_set, "val");
}

struct DatasetFile {
  SteerDataset train;
  SteerDataset val;
  double period = 0.05;
};

inline DatasetFile parse_dataset(std::istream& in) {
  DatasetFile f;
  std::string line;
  std::size_t W = 0;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string_view body = trim(t.substr(1));
      if (body.starts_with("period=")) f.period = parse_double(body.substr(7));
      continue;
    }
    const auto fields = split(t, ',');
    if (!header) {
      if (fields.size() < 6 || (fields.size() - 2) % 4 != 0 || fields.front() != "split" || fields.back() != "delta")
        throw Error("dataset", "unexpected dataset header at line " + std::to_string(lineno));
      W = (fields.size() - 2) / 4;
      header = true;
      continue;
    }
    if (fields.size() != 4 * W + 2) throw Error("dataset", "wrong field count at line " + std::to_string(lineno));
    Sample s;
    for (auto* vec : {&s.window.rho, &s.window.v, &s.window.ay, &s.window.ax}) vec->reserve(W);
    std::size_t k = 1;
    for (auto* vec : {&s.window.rho, &s.window.v, &s.window.ay, &s.window.ax})
      for (std::size_t j = 0; j < W; ++j) vec->push_back(parse_double(fields[k++]));
    s.delta = parse_double(fields[k]);
    if (fields[0] == "train")
      f.train.push_back(std::move(s));
    else if (fields[0] == "val")
      f.val.push_back(std::move(s));
    else
      throw Error("dataset", "unknown split tag at line " + std::to_string(lineno));
  }
  if (!header) throw Error("dataset", "dataset file has no header");
  return f;
}

inline DatasetFile read_dataset(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw Error("io", "cannot open dataset file " + filename);
  return parse_dataset(in);
}

inline std::string dataset_hash(const SteerDataset& a, const SteerDataset& b, double period) {
  std::ostringstream os;
  write_dataset(os, a, b, period);
  std::ostringstream hex;
  hex << std::hex << fnv1a(os.str());
  return hex.str();
}

}  // namespace racestack::msnn
