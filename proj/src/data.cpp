#include "msp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace msp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Mat select_columns(const Table& t, const std::vector<std::string>& names) {
  Mat out(t.data.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = t.data.col(t.column(names[j]));
  return out;
}

}  // namespace

Eigen::Index Table::column(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ParseError("missing channel '" + name + "'");
  return static_cast<Eigen::Index>(it - names.begin());
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  Table t;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s[0] == '#') {
      const auto pos = s.find("dt=");
      if (pos != std::string::npos) {
        try {
          t.dt = std::stod(s.substr(pos + 3));
        } catch (const std::exception&) {
          throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed dt declaration");
        }
      }
      continue;
    }
    auto cells = split_commas(s);
    if (!have_header) {
      t.names = cells;
      have_header = true;
      continue;
    }
    if (cells.size() != t.names.size()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.names.size()) + " cells, found " + std::to_string(cells.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string& c = cells[j];
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
        if (c == "nan" || c == "NaN" || c == "inf" || c == "-inf" || c == "Inf" || c == "-Inf") {
          throw ParseError(path.string() + ":" + std::to_string(lineno) + ": non-finite value in column '" +
                           t.names[j] + "'");
        }
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": non-numeric cell '" + c +
                         "' in column '" + t.names[j] + "'");
      }
      if (!std::isfinite(v)) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": non-finite value in column '" +
                         t.names[j] + "'");
      }
      row[j] = v;
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(path.string() + ": missing header row");
  t.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

void write_csv(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  char buf[64];
  if (table.dt) {
    std::snprintf(buf, sizeof buf, "%.17g", *table.dt);
    out << "# dt=" << buf << "\n";
  }
  for (std::size_t j = 0; j < table.names.size(); ++j) out << (j ? "," : "") << table.names[j];
  out << "\n";
  for (Eigen::Index i = 0; i < table.data.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.data.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", table.data(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest '" + path.string() + "': " + e.what());
  }
  Manifest m;
  m.dt = j.value("dt", 0.0);
  m.inputs = j.value("inputs", std::vector<std::string>{});
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.auxiliary = j.value("auxiliary", std::vector<std::string>{});
  if (j.contains("units")) {
    for (auto& [k, v] : j["units"].items()) m.units.emplace_back(k, v.get<std::string>());
  }
  if (m.inputs.empty() || m.outputs.empty()) {
    throw ParseError("manifest '" + path.string() + "' must list inputs and outputs");
  }
  return m;
}

void Manifest::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["dt"] = dt;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["auxiliary"] = auxiliary;
  nlohmann::ordered_json u = nlohmann::ordered_json::object();
  for (const auto& [k, v] : units) u[k] = v;
  j["units"] = u;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

void TimeSeries::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("TimeSeries: dt must be positive");
  if (u.rows() != y.rows()) throw DimensionError("TimeSeries: input and output row counts differ");
  if (aux.cols() > 0 && aux.rows() != u.rows()) throw DimensionError("TimeSeries: auxiliary row count differs");
  if (!u.allFinite() || !y.allFinite() || !aux.allFinite()) throw NumericalError("TimeSeries holds non-finite values", -1);
}

TimeSeries TimeSeries::slice(Eigen::Index begin, Eigen::Index end) const {
  if (begin < 0 || end > length() || begin > end) throw std::out_of_range("TimeSeries::slice out of range");
  TimeSeries s = *this;
  s.u = u.middleRows(begin, end - begin);
  s.y = y.middleRows(begin, end - begin);
  s.aux = aux.cols() > 0 ? Mat(aux.middleRows(begin, end - begin)) : Mat(end - begin, 0);
  return s;
}

TimeSeries to_series(const Table& table, const Manifest& manifest) {
  TimeSeries s;
  s.dt = manifest.dt > 0.0 ? manifest.dt : table.dt.value_or(0.0);
  if (!(s.dt > 0.0)) throw ParseError("no timestep declared (manifest dt or '# dt=' header)");
  s.u = select_columns(table, manifest.inputs);
  s.y = select_columns(table, manifest.outputs);
  s.aux = select_columns(table, manifest.auxiliary);
  s.input_names = manifest.inputs;
  s.output_names = manifest.outputs;
  s.aux_names = manifest.auxiliary;
  s.validate();
  return s;
}

Table to_table(const TimeSeries& s) {
  Table t;
  t.dt = s.dt;
  auto names_or_default = [](const std::vector<std::string>& names, Eigen::Index n, const char* stem) {
    if (static_cast<Eigen::Index>(names.size()) == n) return names;
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(stem + std::to_string(i));
    return out;
  };
  for (const auto& n : names_or_default(s.input_names, s.u.cols(), "u")) t.names.push_back(n);
  for (const auto& n : names_or_default(s.output_names, s.y.cols(), "y")) t.names.push_back(n);
  for (const auto& n : names_or_default(s.aux_names, s.aux.cols(), "aux")) t.names.push_back(n);
  t.data.resize(s.u.rows(), s.u.cols() + s.y.cols() + s.aux.cols());
  t.data << s.u, s.y, s.aux;
  return t;
}

TimeSeries load_csv(const std::filesystem::path& path, const Manifest& manifest) {
  return to_series(read_csv(path), manifest);
}

void save_csv(const std::filesystem::path& path, const TimeSeries& series) {
  write_csv(path, to_table(series));
}

std::vector<SampleWindow> window(const TimeSeries& series, int tau, int horizon, int stride,
                                 std::int64_t source_id) {
  if (tau < 1 || horizon < 1 || stride < 1) throw std::invalid_argument("window: tau, T and stride must be >= 1");
  const Eigen::Index len = tau + 1 + horizon;
  const Eigen::Index n = series.length();
  if (n < len) {
    throw DimensionError("series of " + std::to_string(n) + " rows is shorter than one window (" +
                         std::to_string(len) + ")");
  }
  const Eigen::Index count = (n - len) / stride + 1;
  std::vector<SampleWindow> out;
  out.reserve(static_cast<std::size_t>(count));
  const bool has_aux = series.aux.cols() > 0;
  for (Eigen::Index w = 0; w < count; ++w) {
    const Eigen::Index s = w * stride;
    SampleWindow win;
    win.init.u = series.u.middleRows(s, tau + 1);
    win.init.y = series.y.middleRows(s, tau + 1);
    win.pred_u = series.u.middleRows(s + tau + 1, horizon);
    win.pred_y = series.y.middleRows(s + tau + 1, horizon);
    if (has_aux) {
      win.init_aux = series.aux.middleRows(s, tau + 1);
      win.pred_aux = series.aux.middleRows(s + tau + 1, horizon);
    }
    win.source_start = s;
    win.source_id = source_id;
    out.push_back(std::move(win));
  }
  return out;
}

DatasetSplit split(const std::vector<SampleWindow>& windows, std::array<double, 3> fractions,
                   std::uint64_t seed, int blocks) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0) {
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  }
  if (blocks < 1) throw std::invalid_argument("split needs at least one block");
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (windows[a].source_id != windows[b].source_id) return windows[a].source_id < windows[b].source_id;
    return windows[a].source_start < windows[b].source_start;
  });

  // Contiguous runs of windows; never spanning two sources.
  std::vector<std::vector<std::size_t>> runs;
  const std::size_t per_block = std::max<std::size_t>(1, (windows.size() + blocks - 1) / static_cast<std::size_t>(blocks));
  for (std::size_t idx : order) {
    if (runs.empty() || runs.back().size() >= per_block ||
        windows[runs.back().back()].source_id != windows[idx].source_id) {
      runs.emplace_back();
    }
    runs.back().push_back(idx);
  }
  std::vector<std::size_t> run_order(runs.size());
  std::iota(run_order.begin(), run_order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(run_order.begin(), run_order.end(), rng);

  std::vector<int> part_of(windows.size(), 0);
  const double n = static_cast<double>(windows.size());
  const std::array<double, 2> targets{fractions[0] * n, (fractions[0] + fractions[1]) * n};
  double assigned = 0.0;
  int part = 0;
  for (std::size_t r : run_order) {
    while (part < 2 && (fractions[part] == 0.0 || assigned >= targets[part] - 1e-9)) ++part;
    for (std::size_t idx : runs[r]) part_of[idx] = part;
    assigned += static_cast<double>(runs[r].size());
  }

  // Drop windows overlapping an earlier window of a different partition.
  DatasetSplit out;
  std::array<std::vector<SampleWindow>*, 3> parts{&out.train, &out.val, &out.test};
  std::array<Eigen::Index, 3> reach{-1, -1, -1};
  std::int64_t cur_source = 0;
  bool first = true;
  for (std::size_t idx : order) {
    const auto& w = windows[idx];
    if (first || w.source_id != cur_source) {
      reach = {-1, -1, -1};
      cur_source = w.source_id;
      first = false;
    }
    const int p = part_of[idx];
    bool clash = false;
    for (int q = 0; q < 3; ++q)
      if (q != p && reach[q] > w.source_start) clash = true;
    if (clash) {
      ++out.discarded;
      continue;
    }
    reach[p] = std::max(reach[p], w.source_end());
    parts[p]->push_back(w);
  }
  for (int p = 0; p < 3; ++p) {
    if (fractions[p] > 0.0 && parts[p]->empty()) {
      static const char* names[] = {"train", "validation", "test"};
      throw std::invalid_argument(std::string("split left the ") + names[p] + " partition empty (" +
                                  std::to_string(windows.size()) + " windows in " + std::to_string(runs.size()) +
                                  " blocks)");
    }
  }
  return out;
}

Vec compute_maxima(const Mat& m, bool floor_zero) {
  if (m.rows() == 0) throw DimensionError("compute_maxima: empty series");
  Vec out = m.cwiseAbs().colwise().maxCoeff().transpose();
  if (floor_zero) {
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (out(i) == 0.0) out(i) = 1.0;
  }
  return out;
}

ChannelMaxima compute_maxima(const TimeSeries& series) {
  return {compute_maxima(series.u), compute_maxima(series.y)};
}

Normalizer Normalizer::identity(Eigen::Index m, Eigen::Index n) {
  return {Vec::Ones(m), Vec::Ones(n)};
}

Normalizer Normalizer::from_maxima(const TimeSeries& series) {
  return {compute_maxima(series.u, true), compute_maxima(series.y, true)};
}

TimeSeries Normalizer::apply(const TimeSeries& series) const {
  if (series.u.cols() != u_scale.size() || series.y.cols() != y_scale.size()) {
    throw DimensionError("normalizer width does not match series");
  }
  TimeSeries s = series;
  s.u = series.u.array().rowwise() / u_scale.transpose().array();
  s.y = series.y.array().rowwise() / y_scale.transpose().array();
  return s;
}

Mat Normalizer::denormalize_y(const Mat& y) const {
  if (y.cols() != y_scale.size()) throw DimensionError("denormalize_y: width mismatch");
  return y.array().rowwise() * y_scale.transpose().array();
}

// ---------------------------------------------------------------------------
// Synthetic systems

std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::kLinear2ndOrder:
      return "linear2";
    case SynthKind::kVanDerPol:
      return "vanderpol";
    case SynthKind::kSimQuad:
      return "simquad";
  }
  return "?";
}

SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "linear2" || s == "linear") return SynthKind::kLinear2ndOrder;
  if (s == "vanderpol" || s == "vdp") return SynthKind::kVanDerPol;
  if (s == "simquad" || s == "quad") return SynthKind::kSimQuad;
  throw ParseError("unknown synthetic system '" + s + "'");
}

std::string to_string(Task t) {
  switch (t) {
    case Task::kBodyRate:
      return "bodyrate";
    case Task::kVelocity:
      return "velocity";
    case Task::kEulerRates:
      return "euler-rates";
    case Task::kHybrid:
      return "hybrid";
    case Task::kGeneric:
      return "generic";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  for (Task t : {Task::kBodyRate, Task::kVelocity, Task::kEulerRates, Task::kHybrid, Task::kGeneric})
    if (s == to_string(t)) return t;
  throw ParseError("unknown task '" + s + "' (expected bodyrate, velocity, euler-rates, hybrid or generic)");
}

TimeSeries task_series(const TimeSeries& quad, Task task) {
  if (task == Task::kGeneric) return quad;
  if (quad.y.cols() != 6) throw DimensionError("quadrotor tasks need outputs p,q,r,vx,vy,vz");
  TimeSeries s = quad;
  switch (task) {
    case Task::kBodyRate:
      s.y = quad.y.leftCols(3);
      s.output_names.assign(quad.output_names.begin(), quad.output_names.begin() + 3);
      break;
    case Task::kVelocity:
      s.u.resize(quad.u.rows(), quad.u.cols() + 3);
      s.u << quad.u, quad.y.leftCols(3);
      s.input_names.insert(s.input_names.end(), quad.output_names.begin(), quad.output_names.begin() + 3);
      s.y = quad.y.rightCols(3);
      s.output_names.assign(quad.output_names.begin() + 3, quad.output_names.end());
      break;
    case Task::kEulerRates: {
      if (quad.aux.cols() < 3) throw DimensionError("euler-rates task needs auxiliary phi,theta,psi");
      s.y.resize(quad.y.rows(), 3);
      for (Eigen::Index k = 0; k < quad.y.rows(); ++k) {
        const Eigen::Vector3d eta = quad.aux.row(k).head(3).transpose();
        const Eigen::Vector3d omega = quad.y.row(k).head(3).transpose();
        s.y.row(k) = euler_rates(eta, omega).transpose();
      }
      s.output_names = {"phi_dot", "theta_dot", "psi_dot"};
      break;
    }
    case Task::kHybrid:
    case Task::kGeneric:
      break;
  }
  return s;
}

const std::vector<std::string>& quad_state_columns() {
  static const std::vector<std::string> cols{"phi", "theta", "psi", "p",  "q",  "r",
                                             "x",   "y",     "z",   "vx", "vy", "vz"};
  return cols;
}

const std::vector<std::string>& quad_motor_columns() {
  static const std::vector<std::string> cols{"w1", "w2", "w3", "w4"};
  return cols;
}

namespace {

class StepExcitation {
 public:
  StepExcitation(const Excitation& e, std::mt19937_64& rng) : e_(e), rng_(rng) {}

  double next() {
    if (remaining_ <= 0) {
      std::uniform_real_distribution<double> lvl(-e_.amplitude, e_.amplitude);
      std::uniform_int_distribution<int> hold(e_.hold_min, std::max(e_.hold_min, e_.hold_max));
      level_ = e_.amplitude > 0.0 ? lvl(rng_) : 0.0;
      remaining_ = hold(rng_);
    }
    --remaining_;
    value_ = e_.smoothing * value_ + (1.0 - e_.smoothing) * level_;
    return value_;
  }

 private:
  Excitation e_;
  std::mt19937_64& rng_;
  double level_ = 0.0;
  double value_ = 0.0;
  int remaining_ = 0;
};

Mat excitation_inputs(const SynthSystem& sys, Eigen::Index length, std::mt19937_64& rng) {
  StepExcitation ex(sys.excitation, rng);
  Mat u(length, 1);
  for (Eigen::Index k = 0; k < length; ++k) u(k, 0) = ex.next();
  return u;
}

TimeSeries simulate_linear(const SynthSystem& sys, const Mat& u, std::mt19937_64& rng) {
  std::normal_distribution<double> pn(0.0, 1.0);
  TimeSeries s;
  s.dt = sys.dt;
  s.u = u;
  s.y.resize(u.rows(), 1);
  s.aux.resize(u.rows(), 0);
  double y1 = 0.0, y2 = 0.0;
  for (Eigen::Index k = 0; k < u.rows(); ++k) {
    double y = sys.a1 * y1 + sys.a2 * y2 + sys.b0 * u(k, 0);
    if (sys.process_noise > 0.0) y += sys.process_noise * pn(rng);
    y2 = y1;
    y1 = y;
    s.y(k, 0) = y + (sys.measurement_noise > 0.0 ? sys.measurement_noise * pn(rng) : 0.0);
  }
  s.input_names = {"u"};
  s.output_names = {"y"};
  return s;
}

TimeSeries simulate_vdp(const SynthSystem& sys, const Mat& u, std::mt19937_64& rng) {
  std::normal_distribution<double> pn(0.0, 1.0);
  TimeSeries s;
  s.dt = sys.dt;
  s.u = u;
  s.y.resize(u.rows(), 1);
  s.aux.resize(u.rows(), 1);
  const int sub = std::max(1, sys.substeps);
  const double h = sys.dt / sub;
  Eigen::Vector2d x(0.0, 0.0);
  for (Eigen::Index k = 0; k < u.rows(); ++k) {
    const double f = u(k, 0);
    auto rhs = [&](const Eigen::Vector2d& z) {
      return Eigen::Vector2d(z(1), sys.mu * (1.0 - z(0) * z(0)) * z(1) - z(0) + f);
    };
    for (int i = 0; i < sub; ++i) {
      const Eigen::Vector2d k1 = rhs(x);
      const Eigen::Vector2d k2 = rhs(x + 0.5 * h * k1);
      const Eigen::Vector2d k3 = rhs(x + 0.5 * h * k2);
      const Eigen::Vector2d k4 = rhs(x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (sys.process_noise > 0.0) x(1) += sys.process_noise * pn(rng);
    s.y(k, 0) = x(0) + (sys.measurement_noise > 0.0 ? sys.measurement_noise * pn(rng) : 0.0);
    s.aux(k, 0) = x(1);
  }
  s.input_names = {"u"};
  s.output_names = {"x"};
  s.aux_names = {"x_dot"};
  return s;
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * M_PI); }

TimeSeries simulate_quad(const SynthSystem& sys, Eigen::Index length, std::mt19937_64& rng) {
  const SimQuadParams& qp = sys.quad;
  MmParams mm = qp.mm;
  mm.dt = sys.dt;
  mm.validate();
  const Eigen::Vector3d J = mm.inertia;
  std::normal_distribution<double> pn(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> hold(qp.setpoint_hold_min, std::max(qp.setpoint_hold_min, qp.setpoint_hold_max));

  Eigen::Vector3d v_target = Eigen::Vector3d::Zero(), v_sp = Eigen::Vector3d::Zero();
  double yaw_rate_sp = 0.0;
  int remaining = 0;
  QuadState st;
  const double w2_max = 4.0 * mm.mass * mm.gravity / qp.k_thrust;  // per-motor ceiling, ~4x hover

  TimeSeries s;
  s.dt = sys.dt;
  s.u.resize(length, 4);
  s.y.resize(length, 6);
  s.aux.resize(length, 6);
  const int sub = 4;
  const double h = sys.dt / sub;
  Eigen::Vector3d gust = Eigen::Vector3d::Zero();
  const double gust_decay = qp.gust_time > 0.0 ? std::exp(-sys.dt / qp.gust_time) : 0.0;
  const double gust_kick = qp.gust_torque * std::sqrt(1.0 - gust_decay * gust_decay);
  for (Eigen::Index k = 0; k < length; ++k) {
    if (qp.gust_torque > 0.0) gust = gust_decay * gust + gust_kick * Eigen::Vector3d(pn(rng), pn(rng), pn(rng));
    if (remaining <= 0) {
      v_target = Eigen::Vector3d(qp.max_speed * unit(rng), qp.max_speed * unit(rng), qp.max_climb * unit(rng));
      yaw_rate_sp = 0.5 * unit(rng);
      remaining = hold(rng);
    }
    --remaining;
    v_sp = 0.97 * v_sp + 0.03 * v_target;

    // Velocity loop -> desired acceleration -> thrust and attitude.
    Eigen::Vector3d a_des = 2.0 * (v_sp - st.xi_dot);
    const double a_h = a_des.head<2>().norm(), a_h_max = 0.5 * mm.gravity;
    if (a_h > a_h_max) a_des.head<2>() *= a_h_max / a_h;
    a_des(2) = std::clamp(a_des(2), -0.5 * mm.gravity, 0.8 * mm.gravity) + mm.gravity;
    const double psi = st.eta(2);
    const double thrust_des = mm.mass * a_des.norm();
    const double phi_des = std::asin(std::clamp((a_des(0) * std::sin(psi) - a_des(1) * std::cos(psi)) / a_des.norm(), -0.6, 0.6));
    const double th_des = std::clamp(std::atan2(a_des(0) * std::cos(psi) + a_des(1) * std::sin(psi), a_des(2)), -0.6, 0.6);

    // Attitude and rate loops -> torques.
    Eigen::Vector3d rate_des(8.0 * (phi_des - st.eta(0)), 8.0 * (th_des - st.eta(1)), yaw_rate_sp);
    Eigen::Vector3d tau = J.cwiseProduct(20.0 * (rate_des - st.omega)) + st.omega.cross(J.cwiseProduct(st.omega));

    // Mixer (plus configuration), then motor saturation.
    const double sT = thrust_des / qp.k_thrust, tx = tau(0) / (qp.arm * qp.k_thrust),
                 ty = tau(1) / (qp.arm * qp.k_thrust), tz = tau(2) / qp.k_torque;
    Eigen::Vector4d w2(sT / 4 - ty / 2 + tz / 4, sT / 4 + tx / 2 - tz / 4, sT / 4 + ty / 2 + tz / 4,
                       sT / 4 - tx / 2 - tz / 4);
    w2 = w2.cwiseMax(0.0).cwiseMin(w2_max);
    const Eigen::Vector4d w = w2.cwiseSqrt();

    // Plant wrench from the realised motor speeds.
    const double F = qp.k_thrust * w2.sum();
    const Eigen::Vector3d torque = Eigen::Vector3d(qp.arm * qp.k_thrust * (w2(1) - w2(3)),
                                                   qp.arm * qp.k_thrust * (w2(2) - w2(0)),
                                                   qp.k_torque * (w2(0) - w2(1) + w2(2) - w2(3))) +
                                   gust;
    for (int i = 0; i < sub; ++i) {
      const Eigen::Vector3d eta_dot = euler_rates(st.eta, st.omega);
      const Eigen::Vector3d omega_dot =
          (torque - qp.rate_damping * st.omega - st.omega.cross(J.cwiseProduct(st.omega))).cwiseQuotient(J);
      const Eigen::Vector3d accel = thrust_direction(st.eta) * (F / mm.mass) - Eigen::Vector3d(0, 0, mm.gravity) -
                                    (qp.quad_drag / mm.mass) * st.xi_dot.norm() * st.xi_dot;
      st.eta += h * eta_dot;
      st.omega += h * omega_dot;
      st.xi += h * st.xi_dot;
      st.xi_dot += h * accel;
      if (sys.process_noise > 0.0) st.xi_dot += sys.process_noise * std::sqrt(h) * Eigen::Vector3d(pn(rng), pn(rng), pn(rng));
    }
    st.eta(2) = wrap_angle(st.eta(2));

    auto noisy = [&](double v) { return v + (sys.measurement_noise > 0.0 ? sys.measurement_noise * pn(rng) : 0.0); };
    s.u.row(k) = w.transpose();
    for (int i = 0; i < 3; ++i) {
      s.y(k, i) = noisy(st.omega(i));
      s.y(k, 3 + i) = noisy(st.xi_dot(i));
      s.aux(k, i) = st.eta(i);
      s.aux(k, 3 + i) = st.xi(i);
    }
  }
  s.input_names = quad_motor_columns();
  s.output_names = {"p", "q", "r", "vx", "vy", "vz"};
  s.aux_names = {"phi", "theta", "psi", "x", "y", "z"};
  return s;
}

}  // namespace

TimeSeries synth_generate(const SynthSystem& sys, Eigen::Index length) {
  if (length < 1) throw std::invalid_argument("synth_generate: length must be >= 1");
  std::mt19937_64 rng(sys.seed);
  switch (sys.kind) {
    case SynthKind::kLinear2ndOrder:
      return simulate_linear(sys, excitation_inputs(sys, length, rng), rng);
    case SynthKind::kVanDerPol:
      return simulate_vdp(sys, excitation_inputs(sys, length, rng), rng);
    case SynthKind::kSimQuad:
      return simulate_quad(sys, length, rng);
  }
  throw std::logic_error("unreachable synth kind");
}

TimeSeries synth_generate(const SynthSystem& sys, const Mat& inputs) {
  std::mt19937_64 rng(sys.seed);
  switch (sys.kind) {
    case SynthKind::kLinear2ndOrder:
      return simulate_linear(sys, inputs, rng);
    case SynthKind::kVanDerPol:
      return simulate_vdp(sys, inputs, rng);
    case SynthKind::kSimQuad:
      break;
  }
  throw std::invalid_argument("explicit inputs are not supported for the closed-loop quadrotor simulation");
}

}  // namespace msp
