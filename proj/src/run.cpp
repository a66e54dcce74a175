#include "msp/run.hpp"

#include <fstream>
#include <numbers>
#include <set>

namespace msp {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ParseError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + "." + key + ": " + e.what());
  }
}

Eigen::Vector3d vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ParseError(where + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_json(const Eigen::Vector3d& v) { return json::array({v(0), v(1), v(2)}); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

ordered_json synth_to_json(const SynthSystem& s) {
  ordered_json j;
  j["kind"] = to_string(s.kind);
  j["dt"] = s.dt;
  j["seed"] = s.seed;
  j["process_noise"] = s.process_noise;
  j["measurement_noise"] = s.measurement_noise;
  j["amplitude"] = s.excitation.amplitude;
  j["hold_min"] = s.excitation.hold_min;
  j["hold_max"] = s.excitation.hold_max;
  j["smoothing"] = s.excitation.smoothing;
  switch (s.kind) {
    case SynthKind::kLinear2ndOrder:
      j["a1"] = s.a1;
      j["a2"] = s.a2;
      j["b0"] = s.b0;
      break;
    case SynthKind::kVanDerPol:
      j["mu"] = s.mu;
      j["substeps"] = s.substeps;
      break;
    case SynthKind::kSimQuad:
      j["mass"] = s.quad.mm.mass;
      j["inertia"] = vec3_json(s.quad.mm.inertia);
      j["arm"] = s.quad.arm;
      j["k_thrust"] = s.quad.k_thrust;
      j["k_torque"] = s.quad.k_torque;
      j["quad_drag"] = s.quad.quad_drag;
      j["rate_damping"] = s.quad.rate_damping;
      j["max_speed"] = s.quad.max_speed;
      j["max_climb"] = s.quad.max_climb;
      j["setpoint_hold_min"] = s.quad.setpoint_hold_min;
      j["setpoint_hold_max"] = s.quad.setpoint_hold_max;
      j["gust_torque"] = s.quad.gust_torque;
      j["gust_time"] = s.quad.gust_time;
      break;
  }
  return j;
}

SynthSystem synth_from_json(const json& j, SynthSystem s) {
  const std::string w = "data.synth";
  check_keys(j, {"kind", "dt", "seed", "process_noise", "measurement_noise", "amplitude", "hold_min", "hold_max",
                 "smoothing", "a1", "a2", "b0", "mu", "substeps", "mass", "inertia", "arm", "k_thrust", "k_torque",
                 "quad_drag", "rate_damping", "max_speed", "max_climb", "setpoint_hold_min", "setpoint_hold_max", "gust_torque",
                 "gust_time"},
             w);
  if (j.contains("kind")) s.kind = synth_kind_from_string(j["kind"].get<std::string>());
  read(j, "dt", s.dt, w);
  read(j, "seed", s.seed, w);
  read(j, "process_noise", s.process_noise, w);
  read(j, "measurement_noise", s.measurement_noise, w);
  read(j, "amplitude", s.excitation.amplitude, w);
  read(j, "hold_min", s.excitation.hold_min, w);
  read(j, "hold_max", s.excitation.hold_max, w);
  read(j, "smoothing", s.excitation.smoothing, w);
  read(j, "a1", s.a1, w);
  read(j, "a2", s.a2, w);
  read(j, "b0", s.b0, w);
  read(j, "mu", s.mu, w);
  read(j, "substeps", s.substeps, w);
  read(j, "mass", s.quad.mm.mass, w);
  if (j.contains("inertia")) s.quad.mm.inertia = vec3(j["inertia"], w + ".inertia");
  read(j, "arm", s.quad.arm, w);
  read(j, "k_thrust", s.quad.k_thrust, w);
  read(j, "k_torque", s.quad.k_torque, w);
  read(j, "quad_drag", s.quad.quad_drag, w);
  read(j, "rate_damping", s.quad.rate_damping, w);
  read(j, "max_speed", s.quad.max_speed, w);
  read(j, "max_climb", s.quad.max_climb, w);
  read(j, "setpoint_hold_min", s.quad.setpoint_hold_min, w);
  read(j, "setpoint_hold_max", s.quad.setpoint_hold_max, w);
  read(j, "gust_torque", s.quad.gust_torque, w);
  read(j, "gust_time", s.quad.gust_time, w);
  s.quad.mm.dt = s.dt;
  return s;
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  ordered_json d;
  if (data.synth) {
    d["synth"] = synth_to_json(*data.synth);
    d["length"] = data.length;
  } else {
    d["csv"] = data.csv;
    d["manifest"] = data.manifest;
  }
  j["data"] = d;
  j["task"] = msp::to_string(task);
  if (task == Task::kHybrid) {
    j["im_model"] = im_model;
    j["om_model"] = om_model;
  } else {
    j["model"] = model;
  }
  if (tau) j["tau"] = *tau;
  j["horizon"] = horizon;
  j["stride"] = stride;
  j["split"] = split;
  j["normalize"] = normalize;
  j["mlfc_activation"] = msp::to_string(mlfc_activation);
  j["tdl_capacity"] = tdl_capacity;
  j["c_max"] = c_max;
  ordered_json t;
  t["alpha"] = train.alpha;
  t["beta"] = train.beta;
  t["optimizer"] = msp::to_string(train.optimizer.kind);
  t["lr"] = train.optimizer.lr;
  t["momentum"] = train.optimizer.momentum;
  t["beta1"] = train.optimizer.beta1;
  t["beta2"] = train.optimizer.beta2;
  t["eps"] = train.optimizer.eps;
  t["epochs"] = train.epochs;
  t["batch_size"] = train.batch_size;
  t["clip_norm"] = train.clip_norm;
  t["weight_decay"] = train.weight_decay;
  t["dropout"] = train.dropout;
  t["init_scale"] = train.init_scale;
  j["train"] = t;
  if (task == Task::kHybrid) {
    ordered_json m;
    m["mass"] = mm.mass;
    m["inertia"] = vec3_json(mm.inertia);
    m["gravity"] = mm.gravity;
    m["drag"] = vec3_json(mm.drag);
    j["mm"] = m;
    if (gains) j["gains"] = {{"omega", vec3_json(gains->omega)}, {"xi_dot", vec3_json(gains->xi_dot)}};
  }
  j["output_dir"] = output_dir;
  j["seed"] = seed;
  return j;
}

RunConfig RunConfig::from_json(const json& j, RunConfig c) {
  check_keys(j, {"data", "task", "model", "im_model", "om_model", "tau", "horizon", "stride", "split", "normalize",
                 "mlfc_activation", "tdl_capacity", "c_max", "train", "mm", "gains", "output_dir", "seed", "workers"},
             "config");
  const std::string w = "config";
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, {"csv", "manifest", "synth", "length"}, "data");
    read(d, "csv", c.data.csv, "data");
    read(d, "manifest", c.data.manifest, "data");
    read(d, "length", c.data.length, "data");
    if (d.contains("synth")) {
      c.data.synth = synth_from_json(d["synth"], c.data.synth.value_or(SynthSystem{}));
      c.data.csv.clear();
    } else if (d.contains("csv")) {
      c.data.synth.reset();
    }
  }
  if (j.contains("task")) c.task = task_from_string(j["task"].get<std::string>());
  read(j, "model", c.model, w);
  read(j, "im_model", c.im_model, w);
  read(j, "om_model", c.om_model, w);
  if (j.contains("tau")) c.tau = j["tau"].get<int>();
  read(j, "horizon", c.horizon, w);
  read(j, "stride", c.stride, w);
  read(j, "split", c.split, w);
  read(j, "normalize", c.normalize, w);
  if (j.contains("mlfc_activation")) c.mlfc_activation = activation_from_string(j["mlfc_activation"].get<std::string>());
  read(j, "tdl_capacity", c.tdl_capacity, w);
  read(j, "c_max", c.c_max, w);
  read(j, "workers", c.train.workers, w);
  if (j.contains("train")) {
    const json& t = j["train"];
    const std::string tw = "train";
    check_keys(t, {"alpha", "beta", "optimizer", "lr", "momentum", "beta1", "beta2", "eps", "epochs", "batch_size",
                   "clip_norm", "weight_decay", "dropout", "init_scale", "workers"},
               tw);
    read(t, "alpha", c.train.alpha, tw);
    read(t, "beta", c.train.beta, tw);
    if (t.contains("optimizer")) c.train.optimizer.kind = optimizer_kind_from_string(t["optimizer"].get<std::string>());
    read(t, "lr", c.train.optimizer.lr, tw);
    read(t, "momentum", c.train.optimizer.momentum, tw);
    read(t, "beta1", c.train.optimizer.beta1, tw);
    read(t, "beta2", c.train.optimizer.beta2, tw);
    read(t, "eps", c.train.optimizer.eps, tw);
    read(t, "epochs", c.train.epochs, tw);
    read(t, "batch_size", c.train.batch_size, tw);
    read(t, "clip_norm", c.train.clip_norm, tw);
    read(t, "weight_decay", c.train.weight_decay, tw);
    read(t, "dropout", c.train.dropout, tw);
    read(t, "init_scale", c.train.init_scale, tw);
    read(t, "workers", c.train.workers, tw);
  }
  if (j.contains("mm")) {
    const json& m = j["mm"];
    check_keys(m, {"mass", "inertia", "gravity", "drag"}, "mm");
    read(m, "mass", c.mm.mass, "mm");
    if (m.contains("inertia")) c.mm.inertia = vec3(m["inertia"], "mm.inertia");
    read(m, "gravity", c.mm.gravity, "mm");
    if (m.contains("drag")) c.mm.drag = vec3(m["drag"], "mm.drag");
  }
  if (j.contains("gains")) {
    const json& g = j["gains"];
    if (g.is_string() && g.get<std::string>() == "data") {
      c.gains.reset();
    } else {
      check_keys(g, {"omega", "xi_dot"}, "gains");
      NormGains n;
      n.omega = vec3(g.at("omega"), "gains.omega");
      n.xi_dot = vec3(g.at("xi_dot"), "gains.xi_dot");
      c.gains = n;
    }
  }
  read(j, "output_dir", c.output_dir, w);
  read(j, "seed", c.seed, w);
  c.train.seed = c.seed;
  return c;
}

RunConfig RunConfig::from_json(const json& j) { return from_json(j, RunConfig{}); }

RunConfig RunConfig::load(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  return from_json(j, std::move(base));
}

std::uint64_t RunConfig::hash() const { return fnv1a(to_json().dump()); }

void RunConfig::validate() const {
  if (!data.synth && data.csv.empty()) throw ParseError("no data source: set data.csv or data.synth");
  if (!data.synth && data.manifest.empty()) throw ParseError("a CSV data source needs data.manifest");
  if (horizon < 1) throw ParseError("horizon must be >= 1");
  if (stride < 0) throw ParseError("stride must be >= 0");
  if (tau && *tau < 1) throw ParseError("tau must be >= 1");
  if (data.length < 1) throw ParseError("data.length must be >= 1");
  if (tdl_capacity < 1) throw ParseError("tdl_capacity must be >= 1");
  if (!(c_max > 0.0)) throw ParseError("c_max must be positive");
  if (data.synth && data.synth->kind != SynthKind::kSimQuad && task != Task::kGeneric) {
    throw ParseError("task '" + msp::to_string(task) + "' needs quadrotor data; use task 'generic'");
  }
  try {
    train.validate();
    mm.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  if (task == Task::kHybrid) {
    parse_model_spec(im_model);
    parse_model_spec(om_model);
  } else {
    parse_model_spec(model);
  }
}

int effective_tau(const RunConfig& cfg) {
  std::vector<ModelSpec> specs;
  if (cfg.task == Task::kHybrid) {
    specs = {parse_model_spec(cfg.im_model), parse_model_spec(cfg.om_model)};
  } else {
    specs = {parse_model_spec(cfg.model)};
  }
  std::optional<int> tau = cfg.tau;
  for (const auto& s : specs) {
    if (s.init == InitKind::kWashout) continue;
    if (tau && *tau != s.length) {
      throw ParseError("tau " + std::to_string(*tau) + " disagrees with the model spec initialization length " +
                       std::to_string(s.length));
    }
    tau = s.length;
  }
  int t = tau.value_or(10);
  for (const auto& s : specs)
    if (s.init == InitKind::kWashout && s.length > t + 1) {
      if (cfg.tau) {
        throw ParseError("washout length " + std::to_string(s.length) + " exceeds tau + 1 = " + std::to_string(t + 1));
      }
      t = s.length - 1;
    }
  return t;
}

TimeSeries load_source(const DataSource& src) {
  if (src.synth) return synth_generate(*src.synth, src.length);
  return load_csv(src.csv, Manifest::load(src.manifest));
}

PreparedData prepare_data(const RunConfig& cfg) { return prepare_data(cfg, load_source(cfg.data)); }

namespace {

PreparedData prepare_with(const RunConfig& cfg, const TimeSeries& raw, const Normalizer* fixed) {
  PreparedData p;
  p.raw = raw;
  p.tau = effective_tau(cfg);
  const TimeSeries task = task_series(raw, cfg.task);
  if (fixed) {
    if (fixed->u_scale.size() != task.u.cols() || fixed->y_scale.size() != task.y.cols()) {
      throw DimensionError("normalizer covers " + std::to_string(fixed->u_scale.size()) + " inputs and " +
                           std::to_string(fixed->y_scale.size()) + " outputs, data has " +
                           std::to_string(task.u.cols()) + " and " + std::to_string(task.y.cols()));
    }
    p.normalizer = *fixed;
  } else {
    p.normalizer = cfg.normalize ? Normalizer::from_maxima(task) : Normalizer::identity(task.u.cols(), task.y.cols());
    if (cfg.task == Task::kHybrid && cfg.gains) p.normalizer.y_scale = cfg.gains->stacked();
  }
  p.series = p.normalizer.apply(task);
  const int stride = cfg.stride > 0 ? cfg.stride : cfg.horizon;
  p.split = split(window(p.series, p.tau, cfg.horizon, stride), cfg.split, cfg.seed);
  if (cfg.data.synth) {
    p.id = msp::to_string(cfg.data.synth->kind) + "-seed" + std::to_string(cfg.data.synth->seed) + "-n" +
           std::to_string(cfg.data.length);
  } else {
    p.id = std::filesystem::path(cfg.data.csv).filename().string();
  }
  return p;
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg, const TimeSeries& raw) { return prepare_with(cfg, raw, nullptr); }

PreparedData prepare_data(const RunConfig& cfg, const TimeSeries& raw, const Normalizer& fixed) {
  return prepare_with(cfg, raw, &fixed);
}

std::unique_ptr<Trainable> build_model(const RunConfig& cfg, const PreparedData& data) {
  const int m = static_cast<int>(data.series.u.cols());
  const int n = static_cast<int>(data.series.y.cols());
  if (cfg.task == Task::kHybrid) {
    const ModelSpec im = parse_model_spec(cfg.im_model), om = parse_model_spec(cfg.om_model);
    HybridConfig h;
    h.motors = m;
    h.im = im.predictor_config(m + 6, 4, cfg.mlfc_activation, cfg.tdl_capacity);
    h.om = om.predictor_config(m + 10, 6, cfg.mlfc_activation, cfg.tdl_capacity);
    h.im_init = im.initializer_config(data.tau, cfg.c_max);
    h.om_init = om.initializer_config(data.tau, cfg.c_max);
    h.mm = cfg.mm;
    h.mm.dt = data.series.dt;
    h.gains = NormGains::from_maxima(data.normalizer.y_scale);
    return std::make_unique<HybridModel>(h);
  }
  const ModelSpec spec = parse_model_spec(cfg.model);
  auto init = spec.initializer_config(data.tau, cfg.c_max);
  init.tau = data.tau;
  return std::make_unique<BlackBoxModel>(spec.predictor_config(m, n, cfg.mlfc_activation, cfg.tdl_capacity), init);
}

nlohmann::json checkpoint_meta(const RunConfig& cfg, const PreparedData& data, const TrainResult* result) {
  json j;
  j["format"] = "msp-checkpoint";
  j["version"] = kVersion;
  j["config"] = json::parse(cfg.to_json().dump());
  j["config_hash"] = hash_hex(cfg.hash());
  j["normalizer"] = {{"u_scale", std::vector<double>(data.normalizer.u_scale.data(),
                                                     data.normalizer.u_scale.data() + data.normalizer.u_scale.size())},
                     {"y_scale", std::vector<double>(data.normalizer.y_scale.data(),
                                                     data.normalizer.y_scale.data() + data.normalizer.y_scale.size())}};
  j["tau"] = data.tau;
  j["dataset"] = data.id;
  if (result) {
    j["best_epoch"] = result->best_epoch;
    j["best_val"] = result->best_val;
    j["epochs_run"] = result->history.size();
  }
  return j;
}

Normalizer normalizer_from_meta(const nlohmann::json& meta) {
  const auto u = meta.at("normalizer").at("u_scale").get<std::vector<double>>();
  const auto y = meta.at("normalizer").at("y_scale").get<std::vector<double>>();
  Normalizer n;
  n.u_scale = Eigen::Map<const Vec>(u.data(), static_cast<Eigen::Index>(u.size()));
  n.y_scale = Eigen::Map<const Vec>(y.data(), static_cast<Eigen::Index>(y.size()));
  return n;
}

PredictionReport evaluate(const Trainable& model, const ParamVector& theta, const RunConfig& cfg,
                          const PreparedData& data, const std::vector<SampleWindow>& windows) {
  const Predictions p = predict_all(model, theta, windows, data.normalizer, cfg.train.workers);
  std::vector<int> channels;
  double scale = 1.0;
  std::string unit = "output units";
  switch (cfg.task) {
    case Task::kBodyRate:
      unit = "rad/s";
      break;
    case Task::kVelocity:
      unit = "m/s";
      break;
    case Task::kEulerRates:
      scale = 180.0 / std::numbers::pi;
      unit = "deg/s";
      break;
    case Task::kHybrid:
      channels = {3, 4, 5};
      unit = "m/s";
      break;
    case Task::kGeneric:
      break;
  }
  PredictionReport r = distributions(p.predicted, p.target, channels, scale);
  r.unit = unit;
  r.tau = data.tau;
  r.dataset_id = data.id;
  r.model_id = cfg.task == Task::kHybrid ? "hybrid(" + cfg.im_model + "|" + cfg.om_model + ")" : cfg.model;
  return r;
}

ordered_json run_manifest(const RunConfig& cfg, const std::string& command) {
  ordered_json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["config_hash"] = hash_hex(cfg.hash());
  j["seed"] = cfg.seed;
  j["config"] = cfg.to_json();
  return j;
}

}  // namespace msp
