// msp: simulate, train, eval, predict and gradcheck from the command line.
//
// Settings resolve as: command-line flags > --config file > checkpoint config (eval/predict) > defaults.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "msp/run.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

/// Flags that map onto RunConfig keys.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> csv, manifest, synth;
  std::optional<long> length;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::string> task, model, im_model, om_model;
  std::optional<int> tau, horizon, stride;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr, alpha, beta, clip, weight_decay, dropout;
  std::optional<std::string> optimizer;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;

  json overlay() const {
    json j = json::object();
    if (csv) j["data"]["csv"] = *csv;
    if (manifest) j["data"]["manifest"] = *manifest;
    if (synth) j["data"]["synth"]["kind"] = *synth;
    if (data_seed) j["data"]["synth"]["seed"] = *data_seed;
    if (length) j["data"]["length"] = *length;
    if (task) j["task"] = *task;
    if (model) j["model"] = *model;
    if (im_model) j["im_model"] = *im_model;
    if (om_model) j["om_model"] = *om_model;
    if (tau) j["tau"] = *tau;
    if (horizon) j["horizon"] = *horizon;
    if (stride) j["stride"] = *stride;
    if (epochs) j["train"]["epochs"] = *epochs;
    if (batch_size) j["train"]["batch_size"] = *batch_size;
    if (lr) j["train"]["lr"] = *lr;
    if (alpha) j["train"]["alpha"] = *alpha;
    if (beta) j["train"]["beta"] = *beta;
    if (clip) j["train"]["clip_norm"] = *clip;
    if (weight_decay) j["train"]["weight_decay"] = *weight_decay;
    if (dropout) j["train"]["dropout"] = *dropout;
    if (optimizer) j["train"]["optimizer"] = *optimizer;
    if (seed) j["seed"] = *seed;
    if (workers) j["workers"] = *workers;
    if (out) j["output_dir"] = *out;
    return j;
  }
};

void add_data_flags(CLI::App* c, Overrides& o) {
  c->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
  c->add_option("--csv", o.csv, "Dataset CSV");
  c->add_option("--manifest", o.manifest, "Dataset manifest (JSON)");
  c->add_option("--synth", o.synth, "Synthetic system: linear2, vanderpol, simquad");
  c->add_option("--length", o.length, "Synthetic series length");
  c->add_option("--data-seed", o.data_seed, "Synthetic data seed");
  c->add_option("--task", o.task, "bodyrate, velocity, euler-rates, hybrid or generic");
  c->add_option("--tau", o.tau, "Initialization length");
  c->add_option("--horizon", o.horizon, "Prediction steps per window");
  c->add_option("--stride", o.stride, "Window stride (0 = horizon)");
  c->add_option("--seed", o.seed, "Split and training seed");
  c->add_option("--workers", o.workers, "Worker threads");
  c->add_option("--out", o.out, "Output directory");
}

void add_model_flags(CLI::App* c, Overrides& o) {
  c->add_option("--model", o.model, "Model spec, e.g. \"LSTM:1x16-MLP:32x10\"");
  c->add_option("--im-model", o.im_model, "Hybrid input-network spec");
  c->add_option("--om-model", o.om_model, "Hybrid output-network spec");
}

void add_train_flags(CLI::App* c, Overrides& o) {
  c->add_option("--epochs", o.epochs);
  c->add_option("--batch-size", o.batch_size);
  c->add_option("--lr", o.lr, "Learning rate");
  c->add_option("--alpha", o.alpha, "Prediction loss weight");
  c->add_option("--beta", o.beta, "State-initialization loss weight");
  c->add_option("--clip", o.clip, "Gradient max-norm (<= 0 disables)");
  c->add_option("--weight-decay", o.weight_decay);
  c->add_option("--dropout", o.dropout);
  c->add_option("--optimizer", o.optimizer, "adam or sgd");
}

RunConfig resolve(RunConfig base, const Overrides& o) {
  if (o.config) base = RunConfig::load(*o.config, std::move(base));
  return RunConfig::from_json(o.overlay(), std::move(base));
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

fs::path output_dir(const RunConfig& cfg, const std::string& command) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  const char* root = std::getenv("MSP_OUTPUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (command + "-" + hash_hex(cfg.hash()).substr(0, 8));
}

fs::path prepare_output(const RunConfig& cfg, const std::string& command, const std::string& cmdline) {
  const fs::path dir = output_dir(cfg, command);
  fs::create_directories(dir);
  std::ofstream(dir / "run_manifest.json") << run_manifest(cfg, cmdline).dump(2) << "\n";
  return dir;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

const std::vector<SampleWindow>& pick(const PreparedData& d, const std::string& which,
                                      std::vector<SampleWindow>& all) {
  if (which == "train") return d.split.train;
  if (which == "val") return d.split.val;
  if (which == "test") return d.split.test;
  all = d.split.train;
  all.insert(all.end(), d.split.val.begin(), d.split.val.end());
  all.insert(all.end(), d.split.test.begin(), d.split.test.end());
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.source_start < b.source_start; });
  return all;
}

void print_report(const PredictionReport& r, const std::string& label) {
  std::printf("%s: %zu windows, step-1 mean %.6g %s, final-step mean %.6g, RMSSE %.6g, p99 |e| %.6g\n",
              label.c_str(), r.windows, r.steps.front().mean, r.unit.c_str(), r.steps.back().mean, r.rmsse,
              r.abs_error_p99);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Overrides& o, const std::string& cmdline) {
  RunConfig base;
  base.data.synth = SynthSystem{};
  RunConfig cfg = resolve(base, o);
  if (!cfg.data.synth) throw ParseError("simulate needs a synthetic source (--synth or data.synth)");
  const TimeSeries s = synth_generate(*cfg.data.synth, cfg.data.length);
  const fs::path dir = prepare_output(cfg, "simulate", cmdline);
  save_csv(dir / "data.csv", s);
  const Table t = to_table(s);
  Manifest m;
  m.dt = s.dt;
  auto take = [&](Eigen::Index from, Eigen::Index n) {
    return std::vector<std::string>(t.names.begin() + from, t.names.begin() + from + n);
  };
  m.inputs = take(0, s.u.cols());
  m.outputs = take(s.u.cols(), s.y.cols());
  m.auxiliary = take(s.u.cols() + s.y.cols(), s.aux.cols());
  m.save(dir / "manifest.json");
  std::printf("wrote %lld steps (%s, dt=%g) to %s\n", static_cast<long long>(s.length()),
              to_string(cfg.data.synth->kind).c_str(), s.dt, (dir / "data.csv").c_str());
  return kExitOk;
}

int cmd_train(const Overrides& o, int log_every, const std::string& cmdline) {
  RunConfig cfg = resolve(RunConfig{}, o);
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  const auto model = build_model(cfg, data);
  const fs::path dir = prepare_output(cfg, "train", cmdline);
  write_json(dir / "config.json", cfg.to_json());
  std::fprintf(stderr, "%s: %zu train / %zu val / %zu test windows (%zu discarded), %zu parameters\n",
               data.id.c_str(), data.split.train.size(), data.split.val.size(), data.split.test.size(),
               data.split.discarded, model->layout().size());

  std::ofstream hist(dir / "loss_history.csv");
  hist << "epoch,train_loss,val_loss\n";
  hist.precision(17);
  const TrainResult res = train(*model, data.split.train, data.split.val, cfg.train, nullptr, [&](const EpochRecord& e) {
    hist << e.epoch << "," << e.train_loss << "," << e.val_loss << "\n";
    if (log_every > 0 && (e.epoch % log_every == 0 || e.epoch + 1 == cfg.train.epochs)) {
      std::fprintf(stderr, "epoch %4d  train %.6g  val %.6g\n", e.epoch, e.train_loss, e.val_loss);
    }
  });
  save_checkpoint(dir / "checkpoint.msp", res.theta, checkpoint_meta(cfg, data, &res));
  if (!data.split.test.empty()) {
    const PredictionReport r = evaluate(*model, res.theta, cfg, data, data.split.test);
    write_report_csv(dir / "test_report.csv", r);
    write_report_summary(dir / "test_summary.json", r);
    print_report(r, "test");
  }
  std::printf("best epoch %d (val %.6g); checkpoint %s\n", res.best_epoch, res.best_val,
              (dir / "checkpoint.msp").c_str());
  return kExitOk;
}

/// A checkpoint with its model rebuilt from the resolved config and data.
struct Loaded {
  Checkpoint ck;
  RunConfig cfg;
  PreparedData data;
  std::unique_ptr<Trainable> model;
};

Loaded load_model(const fs::path& path, const Overrides& o, bool allow_overrides) {
  Loaded l;
  l.ck = load_checkpoint(path);
  RunConfig base = RunConfig::from_json(l.ck.meta.at("config"));
  base.output_dir.clear();
  l.cfg = allow_overrides ? resolve(base, o) : base;
  l.cfg.validate();
  l.data = prepare_data(l.cfg, load_source(l.cfg.data), normalizer_from_meta(l.ck.meta));
  l.model = build_model(l.cfg, l.data);
  const std::string want = hash_hex(l.model->layout().hash());
  const std::string have = l.ck.meta.value("layout_hash", "");
  if (want != have) {
    throw ParseError("checkpoint '" + path.string() + "' does not match the configured model: layout hash " + have +
                     " (" + std::to_string(l.ck.theta.size()) + " parameters) vs " + want + " (" +
                     std::to_string(l.model->layout().size()) +
                     " parameters). Check the model spec, task, tau and data channels.");
  }
  return l;
}

int cmd_eval(const Overrides& o, const std::string& ckpt, const std::string& bodyrate_ckpt, const std::string& which,
             const std::string& cmdline) {
  Loaded v = load_model(ckpt, o, true);
  std::optional<Loaded> b;
  if (!bodyrate_ckpt.empty()) {
    if (v.cfg.task != Task::kVelocity) throw ParseError("--bodyrate-checkpoint needs a velocity checkpoint");
    Overrides data_only;
    data_only.csv = o.csv;
    data_only.manifest = o.manifest;
    b = load_model(bodyrate_ckpt, data_only, false);
    if (b->cfg.task != Task::kBodyRate) throw ParseError("'" + bodyrate_ckpt + "' is not a body-rate checkpoint");
    const Vec& vu = v.data.normalizer.u_scale;
    const Normalizer& bn = b->data.normalizer;
    if (vu.size() != bn.u_scale.size() + bn.y_scale.size() || vu.head(bn.u_scale.size()) != bn.u_scale ||
        vu.tail(bn.y_scale.size()) != bn.y_scale) {
      throw ParseError("body-rate and velocity checkpoints were normalized differently; train both on the same data");
    }
  }
  const fs::path dir = prepare_output(v.cfg, "eval", cmdline);
  std::vector<SampleWindow> all;
  const auto& windows = pick(v.data, which, all);
  if (windows.empty()) throw ParseError("no " + which + " windows to evaluate");
  const PredictionReport r = evaluate(*v.model, v.ck.theta, v.cfg, v.data, windows);
  write_report_csv(dir / "report.csv", r);
  write_report_summary(dir / "summary.json", r);
  print_report(r, which);
  if (b) {
    std::vector<Mat> pred, target;
    for (const auto& w : windows) {
      pred.push_back(v.data.normalizer.denormalize_y(cascade_predict(*b->model, b->ck.theta, *v.model, v.ck.theta, w)));
      target.push_back(v.data.normalizer.denormalize_y(w.pred_y));
    }
    PredictionReport p = distributions(pred, target);
    p.unit = r.unit;
    p.tau = r.tau;
    p.dataset_id = r.dataset_id;
    p.model_id = r.model_id + " practical";
    write_report_csv(dir / "practical_report.csv", p);
    write_report_summary(dir / "practical_summary.json", p);
    write_comparison_csv(dir / "teacher_forced_vs_practical.csv", compare(r, p));
    print_report(p, which + " practical");
  }
  return kExitOk;
}

int cmd_predict(const Overrides& o, const std::string& ckpt, const std::string& which, const std::string& cmdline) {
  Loaded l = load_model(ckpt, o, true);
  const fs::path dir = prepare_output(l.cfg, "predict", cmdline);
  std::vector<SampleWindow> all;
  const auto& windows = pick(l.data, which, all);
  const Predictions p = predict_all(*l.model, l.ck.theta, windows, l.data.normalizer, l.cfg.train.workers);
  const auto& names = l.data.series.output_names;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    Table t;
    t.dt = l.data.series.dt;
    t.names.push_back("step");
    t.names.push_back("source_row");
    for (Eigen::Index c = 0; c < p.predicted[i].cols(); ++c) {
      t.names.push_back("pred_" + (c < static_cast<Eigen::Index>(names.size()) ? names[c] : "y" + std::to_string(c)));
    }
    for (Eigen::Index c = 0; c < p.target[i].cols(); ++c) {
      t.names.push_back("meas_" + (c < static_cast<Eigen::Index>(names.size()) ? names[c] : "y" + std::to_string(c)));
    }
    const Eigen::Index rows = p.predicted[i].rows();
    t.data.resize(rows, 2 + p.predicted[i].cols() + p.target[i].cols());
    const Eigen::Index first = windows[i].source_start + windows[i].init.u.rows();
    for (Eigen::Index k = 0; k < rows; ++k) {
      t.data(k, 0) = static_cast<double>(k + 1);
      t.data(k, 1) = static_cast<double>(first + k);
    }
    t.data.middleCols(2, p.predicted[i].cols()) = p.predicted[i];
    t.data.rightCols(p.target[i].cols()) = p.target[i];
    char name[32];
    std::snprintf(name, sizeof name, "window_%04zu.csv", i);
    write_csv(dir / name, t);
  }
  std::printf("wrote %zu prediction files (%d steps each) to %s\n", windows.size(), l.cfg.horizon, dir.c_str());
  return kExitOk;
}

struct GradTarget {
  std::string label;
  RunConfig cfg;
};

int cmd_gradcheck(const Overrides& o, bool all, double tol, double eps, const std::string& cmdline) {
  RunConfig base;
  base.tau = 5;
  base.horizon = 8;
  base.tdl_capacity = 3;
  base.data.synth = SynthSystem{};
  base.data.length = 400;
  RunConfig cfg = resolve(base, o);
  if (!o.config && !o.csv && !o.synth && (cfg.task != Task::kGeneric)) cfg.data.synth->kind = SynthKind::kSimQuad;

  std::vector<GradTarget> targets;
  if (all) {
    const std::vector<std::pair<std::string, std::string>> generic = {
        {"MLFC 2x8", "MLFC:2x8-Washout:5"},        {"LSTM 2x8", "LSTM:2x8-Washout:5"},
        {"LSTM TDL 1x8", "LSTM TDL:1x8-Washout:5"}, {"MLFC-MLP", "MLFC:2x8-MLP:8x5"},
        {"LSTM-RNN", "LSTM:2x8-RNN:6x5"}};
    for (const auto& [label, spec] : generic) {
      RunConfig c = cfg;
      c.task = Task::kGeneric;
      c.model = spec;
      c.data.synth = SynthSystem{};
      targets.push_back({label, c});
    }
    RunConfig h = cfg;
    h.task = Task::kHybrid;
    h.im_model = h.om_model = "LSTM:1x4-MLP:6x5";
    h.data.synth = SynthSystem{};
    h.data.synth->kind = SynthKind::kSimQuad;
    targets.push_back({"hybrid", h});
  } else {
    targets.push_back({cfg.task == Task::kHybrid ? "hybrid" : cfg.model, cfg});
  }
  const fs::path dir = prepare_output(cfg, "gradcheck", cmdline);
  std::ofstream table(dir / "gradcheck.csv");
  table << "model,block,size,max_rel_error,max_abs_grad,pass\n";
  bool ok = true;
  std::printf("%-16s %-24s %6s %14s %s\n", "model", "block", "size", "max rel err", "");
  for (const auto& t : targets) {
    t.cfg.validate();
    const PreparedData d = prepare_data(t.cfg);
    if (d.split.train.empty()) throw ParseError("no training windows for gradcheck");
    const auto model = build_model(t.cfg, d);
    const ParamVector theta = model->fresh_params(t.cfg.seed, 0.3);
    for (const auto& b : gradient_check(*model, theta, d.split.train.front(), t.cfg.train.alpha, t.cfg.train.beta, eps)) {
      const bool pass = b.max_rel_error < tol;
      ok = ok && pass;
      std::printf("%-16s %-24s %6zu %14.3e %s\n", t.label.c_str(), b.block.c_str(), b.size, b.max_rel_error,
                  pass ? "ok" : "FAIL");
      table << '"' << t.label << "\"," << b.block << "," << b.size << "," << b.max_rel_error << "," << b.max_abs_grad
            << "," << (pass ? 1 : 0) << "\n";
    }
  }
  std::printf("%s (tolerance %.1e)\n", ok ? "gradcheck passed" : "gradcheck FAILED", tol);
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-step prediction of dynamic systems with recurrent networks"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Overrides o;
  std::string ckpt, bodyrate_ckpt, windows = "test";
  int log_every = 10;
  bool all = false;
  double tol = 1e-4, eps = 1e-5;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset (CSV + manifest)");
  add_data_flags(sim, o);

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_data_flags(tr, o);
  add_model_flags(tr, o);
  add_train_flags(tr, o);
  tr->add_option("--log-every", log_every, "Print every N epochs (0 = quiet)");

  auto* ev = app.add_subcommand("eval", "Error distributions of a checkpoint");
  add_data_flags(ev, o);
  add_model_flags(ev, o);
  ev->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--bodyrate-checkpoint", bodyrate_ckpt, "Also evaluate in practical (cascaded) mode")
      ->check(CLI::ExistingFile);
  ev->add_option("--windows", windows, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));

  auto* pr = app.add_subcommand("predict", "Per-window prediction CSVs from a checkpoint");
  add_data_flags(pr, o);
  add_model_flags(pr, o);
  pr->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  pr->add_option("--windows", windows, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  add_data_flags(gc, o);
  add_model_flags(gc, o);
  gc->add_flag("--all", all, "Check every built-in architecture at toy size");
  gc->add_option("--tolerance", tol, "Maximum relative error");
  gc->add_option("--eps", eps, "Finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  const std::string cmdline = join_args(argc, argv);
  try {
    if (*sim) return cmd_simulate(o, cmdline);
    if (*tr) return cmd_train(o, log_every, cmdline);
    if (*ev) return cmd_eval(o, ckpt, bodyrate_ckpt, windows, cmdline);
    if (*pr) return cmd_predict(o, ckpt, windows, cmdline);
    if (*gc) return cmd_gradcheck(o, all, tol, eps, cmdline);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
