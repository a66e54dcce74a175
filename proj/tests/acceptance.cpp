// End-to-end acceptance checks. Prints one PASS/FAIL/SKIP line per criterion.
// Usage: acceptance [criterion numbers...]   (all when none given)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "msp/run.hpp"
#include "oracles.hpp"

using namespace msp;

namespace {

enum class Outcome { kPass, kFail, kSkip };

struct Result {
  Outcome outcome;
  std::string detail;
};

Result verdict(bool ok, const std::string& detail) { return {ok ? Outcome::kPass : Outcome::kFail, detail}; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double a = 1.0) {
  std::uniform_real_distribution<double> d(-a, a);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

double mean_over(const PredictionReport& r, int from, int to) {
  double s = 0.0;
  for (int k = from; k < to; ++k) s += r.steps[static_cast<std::size_t>(k)].mean;
  return s / (to - from);
}

// ---------------------------------------------------------------------------

Result gradients() {
  SynthSystem quad;
  quad.kind = SynthKind::kSimQuad;
  quad.seed = 2;
  const TimeSeries quad_raw = synth_generate(quad, 400);
  const TimeSeries lin_raw = synth_generate(SynthSystem{}, 400);
  struct Case {
    std::string name, spec;
    bool hybrid;
  };
  const std::vector<Case> cases = {{"MLFC 2x8", "MLFC:2x8-Washout:5", false},
                                   {"LSTM 2x8", "LSTM:2x8-Washout:5", false},
                                   {"LSTM+TDL 1x8", "LSTM TDL:1x8-Washout:5", false},
                                   {"MLFC-MLP", "MLFC:2x8-MLP:8x5", false},
                                   {"LSTM-RNN", "LSTM:2x8-RNN:6x5", false},
                                   {"hybrid", "LSTM:1x4-MLP:6x5", true}};
  double worst = 0.0;
  std::string worst_case;
  for (const auto& c : cases) {
    RunConfig cfg;
    cfg.task = c.hybrid ? Task::kHybrid : Task::kGeneric;
    cfg.model = cfg.im_model = cfg.om_model = c.spec;
    cfg.tau = 5;
    cfg.horizon = 8;
    cfg.tdl_capacity = 3;
    const PreparedData d = prepare_data(cfg, c.hybrid ? quad_raw : lin_raw);
    const auto model = build_model(cfg, d);
    const ParamVector th = model->fresh_params(11, 0.3);
    for (const auto& b : gradient_check(*model, th, d.split.train.at(0), 1.0, 1.0)) {
      if (b.max_rel_error > worst) {
        worst = b.max_rel_error;
        worst_case = c.name + " " + b.block;
      }
    }
  }
  return verdict(worst < 1e-4, "worst relative error " + num(worst) + " (" + worst_case + ")");
}

Result forward_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<int> pick(0, 1000);
    PredictorConfig cfg;
    cfg.kind = pick(rng) % 2 ? PredictorKind::kLstm : PredictorKind::kMlfc;
    cfg.input_dim = 1 + pick(rng) % 3;
    cfg.output_dim = 1 + pick(rng) % 3;
    const int layers = 1 + pick(rng) % 3;
    for (int l = 0; l < layers; ++l) cfg.layer_sizes.push_back(2 + pick(rng) % 5);
    cfg.activation = pick(rng) % 3 == 0 ? Activation::kLogistic : Activation::kTanh;
    cfg.tdl_capacity = pick(rng) % 3 == 0 ? 1 + pick(rng) % 3 : 0;
    cfg.peepholes = pick(rng) % 4 != 0;
    ParamLayout layout;
    const Predictor net(cfg, layout, "p.");
    ParamVector th(layout);
    net.init_params(th, rng, 0.6);
    RnnState x0 = net.zero_state();
    x0.o = random_mat(x0.o.size(), 1, rng, 0.7);
    x0.s = random_mat(x0.s.size(), 1, rng, 0.7);
    const Mat u = random_mat(9, cfg.input_dim, rng);
    const Mat got = rollout(net, th, x0, u);
    const Mat want = oracle::rollout(cfg, th, "p.", oracle::from_flat(cfg, oracle::to_v(x0.x())), u);
    worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
  }
  return verdict(worst <= 1e-12, "max |rollout - oracle| " + num(worst) + " over 10 configurations");
}

Result linear_convergence() {
  RunConfig cfg;
  SynthSystem s;
  s.a1 = 0.9;
  s.a2 = 0.0;
  s.b0 = 0.1;
  s.seed = 4;
  cfg.data.synth = s;
  cfg.data.length = 3000;
  cfg.model = "MLFC:1x4-MLP:8x5";
  cfg.horizon = 20;
  cfg.train.epochs = 200;
  cfg.train.optimizer.lr = 5e-3;
  cfg.train.batch_size = 8;
  cfg.seed = cfg.train.seed = 1;
  const PreparedData d = prepare_data(cfg);
  const auto model = build_model(cfg, d);
  const TrainResult r = train(*model, d.split.train, d.split.val, cfg.train);
  const Predictions p = predict_all(*model, r.theta, d.split.test, d.normalizer);
  double msse = 0.0;
  for (std::size_t i = 0; i < p.predicted.size(); ++i) msse += msse_loss(p.predicted[i], p.target[i]);
  msse /= static_cast<double>(p.predicted.size());
  return verdict(msse < 1e-3, "test MSSE " + num(msse) + " after 200 epochs");
}

Result init_beats_washout() {
  PredictionReport reports[2];
  const std::string models[2] = {"LSTM:1x16-MLP:32x10", "LSTM:1x16-Washout:10"};
  for (int i = 0; i < 2; ++i) {
    RunConfig cfg;
    SynthSystem s;
    s.kind = SynthKind::kVanDerPol;
    s.mu = 0.5;
    s.dt = 0.2;
    s.excitation.amplitude = 6.0;
    s.seed = 7;
    cfg.data.synth = s;
    cfg.data.length = 16000;
    cfg.model = models[i];
    cfg.horizon = 40;
    cfg.train.epochs = 400;
    cfg.train.optimizer.lr = 5e-3;
    cfg.train.batch_size = 8;
    cfg.seed = cfg.train.seed = 3;
    const PreparedData d = prepare_data(cfg);
    const auto model = build_model(cfg, d);
    const TrainResult r = train(*model, d.split.train, d.split.val, cfg.train);
    reports[i] = evaluate(*model, r.theta, cfg, d, d.split.test);
  }
  const double early_mlp = mean_over(reports[0], 0, 10), early_wash = mean_over(reports[1], 0, 10);
  const double ratio = mean_over(reports[0], 30, 40) / mean_over(reports[1], 30, 40);
  return verdict(early_mlp < early_wash && ratio >= 0.5 && ratio <= 2.0,
                 "steps 1-10: MLP " + num(early_mlp) + " vs washout " + num(early_wash) + "; steps 31-40 ratio " +
                     num(ratio));
}

/// Shared SimQuad experiment for the hybrid and practical-mode criteria.
struct QuadExperiment {
  PredictionReport hybrid, teacher_forced, practical;
};

const QuadExperiment& quad_experiment() {
  static const QuadExperiment e = [] {
    SynthSystem s;
    s.kind = SynthKind::kSimQuad;
    s.seed = 5;
    s.quad.gust_torque = 0.05;
    s.quad.gust_time = 1.0;
    const Eigen::Index length = 20000;
    const TimeSeries raw = synth_generate(s, length);
    auto base = [&](Task t) {
      RunConfig c;
      c.data.synth = s;
      c.data.length = length;
      c.task = t;
      c.horizon = 40;
      c.train.epochs = 150;
      c.train.optimizer.lr = 5e-3;
      c.train.batch_size = 8;
      c.seed = c.train.seed = 3;
      c.model = "LSTM:1x16-MLP:32x10";
      c.im_model = c.om_model = "LSTM:1x8-MLP:16x10";
      return c;
    };
    QuadExperiment out;
    const RunConfig cb = base(Task::kBodyRate), cv = base(Task::kVelocity), ch = base(Task::kHybrid);
    const PreparedData db = prepare_data(cb, raw), dv = prepare_data(cv, raw), dh = prepare_data(ch, raw);
    const auto mb = build_model(cb, db), mv = build_model(cv, dv), mh = build_model(ch, dh);
    const TrainResult rb = train(*mb, db.split.train, db.split.val, cb.train);
    const TrainResult rv = train(*mv, dv.split.train, dv.split.val, cv.train);
    const TrainResult rh = train(*mh, dh.split.train, dh.split.val, ch.train);
    out.teacher_forced = evaluate(*mv, rv.theta, cv, dv, dv.split.test);
    out.hybrid = evaluate(*mh, rh.theta, ch, dh, dh.split.test);
    std::vector<Mat> pred, target;
    for (const auto& w : dv.split.test) {
      pred.push_back(dv.normalizer.denormalize_y(cascade_predict(*mb, rb.theta, *mv, rv.theta, w)));
      target.push_back(dv.normalizer.denormalize_y(w.pred_y));
    }
    out.practical = distributions(pred, target);
    return out;
  }();
  return e;
}

Result hybrid_beats_blackbox() {
  const QuadExperiment& e = quad_experiment();
  const double h1 = e.hybrid.steps[0].mean, p1 = e.practical.steps[0].mean;
  return verdict(h1 < p1 && e.hybrid.rmsse < e.practical.rmsse,
                 "step 1: hybrid " + num(h1) + " vs practical " + num(p1) + " m/s; RMSSE " + num(e.hybrid.rmsse) +
                     " vs " + num(e.practical.rmsse));
}

Result practical_not_better() {
  const QuadExperiment& e = quad_experiment();
  const int T = static_cast<int>(e.practical.steps.size());
  const double prac = mean_over(e.practical, 0, T), tf = mean_over(e.teacher_forced, 0, T);
  return verdict(prac >= tf, "mean velocity error: practical " + num(prac) + " vs teacher-forced " + num(tf) + " m/s");
}

Result motion_model() {
  MmParams p;
  double hover = 0.0;
  QuadState s;
  for (int k = 0; k < 100; ++k) {
    const QuadState n = mm_step(p, s, Wrench(0, 0, 0, p.mass * p.gravity));
    hover = std::max(hover, (n.xi_dot - s.xi_dot).cwiseAbs().maxCoeff());
    s = n;
  }
  double fall = 0.0;
  s = QuadState{};
  for (int k = 1; k <= 100; ++k) {
    s = mm_step(p, s, Wrench::Zero());
    fall = std::max(fall, std::abs(s.xi_dot(2) + p.gravity * k * p.dt));
  }
  double torque = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    Wrench w(0, 0, 0, p.mass * p.gravity);
    w(axis) = 2e-3;
    QuadState q;
    for (int k = 0; k < 10; ++k) q = mm_step(p, q, w);
    Vec ref = Vec::Zero(12);
    const double h = p.dt / 100.0;
    for (int k = 0; k < 1000; ++k) {
      const Vec k1 = oracle::quad_derivative(p, ref, w);
      const Vec k2 = oracle::quad_derivative(p, ref + 0.5 * h * k1, w);
      const Vec k3 = oracle::quad_derivative(p, ref + 0.5 * h * k2, w);
      const Vec k4 = oracle::quad_derivative(p, ref + h * k3, w);
      ref += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    torque = std::max(torque, (q.omega - ref.segment(3, 3)).cwiseAbs().maxCoeff());
  }
  return verdict(hover < 1e-12 && fall <= 1e-9 && torque <= 1e-6,
                 "hover drift " + num(hover) + ", free fall " + num(fall) + ", torque response " + num(torque));
}

class EchoModel : public Trainable {
 public:
  EchoModel() { layout_.add("unused", 1); }
  const ParamLayout& layout() const override { return layout_; }
  void init_params(ParamVector&, std::mt19937_64&, double) const override {}
  WindowLoss window_loss(Tape& t, const SampleWindow&, double, double, const DropoutContext*) const override {
    return {t.constant(0.0), 0.0, 0.0};
  }
  Mat predict(const ParamVector&, const SampleWindow& w) const override { return w.pred_y; }
  int output_dim() const override { return 3; }

 private:
  ParamLayout layout_;
};

Result metrics() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Mat> p, t;
    double acc = 0.0;
    for (int i = 0; i < 5; ++i) {
      p.push_back(random_mat(12, 3, rng, 3.0));
      t.push_back(random_mat(12, 3, rng, 3.0));
      for (int k = 0; k < 12; ++k)
        for (int j = 0; j < 3; ++j) acc += (p[i](k, j) - t[i](k, j)) * (p[i](k, j) - t[i](k, j));
    }
    worst = std::max(worst, std::abs(rmsse(p, t) - std::sqrt(acc / 60.0)));
    const Vec e = random_mat(3, 1, rng, 5.0);
    worst = std::max(worst, std::abs(step_error_norm(e) - (std::abs(e(0)) + std::abs(e(1)) + std::abs(e(2))) / 3.0));
  }
  SampleWindow vw;
  vw.init = {random_mat(6, 7, rng), random_mat(6, 3, rng)};
  vw.pred_u = random_mat(10, 7, rng);
  vw.pred_y = random_mat(10, 3, rng);
  InitializerConfig ic;
  ic.kind = InitKind::kMlp;
  ic.hidden = 6;
  ic.tau = 5;
  const BlackBoxModel vel({PredictorKind::kLstm, 7, 3, {5}}, ic);
  const ParamVector th = vel.fresh_params(1, 0.5);
  const EchoModel perfect;
  const bool identical = cascade_predict(perfect, ParamVector(perfect.layout()), vel, th, vw) == vel.predict(th, vw);
  return verdict(worst <= 1e-12 && identical,
                 "max metric deviation " + num(worst) + ", substitution identity " + (identical ? "exact" : "broken"));
}

Result table_maxima() {
  const char* csv = std::getenv("MSP_PELICAN_CSV");
  const char* manifest = std::getenv("MSP_PELICAN_MANIFEST");
  if (!csv || !manifest || !std::filesystem::exists(csv) || !std::filesystem::exists(manifest)) {
    return {Outcome::kSkip, "set MSP_PELICAN_CSV and MSP_PELICAN_MANIFEST to the flight dataset to enable"};
  }
  const TimeSeries s = load_csv(csv, Manifest::load(manifest));
  if (s.y.cols() != 6) return verdict(false, "manifest must list outputs p,q,r,vx,vy,vz");
  const Vec got = compute_maxima(s.y);
  Vec want(6);
  want << 3.9116, 3.8506, 3.7902, 3.9268, 3.9721, 5.8526;
  const double dev = (got - want).cwiseAbs().maxCoeff();
  return verdict(dev <= 1e-4, "max deviation from reference maxima " + num(dev));
}

Result determinism() {
  RunConfig cfg;
  SynthSystem s;
  s.kind = SynthKind::kVanDerPol;
  s.measurement_noise = 0.01;
  cfg.data.synth = s;
  cfg.data.length = 1500;
  cfg.model = "LSTM:1x8-MLP:8x5";
  cfg.horizon = 15;
  cfg.train.epochs = 8;
  cfg.train.dropout = 0.1;
  cfg.train.workers = 2;
  const auto dir = std::filesystem::temp_directory_path() / "msp_acceptance_determinism";
  std::filesystem::create_directories(dir);
  std::string reports[2];
  std::vector<double> histories[2];
  for (int run = 0; run < 2; ++run) {
    const PreparedData d = prepare_data(cfg);
    const auto model = build_model(cfg, d);
    const TrainResult r = train(*model, d.split.train, d.split.val, cfg.train);
    for (const auto& e : r.history) {
      histories[run].push_back(e.train_loss);
      histories[run].push_back(e.val_loss);
    }
    const auto path = dir / ("report" + std::to_string(run) + ".csv");
    write_report_csv(path, evaluate(*model, r.theta, cfg, d, d.split.test));
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    reports[run] = ss.str();
  }
  std::filesystem::remove_all(dir);
  const bool same_history = histories[0] == histories[1], same_report = reports[0] == reports[1];
  return verdict(same_history && same_report && !reports[0].empty(),
                 std::string("loss histories ") + (same_history ? "identical" : "differ") + ", reports " +
                     (same_report ? "identical" : "differ"));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
      {"gradient correctness", gradients},
      {"forward oracles", forward_oracle},
      {"linear system convergence", linear_convergence},
      {"learned initializer beats washout", init_beats_washout},
      {"hybrid beats black-box cascade early", hybrid_beats_blackbox},
      {"motion model physics", motion_model},
      {"metrics and substitution identity", metrics},
      {"practical mode no better than teacher-forced", practical_not_better},
      {"flight dataset maxima", table_maxima},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {Outcome::kFail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = r.outcome == Outcome::kPass ? "PASS" : (r.outcome == Outcome::kFail ? "FAIL" : "SKIP");
    if (r.outcome == Outcome::kFail) ++failed;
    std::printf("[%s] %2d %s: %s (%.1fs)\n", tag, id, criteria[i].first.c_str(), r.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
