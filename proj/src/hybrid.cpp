#include "msp/hybrid.hpp"

namespace msp {

void NormGains::validate() const {
  if (!(omega.array() > 0.0).all() || !(xi_dot.array() > 0.0).all()) {
    throw std::invalid_argument("normalization gains must be strictly positive");
  }
}

Vec NormGains::stacked() const {
  Vec g(6);
  g << omega, xi_dot;
  return g;
}

NormGains NormGains::from_maxima(const Vec& m) {
  if (m.size() != 6) throw DimensionError("NormGains::from_maxima expects 6 output maxima");
  NormGains g;
  g.omega = m.head<3>();
  g.xi_dot = m.tail<3>();
  for (int i = 0; i < 3; ++i) {
    if (g.omega(i) == 0.0) g.omega(i) = 1.0;
    if (g.xi_dot(i) == 0.0) g.xi_dot(i) = 1.0;
  }
  return g;
}

namespace {

constexpr int kOutputs = 6;
constexpr int kWrench = 4;

}  // namespace

HybridModel::HybridModel(HybridConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.mm.validate();
  cfg_.gains.validate();
  if (cfg_.motors < 1) throw DimensionError("hybrid model needs at least one motor input");
  if (cfg_.im_init.kind == InitKind::kWashout || cfg_.om_init.kind == InitKind::kWashout) {
    throw std::invalid_argument("hybrid submodules need an MLP or RNN initializer");
  }
  cfg_.im.input_dim = cfg_.motors + kOutputs;
  cfg_.im.output_dim = kWrench;
  cfg_.om.input_dim = cfg_.motors + kWrench + kOutputs;
  cfg_.om.output_dim = kOutputs;
  im_ = std::make_unique<InitializedRnn>(cfg_.im, cfg_.im_init, layout_, "im.", cfg_.motors, kOutputs);
  om_ = std::make_unique<InitializedRnn>(cfg_.om, cfg_.om_init, layout_, "om.", cfg_.motors, kOutputs);

  const double dt = cfg_.mm.dt;
  wrench_scale_.resize(kWrench);
  wrench_scale_.head<3>() = cfg_.mm.inertia.cwiseProduct(cfg_.gains.omega) / (10.0 * dt);
  wrench_scale_(3) = cfg_.mm.mass * cfg_.mm.gravity;
  wrench_offset_ = Vec::Zero(kWrench);
  wrench_offset_(3) = cfg_.mm.mass * cfg_.mm.gravity;
}

void HybridModel::init_params(ParamVector& theta, std::mt19937_64& rng, double scale) const {
  im_->init_params(theta, rng, scale);
  om_->init_params(theta, rng, scale);
}

HybridModel::TapeState HybridModel::start(Tape& tape, const SampleWindow& w, const DropoutContext* dropout) const {
  if (w.init.y.cols() != kOutputs || w.init.u.cols() != cfg_.motors) {
    throw DimensionError("hybrid windows need " + std::to_string(cfg_.motors) + " motor inputs and 6 outputs");
  }
  if (w.init_aux.cols() < 6) throw DimensionError("hybrid windows need auxiliary phi,theta,psi,x,y,z");
  TapeState x;
  x.im = im_->start(tape, w.init, dropout).state;
  x.om = om_->start(tape, w.init, dropout).state;
  const Eigen::Index k0 = w.init_aux.rows() - 1;
  x.eta = tape.constant(Vec(w.init_aux.row(k0).head(3).transpose()));
  x.xi = tape.constant(Vec(w.init_aux.row(k0).segment(3, 3).transpose()));
  x.feedback = tape.constant(Vec(w.init.y.row(w.init.y.rows() - 1).transpose()));
  return x;
}

std::pair<HybridModel::TapeState, HybridModel::StepTrace> HybridModel::step(Tape& tape, const TapeState& x, Var u,
                                                                            const DropoutContext* dropout) const {
  if (u.size() != cfg_.motors) throw DimensionError("hybrid step expects " + std::to_string(cfg_.motors) + " motor inputs");
  const Vec gains = cfg_.gains.stacked();
  TapeState next;
  StepTrace tr;

  // Input model: [u; physical fed-back rates and velocity] -> wrench.
  const Var fb_phys = tape.mul_const(x.feedback, gains);
  auto [im_next, wrench_n] = im_->predictor().step(tape, x.im, tape.concat({u, fb_phys}), dropout);
  next.im = std::move(im_next);
  tr.wrench_n = wrench_n;
  tr.wrench = tape.add_const(tape.mul_const(wrench_n, wrench_scale_), wrench_offset_);

  // Motion model with its rates and velocity overridden by the compensated feedback.
  QuadTapeState q{x.eta, tape.slice(fb_phys, 0, 3), x.xi, tape.slice(fb_phys, 3, 3)};
  const QuadTapeState qn = mm_step_tape(tape, cfg_.mm, q, tr.wrench);
  next.eta = qn.eta;
  next.xi = qn.xi;
  tr.mm_out_n = tape.mul_const(tape.concat({qn.omega, qn.xi_dot}), gains.cwiseInverse());

  // Output model: additive correction.
  auto [om_next, delta] = om_->predictor().step(tape, x.om, tape.concat({u, wrench_n, tr.mm_out_n}), dropout);
  next.om = std::move(om_next);
  tr.correction = delta;
  tr.output = tr.mm_out_n + delta;
  next.feedback = tr.output;
  return {std::move(next), tr};
}

std::vector<Var> HybridModel::rollout(Tape& tape, TapeState x, const Mat& inputs, const DropoutContext* dropout) const {
  if (inputs.rows() < 1) throw DimensionError("hybrid rollout needs T >= 1");
  std::vector<Var> ys;
  ys.reserve(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
    tape.set_step(static_cast<int>(k));
    auto [nx, tr] = step(tape, x, tape.constant(Vec(inputs.row(k).transpose())), dropout);
    x = std::move(nx);
    ys.push_back(tr.output);
  }
  return ys;
}

WindowLoss HybridModel::window_loss(Tape& tape, const SampleWindow& w, double alpha, double /*beta*/,
                                    const DropoutContext* dropout) const {
  const auto ys = rollout(tape, start(tape, w, dropout), w.pred_u, dropout);
  const Var lp = msse_loss(tape, ys, w.pred_y);
  WindowLoss out;
  out.pred = lp.scalar();
  out.total = lp * alpha;
  return out;
}

Mat HybridModel::predict(const ParamVector& theta, const SampleWindow& w) const {
  Tape tape({theta.values().data(), theta.size()}, false);
  return stack_rows(rollout(tape, start(tape, w), w.pred_u));
}

HybridModel::State HybridModel::to_plain(const TapeState& x) const {
  State s;
  s.im = im_->predictor().from_tape(x.im);
  s.om = om_->predictor().from_tape(x.om);
  s.eta = x.eta.value();
  s.xi = x.xi.value();
  s.feedback = x.feedback.value();
  return s;
}

HybridModel::TapeState HybridModel::to_tape(Tape& tape, const State& s) const {
  if (s.feedback.size() != kOutputs) throw DimensionError("hybrid feedback must have 6 entries");
  TapeState x;
  x.im = im_->predictor().to_tape(tape, s.im);
  x.om = om_->predictor().to_tape(tape, s.om);
  x.eta = tape.constant(Vec(s.eta));
  x.xi = tape.constant(Vec(s.xi));
  x.feedback = tape.constant(s.feedback);
  return x;
}

std::pair<HybridModel::State, Vec> hybrid_step(const HybridModel& model, const ParamVector& theta,
                                               const HybridModel::State& x, const Vec& u) {
  Tape tape({theta.values().data(), theta.size()}, false);
  auto [nx, tr] = model.step(tape, model.to_tape(tape, x), tape.constant(u));
  return {model.to_plain(nx), tr.output.value()};
}

Mat hybrid_rollout(const HybridModel& model, const ParamVector& theta, const SampleWindow& w) {
  return model.predict(theta, w);
}

void zero_output_correction(const HybridModel& model, ParamVector& theta) {
  const auto& p = model.om().predictor();
  theta.view(p.out_as()).setZero();
  theta.view(p.out_ao()).setZero();
  theta.view(p.out_b()).setZero();
}

}  // namespace msp
