#include "msp/initializers.hpp"

namespace msp {

void InitSegment::validate() const {
  if (u.rows() != y.rows()) {
    throw DimensionError("init segment has " + std::to_string(u.rows()) + " input rows and " +
                         std::to_string(y.rows()) + " output rows");
  }
  if (u.rows() < 2) throw DimensionError("init segment needs tau >= 1 (at least 2 rows)");
}

std::string to_string(InitKind k) {
  switch (k) {
    case InitKind::kWashout:
      return "Washout";
    case InitKind::kMlp:
      return "MLP";
    case InitKind::kRnn:
      return "RNN";
  }
  return "?";
}

InitializedRnn::InitializedRnn(PredictorConfig pred, InitializerConfig init, ParamLayout& layout,
                               const std::string& prefix, int segment_inputs, int segment_outputs)
    : predictor_(std::move(pred), layout, prefix + "pred."),
      init_(init),
      seg_m_(segment_inputs),
      seg_n_(segment_outputs) {
  if (init_.tau < 1) throw DimensionError("initialization length tau must be >= 1");
  bound_ = predictor_.state_bound(init_.c_max);
  const auto s = static_cast<std::size_t>(predictor_.state_count());
  const auto h = static_cast<std::size_t>(init_.hidden);
  switch (init_.kind) {
    case InitKind::kWashout:
      if (init_.washout < 1) throw DimensionError("washout length must be >= 1");
      if (init_.washout > init_.tau + 1) {
        throw DimensionError("washout length " + std::to_string(init_.washout) +
                             " exceeds the init segment length " + std::to_string(init_.tau + 1));
      }
      break;
    case InitKind::kMlp: {
      const auto in = static_cast<std::size_t>((init_.tau + 1) * (seg_m_ + seg_n_));
      w1_ = layout.add(prefix + "init.W1", h, in);
      b1_ = layout.add(prefix + "init.b1", h);
      wy_ = layout.add(prefix + "init.W2", s, h);
      by_ = layout.add(prefix + "init.b2", s);
      break;
    }
    case InitKind::kRnn:
      lstm_ = register_lstm_layer(layout, prefix + "init.lstm.", seg_m_ + seg_n_, init_.hidden, true);
      wy_ = layout.add(prefix + "init.Wy", s, h);
      by_ = layout.add(prefix + "init.by", s);
      break;
  }
}

bool InitializedRnn::segment_matches_predictor() const {
  return seg_m_ == predictor_.input_dim() && seg_n_ == predictor_.output_dim();
}

void InitializedRnn::init_params(ParamVector& theta, std::mt19937_64& rng, double scale) const {
  predictor_.init_params(theta, rng, scale);
  std::uniform_real_distribution<double> dist(-scale, scale);
  auto fill = [&](const ParamBlock& b) {
    auto v = theta.view(b);
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, j) = dist(rng);
  };
  switch (init_.kind) {
    case InitKind::kWashout:
      break;
    case InitKind::kMlp:
      fill(w1_);
      fill(b1_);
      fill(wy_);
      fill(by_);
      break;
    case InitKind::kRnn: {
      fill(lstm_.wx);
      fill(lstm_.wm);
      fill(lstm_.bias);
      theta.view(lstm_.bias).block(init_.hidden, 0, init_.hidden, 1).setConstant(1.0);
      fill(lstm_.peep);
      fill(wy_);
      fill(by_);
      break;
    }
  }
}

Var InitializedRnn::emit_mlp(Tape& tape, const InitSegment& seg) const {
  // Flatten as [u_{k0-tau}, ..., u_{k0}, y_{k0-tau}, ..., y_{k0}].
  const Eigen::Index rows = seg.u.rows();
  Vec flat(rows * (seg_m_ + seg_n_));
  for (Eigen::Index r = 0; r < rows; ++r) flat.segment(r * seg_m_, seg_m_) = seg.u.row(r).transpose();
  const Eigen::Index y_off = rows * seg_m_;
  for (Eigen::Index r = 0; r < rows; ++r) flat.segment(y_off + r * seg_n_, seg_n_) = seg.y.row(r).transpose();
  const Var hidden = tape.tanh(tape.matvec(w1_, tape.constant(std::move(flat))) + tape.param(b1_));
  return tape.mul_const(tape.tanh(tape.matvec(wy_, hidden) + tape.param(by_)), bound_);
}

Var InitializedRnn::emit_rnn(Tape& tape, const InitSegment& seg) const {
  Var c = tape.constant(Vec::Zero(init_.hidden));
  Var m = tape.constant(Vec::Zero(init_.hidden));
  for (Eigen::Index r = 0; r < seg.u.rows(); ++r) {
    Vec in(seg_m_ + seg_n_);
    in << seg.u.row(r).transpose(), seg.y.row(r).transpose();
    std::tie(c, m) = lstm_cell_tape(tape, lstm_, tape.constant(std::move(in)), m, c);
  }
  return tape.mul_const(tape.tanh(tape.matvec(wy_, m) + tape.param(by_)), bound_);
}

Var InitializedRnn::emit(Tape& tape, const InitSegment& seg) const {
  seg.validate();
  if (seg.u.cols() != seg_m_ || seg.y.cols() != seg_n_) {
    throw DimensionError("init segment is " + std::to_string(seg.u.cols()) + "+" +
                         std::to_string(seg.y.cols()) + " wide, initializer expects " +
                         std::to_string(seg_m_) + "+" + std::to_string(seg_n_));
  }
  if (seg.tau() != init_.tau) {
    throw DimensionError("init segment has tau=" + std::to_string(seg.tau()) + ", initializer expects " +
                         std::to_string(init_.tau));
  }
  switch (init_.kind) {
    case InitKind::kMlp:
      return emit_mlp(tape, seg);
    case InitKind::kRnn:
      return emit_rnn(tape, seg);
    case InitKind::kWashout:
      break;
  }
  throw std::logic_error("washout has no initializer network");
}

InitializedRnn::Start InitializedRnn::start(Tape& tape, const InitSegment& seg,
                                            const DropoutContext* dropout) const {
  Start st;
  if (init_.kind == InitKind::kWashout) {
    seg.validate();
    if (seg.u.cols() != predictor_.input_dim()) {
      throw DimensionError("washout warmup inputs are " + std::to_string(seg.u.cols()) +
                           " wide, predictor expects " + std::to_string(predictor_.input_dim()));
    }
    if (init_.washout > seg.u.rows()) {
      throw DimensionError("washout length exceeds available warmup rows");
    }
    const Mat warm = seg.u.bottomRows(init_.washout);
    try {
      auto [x, ys] = predictor_.rollout(tape, predictor_.to_tape(tape, predictor_.zero_state()),
                                        rows_as_vars(tape, warm), dropout, -init_.washout);
      st.state = std::move(x);
    } catch (const InstabilityError&) {
      throw;
    } catch (const NumericalError& e) {
      throw InstabilityError(std::string("washout blew up: ") + e.what(), e.step());
    }
    return st;
  }
  const Var x = emit(tape, seg);
  st.emitted = x;
  st.state = predictor_.split_state(tape, x);
  if (segment_matches_predictor()) {
    predictor_.prefill_tdl(tape, st.state, seg.u, seg.y.topRows(seg.y.rows() - 1));
  }
  return st;
}

Var InitializedRnn::state_init_cost(Tape& tape, const Start& start, const InitSegment& seg) const {
  if (!start.emitted) throw std::logic_error("state_init_cost requires an NN-initialized start");
  if (!segment_matches_predictor()) {
    throw DimensionError("state_init_cost needs the segment to carry the predictor's own channels");
  }
  const Eigen::Index k0 = seg.u.rows() - 1;
  const Var s = start.state.s;
  const Var y_prev = tape.constant(Vec(seg.y.row(k0 - 1).transpose()));
  const Var u_k0 = tape.constant(Vec(seg.u.row(k0).transpose()));
  const Var c = tape.constant(Vec(seg.y.row(k0).transpose())) - tape.matvec(predictor_.out_ao(), y_prev) -
                tape.matvec(predictor_.out_b(), u_k0);
  return tape.norm(tape.matvec(predictor_.out_as(), s) - c);
}

namespace {

std::span<const double> span_of(const ParamVector& theta) {
  return {theta.values().data(), theta.size()};
}

}  // namespace

RnnState washout_init(const Predictor& model, const ParamVector& theta, const Mat& warmup) {
  if (warmup.rows() < 1) throw DimensionError("washout needs W >= 1 warmup steps");
  Tape tape(span_of(theta), false);
  try {
    auto [x, ys] = model.rollout(tape, model.to_tape(tape, model.zero_state()), rows_as_vars(tape, warmup),
                                 nullptr, 0);
    return model.from_tape(x);
  } catch (const NumericalError& e) {
    throw InstabilityError(std::string("washout blew up: ") + e.what(), e.step());
  }
}

RnnState initial_state(const InitializedRnn& model, const ParamVector& theta, const InitSegment& seg) {
  Tape tape(span_of(theta), false);
  const auto st = model.start(tape, seg);
  return model.predictor().from_tape(st.state);
}

RnnState mlp_init(const InitializedRnn& model, const ParamVector& theta, const InitSegment& seg) {
  if (model.init_config().kind != InitKind::kMlp) throw std::logic_error("mlp_init on a non-MLP initializer");
  return initial_state(model, theta, seg);
}

RnnState rnn_init(const InitializedRnn& model, const ParamVector& theta, const InitSegment& seg) {
  if (model.init_config().kind != InitKind::kRnn) throw std::logic_error("rnn_init on a non-RNN initializer");
  return initial_state(model, theta, seg);
}

double state_init_cost(const Mat& a_s, const Mat& a_o, const Mat& b, const Vec& s, const Vec& u_k0,
                       const Vec& y_k0, const Vec& y_prev) {
  if (a_s.cols() != s.size() || a_o.cols() != y_prev.size() || b.cols() != u_k0.size() ||
      a_s.rows() != y_k0.size() || a_o.rows() != y_k0.size() || b.rows() != y_k0.size()) {
    throw DimensionError("state_init_cost: A_s " + shape_string(a_s) + ", A_o " + shape_string(a_o) +
                         ", B " + shape_string(b) + ", s " + std::to_string(s.size()));
  }
  const Vec c = y_k0 - a_o * y_prev - b * u_k0;
  return (a_s * s - c).norm();
}

}  // namespace msp
