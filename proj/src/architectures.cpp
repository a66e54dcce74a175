#include "msp/architectures.hpp"

#include <numeric>

namespace msp {

// ---------------------------------------------------------------------------
// Tdl

Tdl::Tdl(Eigen::Index dim, int capacity) : dim_(dim), capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("Tdl capacity must be >= 1");
}

void Tdl::push(const Vec& v) {
  if (v.size() != dim_) {
    throw DimensionError("Tdl::push: expected " + std::to_string(dim_) + ", got " +
                         std::to_string(v.size()));
  }
  items_.push_back(v);
  if (static_cast<int>(items_.size()) > capacity_) items_.pop_front();
}

Vec Tdl::read() const {
  Vec out = Vec::Zero(dim_ * capacity_);
  const auto missing = static_cast<Eigen::Index>(capacity_ - static_cast<int>(items_.size()));
  Eigen::Index slot = missing;
  for (const auto& v : items_) out.segment((slot++) * dim_, dim_) = v;
  return out;
}

// ---------------------------------------------------------------------------
// Config / state

void PredictorConfig::validate() const {
  if (input_dim < 1 || output_dim < 1) throw DimensionError("predictor input/output dims must be >= 1");
  if (layer_sizes.empty()) throw DimensionError("predictor needs at least one layer");
  for (int n : layer_sizes) {
    if (n < 1) throw DimensionError("layer sizes must be >= 1");
  }
  if (tdl_capacity < 0) throw DimensionError("tdl capacity must be >= 0");
}

Vec RnnState::x() const {
  Vec out(o.size() + s.size());
  out << o, s;
  return out;
}

// ---------------------------------------------------------------------------
// Plain-value layer kernels

std::pair<Vec, Vec> mlfc_layer_step(const MlfcLayerParams& p, const Vec& y_prev, const Vec& u) {
  if (p.a.rows() != p.a.cols() || p.a.cols() != y_prev.size() || p.b.rows() != p.a.rows() ||
      p.b.cols() != u.size() || p.bias.size() != p.a.rows()) {
    throw DimensionError("mlfc_layer_step: A " + shape_string(p.a) + ", B " + shape_string(p.b) +
                         ", b " + std::to_string(p.bias.size()) + ", y_prev " +
                         std::to_string(y_prev.size()) + ", u " + std::to_string(u.size()));
  }
  Vec x = p.a * y_prev + p.b * u + p.bias;
  Vec y = act(p.f, x);
  return {std::move(x), std::move(y)};
}

Vec mlfc_compose_input(int layer, const Vec& u, const std::vector<Vec>& current,
                       const std::vector<Vec>& previous) {
  const int L = static_cast<int>(previous.size());
  if (layer < 0 || layer >= L) throw DimensionError("mlfc_compose_input: layer index out of range");
  if (static_cast<int>(current.size()) < layer) {
    throw SequencingError("mlfc_compose_input: layer " + std::to_string(layer) + " needs layers 0.." +
                          std::to_string(layer - 1) + " stepped first, have " +
                          std::to_string(current.size()));
  }
  Eigen::Index width = u.size();
  for (int j = 0; j < layer; ++j) width += current[j].size();
  for (int j = layer + 1; j < L; ++j) width += previous[j].size();
  Vec out(width);
  Eigen::Index off = 0;
  out.segment(off, u.size()) = u;
  off += u.size();
  for (int j = 0; j < layer; ++j) {
    out.segment(off, current[j].size()) = current[j];
    off += current[j].size();
  }
  for (int j = layer + 1; j < L; ++j) {
    out.segment(off, previous[j].size()) = previous[j];
    off += previous[j].size();
  }
  return out;
}

std::pair<Vec, Vec> lstm_cell_step(const LstmLayerParams& p, const Vec& u, const Vec& m_prev,
                                   const Vec& c_prev) {
  const Eigen::Index H = m_prev.size();
  if (p.wx.rows() != 4 * H || p.wx.cols() != u.size() || p.wm.rows() != 4 * H || p.wm.cols() != H ||
      p.bias.size() != 4 * H || c_prev.size() != H || (p.peep.size() != 0 && p.peep.size() != 3 * H)) {
    throw DimensionError("lstm_cell_step: Wx " + shape_string(p.wx) + ", Wm " + shape_string(p.wm) +
                         ", u " + std::to_string(u.size()) + ", H " + std::to_string(H));
  }
  const Vec z = p.wx * u + p.wm * m_prev + p.bias;
  const bool peep = p.peep.size() != 0;
  Vec zi = z.segment(0, H), zf = z.segment(H, H), zo = z.segment(2 * H, H);
  if (peep) {
    zi += p.peep.segment(0, H).cwiseProduct(c_prev);
    zf += p.peep.segment(H, H).cwiseProduct(c_prev);
  }
  const Vec gi = act(Activation::kLogistic, zi);
  const Vec gf = act(Activation::kLogistic, zf);
  Vec c = gi.cwiseProduct(z.segment(3 * H, H).array().tanh().matrix()) + gf.cwiseProduct(c_prev);
  if (peep) zo += p.peep.segment(2 * H, H).cwiseProduct(c);
  const Vec go = act(Activation::kLogistic, zo);
  Vec m = c.array().tanh().matrix().cwiseProduct(go);
  return {std::move(c), std::move(m)};
}

// ---------------------------------------------------------------------------
// Tape LSTM layer

LstmBlocks register_lstm_layer(ParamLayout& layout, const std::string& prefix, int input_dim, int cells,
                               bool peepholes) {
  const auto H = static_cast<std::size_t>(cells);
  LstmBlocks b;
  b.cells = cells;
  b.peepholes = peepholes;
  b.wx = layout.add(prefix + "Wx", 4 * H, static_cast<std::size_t>(input_dim));
  b.wm = layout.add(prefix + "Wm", 4 * H, H);
  b.bias = layout.add(prefix + "b", 4 * H);
  if (peepholes) b.peep = layout.add(prefix + "peep", 3 * H);
  return b;
}

std::pair<Var, Var> lstm_cell_tape(Tape& tape, const LstmBlocks& b, Var u, Var m_prev, Var c_prev) {
  const Eigen::Index H = b.cells;
  const Var z = tape.matvec(b.wx, u) + tape.matvec(b.wm, m_prev) + tape.param(b.bias);
  Var zi = tape.slice(z, 0, H);
  Var zf = tape.slice(z, H, H);
  Var zo = tape.slice(z, 2 * H, H);
  const Var zc = tape.slice(z, 3 * H, H);
  Var peep;
  if (b.peepholes) {
    peep = tape.param(b.peep);
    zi = zi + tape.slice(peep, 0, H) * c_prev;
    zf = zf + tape.slice(peep, H, H) * c_prev;
  }
  const Var gi = tape.logistic(zi);
  const Var gf = tape.logistic(zf);
  const Var c = gi * tape.tanh(zc) + gf * c_prev;
  if (b.peepholes) zo = zo + tape.slice(peep, 2 * H, H) * c;
  const Var m = tape.tanh(c) * tape.logistic(zo);
  return {c, m};
}

// ---------------------------------------------------------------------------
// Predictor

Predictor::Predictor(PredictorConfig cfg, ParamLayout& layout, const std::string& prefix)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int L = cfg_.layers();
  const auto dims = layer_input_dims();
  layers_.resize(L);
  for (int l = 0; l < L; ++l) {
    const auto n = static_cast<std::size_t>(cfg_.layer_sizes[l]);
    const auto in = static_cast<std::size_t>(dims[l]);
    const std::string p = prefix + (cfg_.kind == PredictorKind::kMlfc ? "mlfc" : "lstm") +
                          std::to_string(l) + ".";
    if (cfg_.kind == PredictorKind::kMlfc) {
      layers_[l].a = layout.add(p + "A", n, n);
      layers_[l].b = layout.add(p + "B", n, in);
      layers_[l].bias = layout.add(p + "b", n);
      internal_ += static_cast<int>(n);
    } else {
      layers_[l].lstm = register_lstm_layer(layout, p, static_cast<int>(in), static_cast<int>(n),
                                            cfg_.peepholes);
      internal_ += 2 * static_cast<int>(n);
    }
  }
  const auto n_out = static_cast<std::size_t>(cfg_.output_dim);
  out_as_ = layout.add(prefix + "out.As", n_out, static_cast<std::size_t>(internal_));
  out_ao_ = layout.add(prefix + "out.Ao", n_out, n_out);
  out_b_ = layout.add(prefix + "out.B", n_out, static_cast<std::size_t>(cfg_.input_dim));
}

int Predictor::network_input_dim() const {
  if (cfg_.tdl_capacity > 0) return cfg_.tdl_capacity * (cfg_.input_dim + cfg_.output_dim);
  return cfg_.kind == PredictorKind::kMlfc ? cfg_.input_dim : cfg_.input_dim + cfg_.output_dim;
}

std::vector<int> Predictor::layer_input_dims() const {
  const int L = cfg_.layers();
  std::vector<int> dims(L);
  if (cfg_.kind == PredictorKind::kMlfc) {
    const int total = std::accumulate(cfg_.layer_sizes.begin(), cfg_.layer_sizes.end(), 0);
    for (int l = 0; l < L; ++l) dims[l] = network_input_dim() + total - cfg_.layer_sizes[l];
  } else {
    for (int l = 0; l < L; ++l) dims[l] = l == 0 ? network_input_dim() : cfg_.layer_sizes[l - 1];
  }
  return dims;
}

Vec Predictor::state_bound(double c_max) const {
  Vec b = Vec::Ones(state_count());
  Eigen::Index off = cfg_.output_dim;
  for (int l = 0; l < cfg_.layers(); ++l) {
    const int n = cfg_.layer_sizes[l];
    if (cfg_.kind == PredictorKind::kLstm) {
      b.segment(off, n).setConstant(c_max);
      off += 2 * n;
    } else {
      if (cfg_.activation == Activation::kIdentity) b.segment(off, n).setConstant(c_max);
      off += n;
    }
  }
  return b;
}

std::vector<bool> Predictor::cell_state_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(internal_), false);
  if (cfg_.kind != PredictorKind::kLstm) return mask;
  std::size_t off = 0;
  for (int n : cfg_.layer_sizes) {
    for (int i = 0; i < n; ++i) mask[off + static_cast<std::size_t>(i)] = true;
    off += 2 * static_cast<std::size_t>(n);
  }
  return mask;
}

void Predictor::init_params(ParamVector& theta, std::mt19937_64& rng, double scale,
                            double forget_bias) const {
  std::uniform_real_distribution<double> dist(-scale, scale);
  auto fill = [&](const ParamBlock& b) {
    auto v = theta.view(b);
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, j) = dist(rng);
  };
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& b = layers_[l];
    if (cfg_.kind == PredictorKind::kMlfc) {
      fill(b.a);
      fill(b.b);
      fill(b.bias);
    } else {
      fill(b.lstm.wx);
      fill(b.lstm.wm);
      fill(b.lstm.bias);
      const Eigen::Index H = cfg_.layer_sizes[l];
      theta.view(b.lstm.bias).block(H, 0, H, 1).setConstant(forget_bias);
      if (cfg_.peepholes) fill(b.lstm.peep);
    }
  }
  fill(out_as_);
  fill(out_ao_);
  fill(out_b_);
}

RnnState Predictor::zero_state() const {
  RnnState x;
  x.o = Vec::Zero(cfg_.output_dim);
  x.s = Vec::Zero(internal_);
  if (cfg_.tdl_capacity > 0) {
    x.tdl_u.emplace(cfg_.input_dim, cfg_.tdl_capacity);
    x.tdl_o.emplace(cfg_.output_dim, cfg_.tdl_capacity);
  }
  return x;
}

Predictor::TapeState Predictor::to_tape(Tape& tape, const RnnState& x) const {
  if (x.o.size() != cfg_.output_dim || x.s.size() != internal_) {
    throw DimensionError("state is [" + std::to_string(x.o.size()) + "; " + std::to_string(x.s.size()) +
                         "], model expects [" + std::to_string(cfg_.output_dim) + "; " +
                         std::to_string(internal_) + "]");
  }
  TapeState t;
  t.o = tape.constant(x.o);
  t.s = tape.constant(x.s);
  if (cfg_.tdl_capacity > 0) {
    // Only filled slots are materialized; reads pad the rest with zeros.
    auto copy = [&](const std::optional<Tdl>& src, std::deque<Var>& dst, Eigen::Index dim) {
      if (!src) return;
      if (src->dim() != dim) throw DimensionError("tdl dimension mismatch");
      const Vec all = src->read();
      const int cap = src->capacity();
      for (int i = cap - static_cast<int>(src->filled()); i < cap; ++i) {
        dst.push_back(tape.constant(all.segment(static_cast<Eigen::Index>(i) * dim, dim)));
      }
    };
    copy(x.tdl_u, t.tdl_u, cfg_.input_dim);
    copy(x.tdl_o, t.tdl_o, cfg_.output_dim);
  }
  return t;
}

RnnState Predictor::from_tape(const TapeState& x) const {
  RnnState r;
  r.o = x.o.value();
  r.s = x.s.value();
  if (cfg_.tdl_capacity > 0) {
    r.tdl_u.emplace(cfg_.input_dim, cfg_.tdl_capacity);
    r.tdl_o.emplace(cfg_.output_dim, cfg_.tdl_capacity);
    for (const auto& v : x.tdl_u) r.tdl_u->push(v.value());
    for (const auto& v : x.tdl_o) r.tdl_o->push(v.value());
  }
  return r;
}

Predictor::TapeState Predictor::split_state(Tape& tape, Var x) const {
  if (x.size() != state_count()) {
    throw DimensionError("split_state: got " + std::to_string(x.size()) + ", expected " +
                         std::to_string(state_count()));
  }
  TapeState t;
  t.o = tape.slice(x, 0, cfg_.output_dim);
  t.s = tape.slice(x, cfg_.output_dim, internal_);
  return t;
}

void Predictor::prefill_tdl(Tape& tape, TapeState& x, const Mat& u_hist, const Mat& y_hist) const {
  if (cfg_.tdl_capacity == 0) return;
  auto fill = [&](const Mat& hist, std::deque<Var>& dst, Eigen::Index dim) {
    if (hist.rows() > 0 && hist.cols() != dim) throw DimensionError("prefill_tdl: history width mismatch");
    dst.clear();
    const Eigen::Index start = std::max<Eigen::Index>(0, hist.rows() - cfg_.tdl_capacity);
    for (Eigen::Index r = start; r < hist.rows(); ++r) dst.push_back(tape.constant(Vec(hist.row(r).transpose())));
  };
  fill(u_hist, x.tdl_u, cfg_.input_dim);
  fill(y_hist, x.tdl_o, cfg_.output_dim);
}

void Predictor::check_state(const TapeState& x) const {
  if (x.o.size() != cfg_.output_dim || x.s.size() != internal_) {
    throw DimensionError("predictor state is [" + std::to_string(x.o.size()) + "; " +
                         std::to_string(x.s.size()) + "], model expects [" +
                         std::to_string(cfg_.output_dim) + "; " + std::to_string(internal_) + "]");
  }
}

Vec dropout_mask(Eigen::Index size, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  Vec mask = Vec::Ones(size);
  if (rate == 0.0) return mask;
  std::bernoulli_distribution keep(1.0 - rate);
  for (Eigen::Index i = 0; i < size; ++i) mask(i) = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mask;
}

namespace {

Var maybe_dropout(Tape& tape, Var v, const DropoutContext* dropout) {
  if (dropout == nullptr || !dropout->active()) return v;
  return tape.mul_const(v, dropout_mask(v.size(), dropout->rate, *dropout->rng));
}

Var read_tdl(Tape& tape, const std::deque<Var>& items, int capacity, Eigen::Index dim) {
  std::vector<Var> parts;
  const int missing = capacity - static_cast<int>(items.size());
  if (missing > 0) parts.push_back(tape.constant(Vec::Zero(missing * dim)));
  for (const auto& v : items) parts.push_back(v);
  return parts.size() == 1 ? parts.front() : tape.concat(parts);
}

}  // namespace

Var Predictor::network_input(Tape& tape, TapeState& next, const TapeState& x, Var u) const {
  if (cfg_.tdl_capacity > 0) {
    next.tdl_u = x.tdl_u;
    next.tdl_o = x.tdl_o;
    next.tdl_u.push_back(u);
    next.tdl_o.push_back(x.o);
    while (static_cast<int>(next.tdl_u.size()) > cfg_.tdl_capacity) next.tdl_u.pop_front();
    while (static_cast<int>(next.tdl_o.size()) > cfg_.tdl_capacity) next.tdl_o.pop_front();
    return tape.concat({read_tdl(tape, next.tdl_u, cfg_.tdl_capacity, cfg_.input_dim),
                        read_tdl(tape, next.tdl_o, cfg_.tdl_capacity, cfg_.output_dim)});
  }
  if (cfg_.kind == PredictorKind::kMlfc) return u;
  return tape.concat({u, x.o});
}

Var Predictor::step_mlfc(Tape& tape, Var s_prev, Var v, const DropoutContext* dropout) const {
  const int L = cfg_.layers();
  std::vector<Var> prev(L), cur;
  cur.reserve(L);
  Eigen::Index off = 0;
  for (int l = 0; l < L; ++l) {
    prev[l] = L == 1 ? s_prev : tape.slice(s_prev, off, cfg_.layer_sizes[l]);
    off += cfg_.layer_sizes[l];
  }
  const Var vin = maybe_dropout(tape, v, dropout);
  for (int l = 0; l < L; ++l) {
    std::vector<Var> parts{vin};
    for (int j = 0; j < l; ++j) parts.push_back(cur[j]);
    for (int j = l + 1; j < L; ++j) parts.push_back(prev[j]);
    const Var ul = parts.size() == 1 ? vin : tape.concat(parts);
    const auto& b = layers_[l];
    Var xl = tape.matvec(b.a, prev[l]) + tape.matvec(b.b, ul) + tape.param(b.bias);
    cur.push_back(tape.activation(cfg_.activation, xl));
  }
  return L == 1 ? cur.front() : tape.concat(cur);
}

Var Predictor::step_lstm(Tape& tape, Var s_prev, Var v, const DropoutContext* dropout) const {
  const int L = cfg_.layers();
  std::vector<Var> out;
  out.reserve(2 * L);
  Eigen::Index off = 0;
  Var input = v;
  for (int l = 0; l < L; ++l) {
    const Eigen::Index H = cfg_.layer_sizes[l];
    const Var c_prev = tape.slice(s_prev, off, H);
    const Var m_prev = tape.slice(s_prev, off + H, H);
    off += 2 * H;
    auto [c, m] = lstm_cell_tape(tape, layers_[l].lstm, maybe_dropout(tape, input, dropout), m_prev, c_prev);
    out.push_back(c);
    out.push_back(m);
    input = m;
  }
  return tape.concat(out);
}

std::pair<Predictor::TapeState, Var> Predictor::step(Tape& tape, const TapeState& x, Var u,
                                                     const DropoutContext* dropout) const {
  check_state(x);
  if (u.size() != cfg_.input_dim) {
    throw DimensionError("predictor input has " + std::to_string(u.size()) + " entries, expected " +
                         std::to_string(cfg_.input_dim));
  }
  TapeState next;
  const Var v = network_input(tape, next, x, u);
  next.s = cfg_.kind == PredictorKind::kMlfc ? step_mlfc(tape, x.s, v, dropout)
                                             : step_lstm(tape, x.s, v, dropout);
  const Var y = tape.matvec(out_as_, next.s) + tape.matvec(out_ao_, x.o) + tape.matvec(out_b_, u);
  next.o = y;
  return {std::move(next), y};
}

std::pair<Predictor::TapeState, std::vector<Var>> Predictor::rollout(Tape& tape, TapeState x,
                                                                     const std::vector<Var>& inputs,
                                                                     const DropoutContext* dropout,
                                                                     int first_step) const {
  if (inputs.empty()) throw DimensionError("rollout needs at least one input step");
  std::vector<Var> ys;
  ys.reserve(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    tape.set_step(first_step + static_cast<int>(k));
    auto [next, y] = step(tape, x, inputs[k], dropout);
    x = std::move(next);
    ys.push_back(y);
  }
  return {std::move(x), std::move(ys)};
}

MlfcLayerParams Predictor::mlfc_layer(const ParamVector& theta, int layer) const {
  if (cfg_.kind != PredictorKind::kMlfc) throw std::logic_error("not an MLFC predictor");
  const auto& b = layers_.at(static_cast<std::size_t>(layer));
  return {theta.view(b.a), theta.view(b.b), theta.view(b.bias), cfg_.activation};
}

LstmLayerParams Predictor::lstm_layer(const ParamVector& theta, int layer) const {
  if (cfg_.kind != PredictorKind::kLstm) throw std::logic_error("not an LSTM predictor");
  const auto& b = layers_.at(static_cast<std::size_t>(layer));
  LstmLayerParams p{theta.view(b.lstm.wx), theta.view(b.lstm.wm), theta.view(b.lstm.bias), Vec()};
  if (cfg_.peepholes) p.peep = theta.view(b.lstm.peep);
  return p;
}

// ---------------------------------------------------------------------------
// Plain-value wrappers

namespace {

std::span<const double> span_of(const ParamVector& theta) {
  return {theta.values().data(), theta.size()};
}

}  // namespace

std::pair<RnnState, Vec> predictor_step(const Predictor& model, const ParamVector& theta,
                                        const RnnState& x, const Vec& u) {
  Tape tape(span_of(theta), false);
  auto [next, y] = model.step(tape, model.to_tape(tape, x), tape.constant(u));
  return {model.from_tape(next), y.value()};
}

std::pair<RnnState, Mat> rollout_with_state(const Predictor& model, const ParamVector& theta,
                                            const RnnState& x0, const Mat& inputs) {
  if (inputs.rows() < 1) throw DimensionError("rollout needs T >= 1");
  Tape tape(span_of(theta), false);
  auto [xT, ys] = model.rollout(tape, model.to_tape(tape, x0), rows_as_vars(tape, inputs));
  return {model.from_tape(xT), stack_rows(ys)};
}

Mat rollout(const Predictor& model, const ParamVector& theta, const RnnState& x0, const Mat& inputs) {
  return rollout_with_state(model, theta, x0, inputs).second;
}

std::vector<Var> rows_as_vars(Tape& tape, const Mat& seq) {
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(seq.rows()));
  for (Eigen::Index r = 0; r < seq.rows(); ++r) out.push_back(tape.constant(Vec(seq.row(r).transpose())));
  return out;
}

Mat stack_rows(const std::vector<Var>& seq) {
  if (seq.empty()) return {};
  Mat out(static_cast<Eigen::Index>(seq.size()), seq.front().size());
  for (std::size_t k = 0; k < seq.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = seq[k].value().transpose();
  return out;
}

}  // namespace msp
