#include "msp/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace msp {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "adam" || s == "Adam") return OptimizerKind::kAdam;
  if (s == "sgd" || s == "SGD") return OptimizerKind::kSgd;
  throw ParseError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  if (!(optimizer.lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("cost weights must be >= 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be >= 0");
  if (!(init_scale > 0.0)) throw std::invalid_argument("init scale must be positive");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
}

double msse_loss(const Mat& predicted, const Mat& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols()) {
    throw DimensionError("msse_loss: predicted " + shape_string(predicted) + " vs target " + shape_string(target));
  }
  if (predicted.rows() < 1) throw DimensionError("msse_loss: empty sequence");
  return (target - predicted).squaredNorm() / static_cast<double>(predicted.rows());
}

double pred_loss(const std::vector<Mat>& predicted, const std::vector<Mat>& target) {
  if (predicted.empty()) throw std::invalid_argument("pred_loss: empty batch");
  if (predicted.size() != target.size()) throw DimensionError("pred_loss: batch size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += msse_loss(predicted[i], target[i]);
  return sum / static_cast<double>(predicted.size());
}

double total_loss(double l_pred, double l_si, double alpha, double beta) { return alpha * l_pred + beta * l_si; }

Var msse_loss(Tape& tape, const std::vector<Var>& predicted, const Mat& target) {
  if (static_cast<Eigen::Index>(predicted.size()) != target.rows() || predicted.empty()) {
    throw DimensionError("msse_loss: " + std::to_string(predicted.size()) + " predicted steps vs " +
                         std::to_string(target.rows()) + " targets");
  }
  std::vector<Var> terms;
  terms.reserve(predicted.size());
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const Vec t = target.row(static_cast<Eigen::Index>(k)).transpose();
    if (t.size() != predicted[k].size()) throw DimensionError("msse_loss: output width mismatch");
    terms.push_back(tape.sum_squares(tape.add_const(predicted[k], -t)));
  }
  return tape.sum(tape.concat(terms)) * (1.0 / static_cast<double>(predicted.size()));
}

Vec regularize(const Vec& grad, const Vec& theta, double weight_decay) {
  if (weight_decay == 0.0) return grad;
  return grad + weight_decay * theta;
}

Vec clip(const Vec& grad, double max_norm) {
  if (max_norm <= 0.0) return grad;
  const double n = grad.norm();
  if (n <= max_norm) return grad;
  return grad * (max_norm / n);
}

Optimizer::Optimizer(OptimizerConfig cfg, std::size_t size)
    : cfg_(cfg), m_(Vec::Zero(static_cast<Eigen::Index>(size))), v_(Vec::Zero(static_cast<Eigen::Index>(size))) {
  if (cfg_.lr < 0.0) throw std::invalid_argument("learning rate must be >= 0");
}

void Optimizer::step(Vec& theta, const Vec& grad) {
  if (grad.size() != theta.size() || grad.size() != m_.size()) throw DimensionError("optimizer size mismatch");
  ++t_;
  if (cfg_.kind == OptimizerKind::kSgd) {
    m_ = cfg_.momentum * m_ + grad;
    theta -= cfg_.lr * m_;
    return;
  }
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  theta.array() -= cfg_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
}

ParamVector Trainable::fresh_params(std::uint64_t seed, double scale) const {
  ParamVector theta(layout());
  std::mt19937_64 rng(seed);
  init_params(theta, rng, scale);
  return theta;
}

// ---------------------------------------------------------------------------

BlackBoxModel::BlackBoxModel(const PredictorConfig& pred, const InitializerConfig& init) {
  net_ = std::make_unique<InitializedRnn>(pred, init, layout_, "", pred.input_dim, pred.output_dim);
}

void BlackBoxModel::init_params(ParamVector& theta, std::mt19937_64& rng, double scale) const {
  net_->init_params(theta, rng, scale);
}

WindowLoss BlackBoxModel::window_loss(Tape& tape, const SampleWindow& w, double alpha, double beta,
                                      const DropoutContext* dropout) const {
  const auto st = net_->start(tape, w.init, dropout);
  auto [xT, ys] = net_->predictor().rollout(tape, st.state, rows_as_vars(tape, w.pred_u), dropout, 0);
  const Var lp = msse_loss(tape, ys, w.pred_y);
  WindowLoss out;
  out.pred = lp.scalar();
  Var total = lp * alpha;
  if (st.emitted && beta != 0.0 && net_->segment_matches_predictor()) {
    const Var lsi = net_->state_init_cost(tape, st, w.init);
    out.si = lsi.scalar();
    total = total + lsi * beta;
  }
  out.total = total;
  return out;
}

Mat BlackBoxModel::predict(const ParamVector& theta, const SampleWindow& w) const {
  Tape tape({theta.values().data(), theta.size()}, false);
  const auto st = net_->start(tape, w.init);
  auto [xT, ys] = net_->predictor().rollout(tape, st.state, rows_as_vars(tape, w.pred_u));
  return stack_rows(ys);
}

// ---------------------------------------------------------------------------

double window_loss_value(const Trainable& model, const ParamVector& theta, const SampleWindow& w, double alpha,
                         double beta) {
  Tape tape({theta.values().data(), theta.size()}, false);
  return model.window_loss(tape, w, alpha, beta, nullptr).total.scalar();
}

Vec window_loss_grad(const Trainable& model, const ParamVector& theta, const SampleWindow& w, double alpha,
                     double beta) {
  Tape tape({theta.values().data(), theta.size()}, true);
  return tape.backward(model.window_loss(tape, w, alpha, beta, nullptr).total);
}

std::vector<BlockCheck> gradient_check(const Trainable& model, const ParamVector& theta, const SampleWindow& w,
                                       double alpha, double beta, double eps, double floor) {
  if (!(eps > 0.0)) throw std::invalid_argument("gradient_check: eps must be positive");
  const Vec g = window_loss_grad(model, theta, w, alpha, beta);
  ParamVector probe = theta;
  auto at = [&](Eigen::Index i, double h) {
    probe.values()(i) = theta.values()(i) + h;
    const double v = window_loss_value(model, probe, w, alpha, beta);
    probe.values()(i) = theta.values()(i);
    return v;
  };
  std::vector<BlockCheck> out;
  for (const auto& b : theta.layout().blocks()) {
    BlockCheck c{b.name, b.size(), 0.0, 0.0};
    for (std::size_t j = 0; j < b.size(); ++j) {
      const auto i = static_cast<Eigen::Index>(b.offset + j);
      const double fd = (8.0 * (at(i, eps) - at(i, -eps)) - (at(i, 2 * eps) - at(i, -2 * eps))) / (12.0 * eps);
      const double denom = std::max({std::abs(g(i)), std::abs(fd), floor});
      c.max_rel_error = std::max(c.max_rel_error, std::abs(g(i) - fd) / denom);
      c.max_abs_grad = std::max(c.max_abs_grad, std::abs(g(i)));
    }
    out.push_back(c);
  }
  return out;
}

namespace {

/// Runs fn(i) for i in [0, n) on up to `workers` threads; results must be written to per-index slots.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += w) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

double mean_loss(const Trainable& model, const ParamVector& theta, const std::vector<SampleWindow>& windows,
                 double alpha, double beta, int workers) {
  if (windows.empty()) throw std::invalid_argument("mean_loss: no windows");
  std::vector<double> losses(windows.size());
  parallel_for(windows.size(), workers,
               [&](std::size_t i) { losses[i] = window_loss_value(model, theta, windows[i], alpha, beta); });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(windows.size());
}

TrainResult train(const Trainable& model, const std::vector<SampleWindow>& train_set,
                  const std::vector<SampleWindow>& val_set, const TrainConfig& cfg, const ParamVector* initial,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  TrainResult res;
  res.theta = initial ? *initial : model.fresh_params(cfg.seed, cfg.init_scale);
  if (res.theta.layout().hash() != model.layout().hash()) {
    throw DimensionError("initial parameters do not match the model layout");
  }
  res.last_theta = res.theta;
  if (cfg.epochs == 0) return res;
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");

  ParamVector theta = res.theta;
  Optimizer opt(cfg.optimizer, theta.size());
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto q = static_cast<Eigen::Index>(theta.size());
  bool have_best = false;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      std::vector<Vec> grads(n);
      std::vector<double> losses(n);
      try {
        parallel_for(n, cfg.workers, [&](std::size_t i) {
          const std::size_t idx = order[start + i];
          std::mt19937_64 drop_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), start + i));
          DropoutContext dc{cfg.dropout, &drop_rng};
          Tape tape({theta.values().data(), theta.size()}, true);
          const WindowLoss wl = model.window_loss(tape, train_set[idx], cfg.alpha, cfg.beta, &dc);
          losses[i] = wl.total.scalar();
          grads[i] = tape.backward(wl.total);
        });
      } catch (const NumericalError& e) {
        throw DivergenceError(std::string("training diverged: ") + e.what(), epoch);
      }
      Vec g = Vec::Zero(q);
      for (std::size_t i = 0; i < n; ++i) {
        g += grads[i];
        epoch_sum += losses[i];
      }
      g /= static_cast<double>(n);
      g = clip(regularize(g, theta.values(), cfg.weight_decay), cfg.clip_norm);
      opt.step(theta.values(), g);
      if (!theta.values().allFinite()) throw DivergenceError("parameters became non-finite", epoch);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_sum / static_cast<double>(order.size());
    try {
      rec.val_loss = val_set.empty() ? mean_loss(model, theta, train_set, cfg.alpha, cfg.beta, cfg.workers)
                                     : mean_loss(model, theta, val_set, cfg.alpha, cfg.beta, cfg.workers);
    } catch (const NumericalError& e) {
      throw DivergenceError(std::string("validation loss is non-finite: ") + e.what(), epoch);
    }
    if (!std::isfinite(rec.val_loss) || !std::isfinite(rec.train_loss)) {
      throw DivergenceError("loss became non-finite", epoch);
    }
    res.history.push_back(rec);
    if (!have_best || rec.val_loss < res.best_val) {
      have_best = true;
      res.best_val = rec.val_loss;
      res.best_epoch = epoch;
      res.theta = theta;
    }
    if (on_epoch) on_epoch(rec);
  }
  res.last_theta = theta;
  return res;
}

}  // namespace msp
