#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "msp/data.hpp"
#include "msp/initializers.hpp"

namespace msp {

enum class OptimizerKind { kAdam, kSgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double momentum = 0.0;  // SGD
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double alpha = 1.0;
  double beta = 1.0;
  OptimizerConfig optimizer;
  int epochs = 100;
  int batch_size = 16;
  /// Gradient max-norm; <= 0 disables clipping.
  double clip_norm = 5.0;
  double weight_decay = 0.0;
  double dropout = 0.0;
  double init_scale = 0.05;
  std::uint64_t seed = 1;
  /// Threads computing per-sample gradients within a batch.
  int workers = 1;

  void validate() const;
};

/// (1/T) sum_k |y_k - y~_k|^2 over the rows of equal-shaped matrices.
double msse_loss(const Mat& predicted, const Mat& target);
/// Mean of msse_loss over a batch.
double pred_loss(const std::vector<Mat>& predicted, const std::vector<Mat>& target);
/// alpha * L_pred + beta * L_si.
double total_loss(double l_pred, double l_si, double alpha, double beta);

/// Recorded msse over per-step outputs.
Var msse_loss(Tape& tape, const std::vector<Var>& predicted, const Mat& target);

/// Weight decay: grad + lambda * theta.
Vec regularize(const Vec& grad, const Vec& theta, double weight_decay);
/// Rescales to max_norm when the norm exceeds it; max_norm <= 0 leaves grad as is.
Vec clip(const Vec& grad, double max_norm);

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::size_t size);
  void step(Vec& theta, const Vec& grad);
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  Vec m_, v_;
  long t_ = 0;
};

/// Per-window loss terms recorded on a tape.
struct WindowLoss {
  Var total;
  double pred = 0.0;
  double si = 0.0;
};

/// A model whose whole parameter vector (initializers included) is trained jointly.
class Trainable {
 public:
  virtual ~Trainable() = default;

  virtual const ParamLayout& layout() const = 0;
  virtual void init_params(ParamVector& theta, std::mt19937_64& rng, double scale) const = 0;
  /// Records alpha * L_pred + beta * L_si for one window.
  virtual WindowLoss window_loss(Tape& tape, const SampleWindow& w, double alpha, double beta,
                                 const DropoutContext* dropout) const = 0;
  /// Predicted outputs (T rows) for a window's prediction segment.
  virtual Mat predict(const ParamVector& theta, const SampleWindow& w) const = 0;
  /// Targets matching predict().
  virtual Mat target(const SampleWindow& w) const { return w.pred_y; }
  virtual int output_dim() const = 0;

  ParamVector fresh_params(std::uint64_t seed, double scale) const;
};

/// Predictor plus initializer on a plain input/output dataset.
class BlackBoxModel : public Trainable {
 public:
  BlackBoxModel(const PredictorConfig& pred, const InitializerConfig& init);

  const ParamLayout& layout() const override { return layout_; }
  void init_params(ParamVector& theta, std::mt19937_64& rng, double scale) const override;
  WindowLoss window_loss(Tape& tape, const SampleWindow& w, double alpha, double beta,
                         const DropoutContext* dropout) const override;
  Mat predict(const ParamVector& theta, const SampleWindow& w) const override;
  int output_dim() const override { return net_->predictor().output_dim(); }

  const InitializedRnn& net() const { return *net_; }

 private:
  ParamLayout layout_;
  std::unique_ptr<InitializedRnn> net_;
};

/// L_tot for one window, optionally with its gradient.
double window_loss_value(const Trainable& model, const ParamVector& theta, const SampleWindow& w,
                         double alpha, double beta);
Vec window_loss_grad(const Trainable& model, const ParamVector& theta, const SampleWindow& w, double alpha,
                     double beta);

/// Largest relative gradient error within one parameter block.
struct BlockCheck {
  std::string block;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

/// Compares window_loss_grad with fourth-order central differences
/// (8 f(+h) - 8 f(-h) - f(+2h) + f(-2h)) / 12h, per layout block.
/// Relative error per coordinate is |g - fd| / max(|g|, |fd|, floor).
std::vector<BlockCheck> gradient_check(const Trainable& model, const ParamVector& theta, const SampleWindow& w,
                                       double alpha, double beta, double eps = 1e-5, double floor = 1e-8);

/// Mean L_tot over windows in evaluation mode (no dropout).
double mean_loss(const Trainable& model, const ParamVector& theta, const std::vector<SampleWindow>& windows,
                 double alpha, double beta, int workers = 1);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ParamVector theta;       // best-validation parameters
  ParamVector last_theta;  // parameters after the final epoch
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training of L_tot. Validation loss selects the retained parameters
/// (training loss when no validation windows are given). Non-finite losses abort with DivergenceError.
TrainResult train(const Trainable& model, const std::vector<SampleWindow>& train_set,
                  const std::vector<SampleWindow>& val_set, const TrainConfig& cfg,
                  const ParamVector* initial = nullptr, const EpochCallback& on_epoch = {});

}  // namespace msp
