#pragma once

#include <deque>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "msp/numeric.hpp"
#include "msp/params.hpp"
#include "msp/tape.hpp"

namespace msp {

/// Fixed-capacity FIFO of the most recent vectors of one signal.
/// Reads oldest to newest; slots not yet written read as zeros.
class Tdl {
 public:
  Tdl(Eigen::Index dim, int capacity = 10);

  void push(const Vec& v);
  /// Concatenation of all slots, oldest first; length capacity * dim.
  Vec read() const;
  Eigen::Index dim() const { return dim_; }
  int capacity() const { return capacity_; }
  std::size_t filled() const { return items_.size(); }

 private:
  Eigen::Index dim_;
  int capacity_;
  std::deque<Vec> items_;
};

enum class PredictorKind { kMlfc, kLstm };

struct PredictorConfig {
  PredictorKind kind = PredictorKind::kLstm;
  int input_dim = 1;   // m
  int output_dim = 1;  // n
  /// Neurons (MLFC) or cells (LSTM) per layer.
  std::vector<int> layer_sizes{8};
  /// MLFC layer activation; LSTM ignores it.
  Activation activation = Activation::kTanh;
  bool peepholes = true;
  /// 0 disables tapped delay lines on the input and fed-back output.
  int tdl_capacity = 0;

  int layers() const { return static_cast<int>(layer_sizes.size()); }
  void validate() const;
};

/// Network state x = [o; s] between steps.
///
/// `o` holds the output to be fed back at the next step, `s` the internal
/// states (MLFC: y^1..y^L; LSTM: c^1, m^1, ..., c^L, m^L). Tapped delay lines
/// are carried alongside when enabled.
struct RnnState {
  Vec o;
  Vec s;
  std::optional<Tdl> tdl_u;
  std::optional<Tdl> tdl_o;

  Vec x() const;
};

/// Per-step dropout on non-recurrent layer inputs; inactive when rng is null or rate is 0.
struct DropoutContext {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
};

/// Inverted-dropout mask: entries are 0 with probability `rate`, else 1/(1-rate).
Vec dropout_mask(Eigen::Index size, double rate, std::mt19937_64& rng);

/// One MLFC layer's parameters.
struct MlfcLayerParams {
  Mat a;  // feedback, n^l x n^l
  Mat b;  // input, n^l x m^l
  Vec bias;
  Activation f = Activation::kTanh;
};

/// x^l_k = A^l y^l_{k-1} + B^l u^l_k + b^l, y^l_k = f^l(x^l_k). Returns (x, y).
std::pair<Vec, Vec> mlfc_layer_step(const MlfcLayerParams& p, const Vec& y_prev, const Vec& u);

/// Builds the input of layer `layer` (0-based) at step k:
/// [u_k, y^0_k, ..., y^{layer-1}_k, y^{layer+1}_{k-1}, ..., y^{L-1}_{k-1}].
/// `current` holds the outputs of layers already stepped at k, `previous` all
/// layer outputs at k-1. Throws SequencingError if earlier layers are missing.
Vec mlfc_compose_input(int layer, const Vec& u, const std::vector<Vec>& current,
                       const std::vector<Vec>& previous);

/// Peephole LSTM layer parameters. Gate rows are stacked in the order input, forget, output, cell.
struct LstmLayerParams {
  Mat wx;    // 4H x in
  Mat wm;    // 4H x H
  Vec bias;  // 4H
  Vec peep;  // 3H (input, forget, output); empty when peepholes are off
};

/// One peephole LSTM step. Returns (c_k, m_k).
std::pair<Vec, Vec> lstm_cell_step(const LstmLayerParams& p, const Vec& u, const Vec& m_prev,
                                   const Vec& c_prev);

/// Parameter blocks of one peephole LSTM layer.
struct LstmBlocks {
  ParamBlock wx, wm, bias, peep;
  int cells = 0;
  bool peepholes = true;
};

LstmBlocks register_lstm_layer(ParamLayout& layout, const std::string& prefix, int input_dim, int cells,
                               bool peepholes);

/// Tape version of lstm_cell_step. Returns (c_k, m_k).
std::pair<Var, Var> lstm_cell_tape(Tape& tape, const LstmBlocks& b, Var u, Var m_prev, Var c_prev);

/// Recurrent predictor with a linear output map y = A_s s + A_o o + B u.
///
/// Parameter blocks are registered in a shared layout under `prefix`, so a
/// predictor and its initializer can live in one augmented theta.
class Predictor {
 public:
  /// Tape-resident counterpart of RnnState.
  struct TapeState {
    Var o;
    Var s;
    std::deque<Var> tdl_u;
    std::deque<Var> tdl_o;
  };

  Predictor(PredictorConfig cfg, ParamLayout& layout, const std::string& prefix);

  const PredictorConfig& config() const { return cfg_; }
  int input_dim() const { return cfg_.input_dim; }
  int output_dim() const { return cfg_.output_dim; }
  int internal_count() const { return internal_; }
  /// Declared state count s = n + internal.
  int state_count() const { return cfg_.output_dim + internal_; }
  /// Width of the first layer's external input (after TDL expansion).
  int network_input_dim() const;
  /// Input width of each layer, after skip-connection composition.
  std::vector<int> layer_input_dims() const;

  /// Lower/upper bounds per state component, used by initializers to squash their output.
  Vec state_bound(double c_max) const;
  /// Mask over s marking LSTM cell-state entries.
  std::vector<bool> cell_state_mask() const;

  const ParamBlock& out_as() const { return out_as_; }
  const ParamBlock& out_ao() const { return out_ao_; }
  const ParamBlock& out_b() const { return out_b_; }

  /// Uniform init in [-scale, scale]; LSTM forget-gate biases set to `forget_bias`.
  void init_params(ParamVector& theta, std::mt19937_64& rng, double scale,
                   double forget_bias = 1.0) const;

  RnnState zero_state() const;
  TapeState to_tape(Tape& tape, const RnnState& x) const;
  RnnState from_tape(const TapeState& x) const;
  /// Splits a length-s vector into (o, s) and attaches empty delay lines.
  TapeState split_state(Tape& tape, Var x) const;
  /// Overwrites delay-line contents with measured history ending at step k0.
  void prefill_tdl(Tape& tape, TapeState& x, const Mat& u_hist, const Mat& y_hist) const;

  /// One step: o_k <- fed-back output, s_k <- architecture step, y_k = A x_k + B u_k.
  std::pair<TapeState, Var> step(Tape& tape, const TapeState& x, Var u,
                                 const DropoutContext* dropout = nullptr) const;
  /// Iterates step over the given inputs.
  std::pair<TapeState, std::vector<Var>> rollout(Tape& tape, TapeState x,
                                                 const std::vector<Var>& inputs,
                                                 const DropoutContext* dropout = nullptr,
                                                 int first_step = 0) const;

  MlfcLayerParams mlfc_layer(const ParamVector& theta, int layer) const;
  LstmLayerParams lstm_layer(const ParamVector& theta, int layer) const;

 private:
  struct Blocks {
    ParamBlock a, b, bias;  // MLFC
    LstmBlocks lstm;
  };

  Var network_input(Tape& tape, TapeState& next, const TapeState& x, Var u) const;
  Var step_mlfc(Tape& tape, Var s_prev, Var v, const DropoutContext* dropout) const;
  Var step_lstm(Tape& tape, Var s_prev, Var v, const DropoutContext* dropout) const;
  void check_state(const TapeState& x) const;

  PredictorConfig cfg_;
  int internal_ = 0;
  std::vector<Blocks> layers_;
  ParamBlock out_as_, out_ao_, out_b_;
};

/// Single step on plain values.
std::pair<RnnState, Vec> predictor_step(const Predictor& model, const ParamVector& theta,
                                        const RnnState& x, const Vec& u);

/// Output sequence (T x n) for inputs U (T x m) from initial state x0.
Mat rollout(const Predictor& model, const ParamVector& theta, const RnnState& x0, const Mat& inputs);

/// Rollout that also returns the final state.
std::pair<RnnState, Mat> rollout_with_state(const Predictor& model, const ParamVector& theta,
                                            const RnnState& x0, const Mat& inputs);

/// Tape constants for each row of a sequence matrix.
std::vector<Var> rows_as_vars(Tape& tape, const Mat& seq);

/// Vertically stacks per-step vectors into a T x n matrix.
Mat stack_rows(const std::vector<Var>& seq);

}  // namespace msp
