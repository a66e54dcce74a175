#pragma once

#include <optional>
#include <string>

#include "msp/architectures.hpp"

namespace msp {

/// Measured history u_{k0-tau}..u_{k0} and y_{k0-tau}..y_{k0}, one row per step.
struct InitSegment {
  Mat u;
  Mat y;

  int tau() const { return static_cast<int>(u.rows()) - 1; }
  void validate() const;
};

enum class InitKind { kWashout, kMlp, kRnn };

std::string to_string(InitKind k);

struct InitializerConfig {
  InitKind kind = InitKind::kMlp;
  /// MLP hidden neurons or RNN initializer LSTM cells.
  int hidden = 32;
  /// Initialization length; segments carry tau + 1 rows.
  int tau = 10;
  /// Warmup length for washout.
  int washout = 10;
  /// Bound on LSTM cell states emitted by NN initializers.
  double c_max = 5.0;
};

/// A predictor paired with its state-initialization scheme.
///
/// NN initializers (MLP or single-layer LSTM) read an InitSegment whose
/// width may differ from the predictor's own input/output (hybrid modules),
/// and emit the full state [o; s] squashed into the predictor's state bounds.
class InitializedRnn {
 public:
  /// Start-of-prediction state, plus the emitted vector when NN-initialized.
  struct Start {
    Predictor::TapeState state;
    std::optional<Var> emitted;
  };

  InitializedRnn(PredictorConfig pred, InitializerConfig init, ParamLayout& layout,
                 const std::string& prefix, int segment_inputs, int segment_outputs);

  const Predictor& predictor() const { return predictor_; }
  const InitializerConfig& init_config() const { return init_; }
  int segment_inputs() const { return seg_m_; }
  int segment_outputs() const { return seg_n_; }
  /// True when the initializer reads the predictor's own input/output channels.
  bool segment_matches_predictor() const;

  void init_params(ParamVector& theta, std::mt19937_64& rng, double scale) const;

  /// NN initializer output for a segment (length = predictor state count).
  Var emit(Tape& tape, const InitSegment& seg) const;
  /// Initial predictor state at k0 by the configured scheme.
  Start start(Tape& tape, const InitSegment& seg, const DropoutContext* dropout = nullptr) const;
  /// L_si for an NN-initialized start; requires segment_matches_predictor().
  Var state_init_cost(Tape& tape, const Start& start, const InitSegment& seg) const;

 private:
  Var emit_mlp(Tape& tape, const InitSegment& seg) const;
  Var emit_rnn(Tape& tape, const InitSegment& seg) const;

  Predictor predictor_;
  InitializerConfig init_;
  int seg_m_;
  int seg_n_;
  Vec bound_;
  ParamBlock w1_, b1_, wy_, by_;
  LstmBlocks lstm_;
};

/// Zero state rolled over the warmup inputs; outputs discarded.
/// Throws InstabilityError with the step index if the state blows up.
RnnState washout_init(const Predictor& model, const ParamVector& theta, const Mat& warmup);

/// MLP initializer: x_{k0} = zeta(u_{k0-tau..k0}, y_{k0-tau..k0}).
RnnState mlp_init(const InitializedRnn& model, const ParamVector& theta, const InitSegment& seg);

/// RNN initializer: last output of an LSTM run over [u_j; y_j].
RnnState rnn_init(const InitializedRnn& model, const ParamVector& theta, const InitSegment& seg);

/// Initial state under whichever scheme the model is configured with.
RnnState initial_state(const InitializedRnn& model, const ParamVector& theta, const InitSegment& seg);

/// L_si = |A_s s - c| with c = y_{k0} - A_o y_{k0-1} - B u_{k0}.
double state_init_cost(const Mat& a_s, const Mat& a_o, const Mat& b, const Vec& s, const Vec& u_k0,
                       const Vec& y_k0, const Vec& y_prev);

}  // namespace msp
