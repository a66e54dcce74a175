#pragma once

#include <memory>

#include "msp/motion_model.hpp"
#include "msp/training.hpp"

namespace msp {

/// Per-axis maxima used to normalize body rates and inertial velocities.
struct NormGains {
  Eigen::Vector3d omega = Eigen::Vector3d(3.9116, 3.8506, 3.7902);     // rad/s
  Eigen::Vector3d xi_dot = Eigen::Vector3d(3.9268, 3.9721, 5.8526);    // m/s

  void validate() const;
  /// [omega; xi_dot]
  Vec stacked() const;
  /// Gains from the output maxima of a series whose outputs are p,q,r,vx,vy,vz.
  static NormGains from_maxima(const Vec& output_maxima);
};

struct HybridConfig {
  PredictorConfig im;  // input/output dims are filled in by HybridModel
  InitializerConfig im_init;
  PredictorConfig om;
  InitializerConfig om_init;
  MmParams mm;
  NormGains gains;
  /// Motor-speed channels.
  int motors = 4;
};

/// Grey-box quadrotor model: input network -> rigid-body motion model -> output correction network.
///
/// Windows are expected in normalized form: inputs are scaled motor speeds,
/// outputs are [p,q,r,vx,vy,vz] divided by the gains, and the auxiliary
/// channels hold raw [phi,theta,psi,x,y,z]. Predictions are normalized outputs.
class HybridModel : public Trainable {
 public:
  /// Plain-value snapshot of everything carried between steps.
  struct State {
    RnnState im;
    RnnState om;
    Eigen::Vector3d eta = Eigen::Vector3d::Zero();
    Eigen::Vector3d xi = Eigen::Vector3d::Zero();
    /// Normalized compensated outputs of the previous step.
    Vec feedback;
  };

  struct TapeState {
    Predictor::TapeState im;
    Predictor::TapeState om;
    Var eta, xi, feedback;
  };

  /// One step's intermediate signals.
  struct StepTrace {
    Var wrench_n;   // IM output (scaled wrench)
    Var wrench;     // physical wrench
    Var mm_out_n;   // normalized MM body rates and velocity
    Var correction; // OM output
    Var output;     // mm_out_n + correction
  };

  explicit HybridModel(HybridConfig cfg);

  const HybridConfig& config() const { return cfg_; }
  const InitializedRnn& im() const { return *im_; }
  const InitializedRnn& om() const { return *om_; }
  /// Physical wrench = wrench_scale .* IM output + wrench_offset.
  const Vec& wrench_scale() const { return wrench_scale_; }
  const Vec& wrench_offset() const { return wrench_offset_; }

  const ParamLayout& layout() const override { return layout_; }
  void init_params(ParamVector& theta, std::mt19937_64& rng, double scale) const override;
  WindowLoss window_loss(Tape& tape, const SampleWindow& w, double alpha, double beta,
                         const DropoutContext* dropout) const override;
  Mat predict(const ParamVector& theta, const SampleWindow& w) const override;
  int output_dim() const override { return 6; }

  /// IM/OM states from their initializers, MM pose from the auxiliary channels at k0,
  /// feedback from the measured outputs at k0.
  TapeState start(Tape& tape, const SampleWindow& w, const DropoutContext* dropout = nullptr) const;
  std::pair<TapeState, StepTrace> step(Tape& tape, const TapeState& x, Var u,
                                       const DropoutContext* dropout = nullptr) const;
  /// Normalized outputs per step.
  std::vector<Var> rollout(Tape& tape, TapeState x, const Mat& inputs, const DropoutContext* dropout = nullptr) const;

  State to_plain(const TapeState& x) const;
  TapeState to_tape(Tape& tape, const State& x) const;

 private:
  HybridConfig cfg_;
  ParamLayout layout_;
  std::unique_ptr<InitializedRnn> im_;
  std::unique_ptr<InitializedRnn> om_;
  Vec wrench_scale_, wrench_offset_;
};

/// Plain-value single step: returns the next state and the normalized output.
std::pair<HybridModel::State, Vec> hybrid_step(const HybridModel& model, const ParamVector& theta,
                                               const HybridModel::State& x, const Vec& u);

/// Normalized predictions (T x 6) for a window.
Mat hybrid_rollout(const HybridModel& model, const ParamVector& theta, const SampleWindow& w);

/// Zeroes the output correction network's output map so the hybrid reduces to the normalized motion model.
void zero_output_correction(const HybridModel& model, ParamVector& theta);

}  // namespace msp
