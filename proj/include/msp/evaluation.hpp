#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msp/training.hpp"

namespace msp {

/// Mean absolute component of an error vector of any width.
double mean_abs_error(const Vec& e);
/// Mean absolute component of a 3-vector error (velocity, body-rate or Euler-rate).
double step_error_norm(const Vec& e);

/// sqrt( sum_i sum_k |e_i(k)|^2 / (T * N) ) over N windows of T steps.
double rmsse(const std::vector<Mat>& predicted, const std::vector<Mat>& target);

/// Linear-interpolation quantile of sorted data, p in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double p);

struct BoxStats {
  double mean = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  /// Most extreme data within 1.5 IQR of the box.
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  int outliers = 0;
  double p99 = 0.0;
};

BoxStats box_stats(std::vector<double> values);

struct PredictionReport {
  std::string model_id;
  std::string dataset_id;
  int tau = 0;
  int horizon = 0;
  std::size_t windows = 0;
  /// Output columns the per-step error norm averages over.
  std::vector<int> channels;
  std::string unit;
  std::vector<BoxStats> steps;
  double rmsse = 0.0;
  /// Empirical 99th percentile of |component error| over all steps and windows.
  double abs_error_p99 = 0.0;
};

/// Per-step error-norm distributions over the given channels (all when empty),
/// after multiplying errors by `unit_scale` (e.g. rad -> deg).
PredictionReport distributions(const std::vector<Mat>& predicted, const std::vector<Mat>& target,
                               std::vector<int> channels = {}, double unit_scale = 1.0);

/// Predictions for every window, mapped back to physical units with `normalizer`.
struct Predictions {
  std::vector<Mat> predicted;
  std::vector<Mat> target;
};

Predictions predict_all(const Trainable& model, const ParamVector& theta, const std::vector<SampleWindow>& windows,
                        const Normalizer& normalizer, int workers = 1);

/// Practical mode: the body-rate model's predictions replace the measured body
/// rates, which occupy the last columns of the velocity model's inputs.
/// Returns normalized velocity predictions (T x n_velocity).
Mat cascade_predict(const Trainable& bodyrate_model, const ParamVector& bodyrate_theta,
                    const Trainable& velocity_model, const ParamVector& velocity_theta, const SampleWindow& velocity_window);

/// Velocity-model window with the prediction-segment body rates replaced.
SampleWindow substitute_body_rates(const SampleWindow& velocity_window, const Mat& body_rates);

struct Comparison {
  /// mean_A - mean_B per step.
  std::vector<double> delta;
  /// 'A', 'B' or '=' per step (lower mean wins).
  std::vector<char> winner;
  double rmsse_ratio = 0.0;  // A / B
};

Comparison compare(const PredictionReport& a, const PredictionReport& b);

/// One row per step: step,mean,q25,median,q75,whisker_low,whisker_high,outliers,p99.
void write_report_csv(const std::filesystem::path& path, const PredictionReport& report);
/// JSON summary: ids, tau, horizon, windows, rmsse, p99, unit.
void write_report_summary(const std::filesystem::path& path, const PredictionReport& report);
void write_comparison_csv(const std::filesystem::path& path, const Comparison& cmp);

}  // namespace msp
