#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "msp/checkpoint.hpp"
#include "msp/evaluation.hpp"
#include "msp/hybrid.hpp"
#include "msp/model_spec.hpp"

namespace msp {

inline constexpr const char* kVersion = "0.1.0";

struct DataSource {
  std::string csv;
  std::string manifest;
  std::optional<SynthSystem> synth;
  Eigen::Index length = 5000;
};

/// Everything a run needs. Loaded as defaults <- config file <- command-line overrides.
struct RunConfig {
  DataSource data;
  Task task = Task::kGeneric;
  std::string model = "LSTM:1x16-MLP:32x10";
  /// Hybrid submodules.
  std::string im_model = "LSTM:1x16-MLP:32x10";
  std::string om_model = "LSTM:1x16-MLP:32x10";
  /// Initialization length; when unset it is taken from the model spec.
  std::optional<int> tau;
  int horizon = 40;
  /// Window stride; 0 means the horizon (non-overlapping prediction segments).
  int stride = 0;
  std::array<double, 3> split{0.7, 0.15, 0.15};
  bool normalize = true;
  Activation mlfc_activation = Activation::kTanh;
  int tdl_capacity = 10;
  double c_max = 5.0;
  TrainConfig train;
  MmParams mm;
  /// Explicit hybrid gains; recomputed from data maxima when unset.
  std::optional<NormGains> gains;
  std::string output_dir;
  std::uint64_t seed = 1;

  nlohmann::ordered_json to_json() const;
  /// Applies the keys present in `j` on top of `base`. Unknown keys are a ParseError.
  static RunConfig from_json(const nlohmann::json& j, RunConfig base);
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path, RunConfig base);
  /// FNV-1a of the canonical JSON.
  std::uint64_t hash() const;
  void validate() const;
};

nlohmann::ordered_json synth_to_json(const SynthSystem& s);
SynthSystem synth_from_json(const nlohmann::json& j, SynthSystem base = {});

/// Windowed, normalized task data.
struct PreparedData {
  TimeSeries raw;
  TimeSeries series;  // task channels, normalized
  Normalizer normalizer;
  DatasetSplit split;
  int tau = 0;
  std::string id;
};

/// Initialization length implied by the config and model spec(s).
int effective_tau(const RunConfig& cfg);

TimeSeries load_source(const DataSource& src);
PreparedData prepare_data(const RunConfig& cfg);
/// Same, from an already-loaded raw series.
PreparedData prepare_data(const RunConfig& cfg, const TimeSeries& raw);
/// Same, scaling with a given normalizer (e.g. one stored in a checkpoint).
PreparedData prepare_data(const RunConfig& cfg, const TimeSeries& raw, const Normalizer& fixed);

std::unique_ptr<Trainable> build_model(const RunConfig& cfg, const PreparedData& data);

/// Checkpoint metadata for a trained model.
nlohmann::json checkpoint_meta(const RunConfig& cfg, const PreparedData& data, const TrainResult* result);
Normalizer normalizer_from_meta(const nlohmann::json& meta);

/// Report over the test split in physical units. Body rates stay in rad/s,
/// Euler rates are reported in deg/s; hybrid reports the velocity channels.
PredictionReport evaluate(const Trainable& model, const ParamVector& theta, const RunConfig& cfg,
                          const PreparedData& data, const std::vector<SampleWindow>& windows);

/// Run manifest: config hash, seed, version, command, full config.
nlohmann::ordered_json run_manifest(const RunConfig& cfg, const std::string& command);

}  // namespace msp
