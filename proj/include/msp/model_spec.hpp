#pragma once

#include <string>

#include "msp/initializers.hpp"

namespace msp {

/// Parsed "PRED[ TDL]: LxS[ TDL] - INIT: HxTAU" string, e.g. "LSTM: 3x200-MLP:1000x10",
/// "MLFC:1x50-Washout:10" or "LSTM TDL: 7x200-RNN: 2500x10". Whitespace is ignored.
struct ModelSpec {
  PredictorKind predictor = PredictorKind::kLstm;
  int layers = 1;
  int size = 8;
  bool tdl = false;
  InitKind init = InitKind::kMlp;
  /// Initializer hidden size (MLP/RNN); unused for washout.
  int hidden = 32;
  /// Initialization length for MLP/RNN, warmup length for washout.
  int length = 10;

  std::string to_string() const;
  /// Predictor config for the given channel counts.
  PredictorConfig predictor_config(int inputs, int outputs, Activation mlfc_activation = Activation::kTanh,
                                   int tdl_capacity = 10) const;
  /// Initializer config; `tau` is the segment length used with washout.
  InitializerConfig initializer_config(int tau, double c_max = 5.0) const;
};

/// Throws ParseError naming the character offset of the problem.
ModelSpec parse_model_spec(const std::string& text);

}  // namespace msp
