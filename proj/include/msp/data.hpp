#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msp/initializers.hpp"
#include "msp/motion_model.hpp"

namespace msp {

/// Raw CSV contents: named columns, one row per time step.
struct Table {
  std::vector<std::string> names;
  Mat data;
  std::optional<double> dt;

  Eigen::Index column(const std::string& name) const;
};

/// Reads a header-first CSV. Lines starting with '#' are comments; "# dt=<seconds>" declares the timestep.
/// Ragged rows, non-numeric or non-finite cells raise ParseError naming the line and column.
Table read_csv(const std::filesystem::path& path);
/// Writes with round-trip precision; emits "# dt=" when dt is set.
void write_csv(const std::filesystem::path& path, const Table& table);

/// Column roles and sampling info for a dataset.
struct Manifest {
  double dt = 0.0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::string> auxiliary;
  std::vector<std::pair<std::string, std::string>> units;

  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Synchronized input/output recording with a fixed timestep.
struct TimeSeries {
  double dt = 0.01;
  Mat u;    // rows = steps, cols = inputs
  Mat y;    // rows = steps, cols = outputs
  Mat aux;  // optional extra channels (may have 0 cols)
  std::vector<std::string> input_names, output_names, aux_names;

  Eigen::Index length() const { return u.rows(); }
  void validate() const;
  /// Rows [begin, end).
  TimeSeries slice(Eigen::Index begin, Eigen::Index end) const;
};

/// Builds a series from a table using the manifest's roles.
TimeSeries to_series(const Table& table, const Manifest& manifest);
Table to_table(const TimeSeries& series);

/// read_csv + to_series; dt from the manifest, falling back to the CSV header.
TimeSeries load_csv(const std::filesystem::path& path, const Manifest& manifest);
/// Writes all channels (inputs, outputs, auxiliary) with a dt header.
void save_csv(const std::filesystem::path& path, const TimeSeries& series);

/// One training/evaluation sample: tau+1 initialization rows then T prediction rows.
struct SampleWindow {
  InitSegment init;
  Mat pred_u;
  Mat pred_y;
  Mat init_aux;
  Mat pred_aux;
  /// First source row of the initialization segment.
  Eigen::Index source_start = 0;
  /// Identifier of the source series the window was cut from.
  std::int64_t source_id = 0;

  int tau() const { return init.tau(); }
  int horizon() const { return static_cast<int>(pred_u.rows()); }
  /// One past the last source row used.
  Eigen::Index source_end() const { return source_start + init.u.rows() + pred_u.rows(); }
};

/// All windows of length tau+1+T stepping by stride:
/// floor((N - (tau+1+T)) / stride) + 1 of them.
std::vector<SampleWindow> window(const TimeSeries& series, int tau, int horizon, int stride,
                                 std::int64_t source_id = 0);

struct DatasetSplit {
  std::vector<SampleWindow> train, val, test;
  /// Windows dropped because they straddle blocks assigned to different partitions.
  std::size_t discarded = 0;
};

/// Partitions windows into train/val/test by contiguous source blocks.
/// Windows (sorted by source and start row) are cut into `blocks` runs of
/// consecutive windows per source; the runs are shuffled with `seed` and
/// assigned in order until each partition's share of windows is reached.
/// A window whose source rows overlap a window of another partition is
/// discarded, so no two partitions share a source row. A partition with a
/// nonzero fraction that ends up empty is an error.
DatasetSplit split(const std::vector<SampleWindow>& windows, std::array<double, 3> fractions,
                   std::uint64_t seed, int blocks = 20);

/// Per-column max |value| (1 for all-zero columns when `floor_zero` is set).
Vec compute_maxima(const Mat& m, bool floor_zero = false);

struct ChannelMaxima {
  Vec u, y;
};
ChannelMaxima compute_maxima(const TimeSeries& series);

/// Per-channel scaling to unit maxima.
struct Normalizer {
  Vec u_scale;
  Vec y_scale;

  static Normalizer identity(Eigen::Index m, Eigen::Index n);
  static Normalizer from_maxima(const TimeSeries& series);
  TimeSeries apply(const TimeSeries& series) const;
  /// Maps normalized outputs (rows) back to physical units.
  Mat denormalize_y(const Mat& y) const;
};

// ---------------------------------------------------------------------------
// Synthetic systems

enum class SynthKind { kLinear2ndOrder, kVanDerPol, kSimQuad };

std::string to_string(SynthKind k);
SynthKind synth_kind_from_string(const std::string& s);

/// Filtered random-step excitation.
struct Excitation {
  double amplitude = 1.0;
  int hold_min = 5;
  int hold_max = 30;
  /// First-order low-pass coefficient in [0, 1); 0 leaves steps unfiltered.
  double smoothing = 0.5;
};

/// Quadrotor plant used to synthesize flight data: the motion model plus
/// "unmodeled" effects (quadratic drag, rotor damping, optional gust torques) and a
/// stabilizing velocity controller tracking random setpoints.
struct SimQuadParams {
  MmParams mm;
  double arm = 0.2;
  double k_thrust = 1e-5;  // N per (rad/s)^2
  double k_torque = 2e-7;  // N m per (rad/s)^2
  double quad_drag = 0.15;   // N per (m/s)^2
  double rate_damping = 0.002;  // N m per rad/s
  /// Setpoint range for horizontal and vertical velocity (m/s).
  double max_speed = 2.0;
  double max_climb = 1.0;
  int setpoint_hold_min = 40;
  int setpoint_hold_max = 150;
  /// Body-frame gust torque: Ornstein-Uhlenbeck process with this stationary std (N m) and time constant (s).
  double gust_torque = 0.0;
  double gust_time = 0.5;
};

struct SynthSystem {
  SynthKind kind = SynthKind::kLinear2ndOrder;
  double dt = 0.01;
  // Linear2ndOrder: y_k = a1 y_{k-1} + a2 y_{k-2} + b0 u_k.
  double a1 = 1.6;
  double a2 = -0.8;
  double b0 = 0.2;
  // Forced Van der Pol: x'' - mu (1 - x^2) x' + x = u, integrated with RK4 substeps.
  double mu = 1.0;
  int substeps = 10;
  SimQuadParams quad;
  Excitation excitation;
  double process_noise = 0.0;
  double measurement_noise = 0.0;
  std::uint64_t seed = 1;
};

/// Simulates `length` steps. SimQuad produces inputs w1..w4 (motor speeds),
/// outputs p,q,r,vx,vy,vz and auxiliary phi,theta,psi,x,y,z.
TimeSeries synth_generate(const SynthSystem& sys, Eigen::Index length);

/// Same, with an explicit input sequence (Linear2ndOrder and VanDerPol only).
TimeSeries synth_generate(const SynthSystem& sys, const Mat& inputs);

/// Prediction tasks on a quadrotor-layout series (inputs = motor speeds,
/// outputs = p,q,r,vx,vy,vz, auxiliary = phi,theta,psi,x,y,z).
enum class Task { kBodyRate, kVelocity, kEulerRates, kHybrid, kGeneric };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

/// Channels for a task. Velocity windows are teacher-forced: measured body
/// rates are appended to the inputs. Euler rates are derived from attitude and
/// body rates. Hybrid and generic return the series unchanged.
TimeSeries task_series(const TimeSeries& quad, Task task);

/// Column names of the SimQuad / Pelican-style layout.
const std::vector<std::string>& quad_state_columns();
const std::vector<std::string>& quad_motor_columns();

}  // namespace msp
