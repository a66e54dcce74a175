#pragma once

#include "msp/numeric.hpp"
#include "msp/tape.hpp"

namespace msp {

/// Rigid-body quadrotor state: Euler angles (roll, pitch, yaw), body rates,
/// inertial position and inertial velocity.
struct QuadState {
  Eigen::Vector3d eta = Eigen::Vector3d::Zero();
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d xi = Eigen::Vector3d::Zero();
  Eigen::Vector3d xi_dot = Eigen::Vector3d::Zero();

  /// [eta; omega; xi; xi_dot] as a 12-vector.
  Vec flat() const;
  static QuadState from_flat(const Vec& v);
};

struct MmParams {
  double mass = 1.0;
  Eigen::Vector3d inertia = Eigen::Vector3d(0.01, 0.01, 0.02);  // diagonal of J
  double gravity = 9.81;
  double dt = 0.01;
  /// Per-axis linear drag on inertial velocity (force = -drag .* xi_dot).
  Eigen::Vector3d drag = Eigen::Vector3d::Zero();
  /// Integration refuses |pitch| >= pi/2 - pitch_margin.
  double pitch_margin = 1e-3;

  void validate() const;
};

/// Torques (N m, body frame) followed by collective thrust (N).
using Wrench = Eigen::Vector4d;

/// Third column of the ZYX rotation body -> inertial.
Eigen::Vector3d thrust_direction(const Eigen::Vector3d& eta);

/// Euler-angle rates W(eta) omega.
Eigen::Vector3d euler_rates(const Eigen::Vector3d& eta, const Eigen::Vector3d& omega);

/// One forward-Euler step of the 6-DOF model. Throws IntegrationError near the pitch singularity.
QuadState mm_step(const MmParams& params, const QuadState& state, const Wrench& wrench);

/// Tape-resident state blocks (each a 3-vector).
struct QuadTapeState {
  Var eta, omega, xi, xi_dot;
};

/// mm_step recorded on a tape; `wrench` is a 4-vector Var.
QuadTapeState mm_step_tape(Tape& tape, const MmParams& params, const QuadTapeState& state, Var wrench);

}  // namespace msp
