#include "msp/motion_model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace msp {

Vec QuadState::flat() const {
  Vec v(12);
  v << eta, omega, xi, xi_dot;
  return v;
}

QuadState QuadState::from_flat(const Vec& v) {
  if (v.size() != 12) throw DimensionError("QuadState needs 12 entries, got " + std::to_string(v.size()));
  QuadState s;
  s.eta = v.segment<3>(0);
  s.omega = v.segment<3>(3);
  s.xi = v.segment<3>(6);
  s.xi_dot = v.segment<3>(9);
  return s;
}

void MmParams::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("MmParams: mass must be positive");
  if (!(inertia.array() > 0.0).all()) throw std::invalid_argument("MmParams: inertia must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("MmParams: dt must be positive");
}

Eigen::Vector3d thrust_direction(const Eigen::Vector3d& eta) {
  const double cphi = std::cos(eta(0)), sphi = std::sin(eta(0));
  const double cth = std::cos(eta(1)), sth = std::sin(eta(1));
  const double cpsi = std::cos(eta(2)), spsi = std::sin(eta(2));
  return {cphi * sth * cpsi + sphi * spsi, cphi * sth * spsi - sphi * cpsi, cphi * cth};
}

Eigen::Vector3d euler_rates(const Eigen::Vector3d& eta, const Eigen::Vector3d& omega) {
  const double cphi = std::cos(eta(0)), sphi = std::sin(eta(0));
  const double cth = std::cos(eta(1)), tth = std::tan(eta(1));
  return {omega(0) + sphi * tth * omega(1) + cphi * tth * omega(2), cphi * omega(1) - sphi * omega(2),
          (sphi * omega(1) + cphi * omega(2)) / cth};
}

namespace {

void guard_pitch(const MmParams& p, double pitch, const Vec& snapshot, int step) {
  if (!(std::abs(pitch) < std::numbers::pi / 2.0 - p.pitch_margin)) {
    std::ostringstream os;
    os << "pitch " << pitch << " rad at the Euler singularity guard; state [" << snapshot.transpose() << "]";
    throw IntegrationError(os.str(), step);
  }
}

}  // namespace

QuadState mm_step(const MmParams& params, const QuadState& s, const Wrench& wrench) {
  guard_pitch(params, s.eta(1), s.flat(), -1);
  const Eigen::Vector3d torque = wrench.head<3>();
  const double thrust = wrench(3);
  const Eigen::Vector3d& J = params.inertia;
  const Eigen::Vector3d eta_dot = euler_rates(s.eta, s.omega);
  const Eigen::Vector3d omega_dot = (torque - s.omega.cross(J.cwiseProduct(s.omega))).cwiseQuotient(J);
  const Eigen::Vector3d accel = thrust_direction(s.eta) * (thrust / params.mass) -
                                Eigen::Vector3d(0.0, 0.0, params.gravity) -
                                params.drag.cwiseProduct(s.xi_dot) / params.mass;
  QuadState n;
  n.eta = s.eta + params.dt * eta_dot;
  n.omega = s.omega + params.dt * omega_dot;
  n.xi = s.xi + params.dt * s.xi_dot;
  n.xi_dot = s.xi_dot + params.dt * accel;
  return n;
}

QuadTapeState mm_step_tape(Tape& tape, const MmParams& params, const QuadTapeState& s, Var wrench) {
  if (wrench.size() != 4) throw DimensionError("wrench must have 4 entries");
  {
    Vec snap(12);
    snap << s.eta.value(), s.omega.value(), s.xi.value(), s.xi_dot.value();
    guard_pitch(params, s.eta.value()(1), snap, tape.step());
  }
  const Var phi = tape.slice(s.eta, 0, 1), th = tape.slice(s.eta, 1, 1), psi = tape.slice(s.eta, 2, 1);
  const Var p = tape.slice(s.omega, 0, 1), q = tape.slice(s.omega, 1, 1), r = tape.slice(s.omega, 2, 1);
  const Var sphi = tape.sin(phi), cphi = tape.cos(phi);
  const Var sth = tape.sin(th), cth = tape.cos(th);
  const Var spsi = tape.sin(psi), cpsi = tape.cos(psi);
  const Var tth = tape.div(sth, cth);

  // Euler-angle kinematics.
  const Var qs_rc = sphi * q + cphi * r;
  const Var phi_dot = p + tth * qs_rc;
  const Var th_dot = cphi * q - sphi * r;
  const Var psi_dot = tape.div(qs_rc, cth);
  const Var eta_dot = tape.concat({phi_dot, th_dot, psi_dot});

  // Rotational dynamics with diagonal inertia.
  const Vec J = params.inertia;
  const Var Jw = tape.mul_const(s.omega, J);
  const Var torque = tape.slice(wrench, 0, 3);
  const Var omega_dot = tape.mul_const(torque - tape.cross(s.omega, Jw), J.cwiseInverse());

  // Translational dynamics.
  const Var dir = tape.concat({cphi * sth * cpsi + sphi * spsi, cphi * sth * spsi - sphi * cpsi, cphi * cth});
  const Var thrust = tape.slice(wrench, 3, 1);
  Var accel = tape.add_const(tape.scalar_mul(thrust, dir) * (1.0 / params.mass),
                             Vec(Eigen::Vector3d(0.0, 0.0, -params.gravity)));
  if (!params.drag.isZero()) accel = accel - tape.mul_const(s.xi_dot, Vec(params.drag / params.mass));

  QuadTapeState n;
  n.eta = s.eta + eta_dot * params.dt;
  n.omega = s.omega + omega_dot * params.dt;
  n.xi = s.xi + s.xi_dot * params.dt;
  n.xi_dot = s.xi_dot + accel * params.dt;
  return n;
}

}  // namespace msp
