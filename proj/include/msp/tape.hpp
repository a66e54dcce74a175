#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "msp/numeric.hpp"
#include "msp/params.hpp"

namespace msp {

class Tape;

/// Handle to a vector-valued node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  const Vec& value() const;
  Eigen::Index size() const { return value().size(); }
  double scalar() const { return value()(0); }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode accumulation over vector-valued nodes.
///
/// Parameter-dependent nodes read the flat theta through `theta`; `backward`
/// returns dL/dtheta laid out identically. A tape built with `record = false`
/// evaluates values only and cannot be differentiated. Every forward value is
/// checked for finiteness; the step index set via `set_step` is reported in
/// the resulting NumericalError.
class Tape {
 public:
  explicit Tape(std::span<const double> theta, bool record = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  void set_step(int k) { step_ = k; }
  int step() const { return step_; }
  std::size_t node_count() const { return nodes_.size(); }

  Var constant(Vec v);
  Var constant(double v) { return constant(Vec::Constant(1, v)); }
  /// The block's entries as a vector leaf (column-major flatten).
  Var param(const ParamBlock& b);
  /// W x with W read from theta.
  Var matvec(const ParamBlock& w, Var x);
  /// d .* x with d a parameter vector (peephole weights).
  Var param_mul(const ParamBlock& d, Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double s);
  Var mul_const(Var a, const Vec& c);
  Var add_const(Var a, const Vec& c);
  /// s * v where s has size 1.
  Var scalar_mul(Var s, Var v);
  Var activation(Activation kind, Var a);
  Var tanh(Var a) { return activation(Activation::kTanh, a); }
  Var logistic(Var a) { return activation(Activation::kLogistic, a); }
  Var sin(Var a);
  Var cos(Var a);
  Var concat(const std::vector<Var>& parts);
  Var slice(Var a, Eigen::Index offset, Eigen::Index len);
  Var cross(Var a, Var b);
  Var sum(Var a);
  Var sum_squares(Var a);
  /// Euclidean norm; subgradient 0 at the origin.
  Var norm(Var a);

  /// Reverse sweep from a scalar node; returns dL/dtheta.
  Vec backward(Var loss);

 private:
  struct Node {
    Vec value;
    Vec grad;
    std::function<void(Tape&, const Vec&)> back;
  };

  friend class Var;
  Var push(Vec value, std::function<void(Tape&, const Vec&)> back, const char* op);
  template <typename Expr>
  void accumulate(std::uint32_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  void accumulate_theta(const ParamBlock& b, const Vec& g);
  void check_same_tape(Var a) const;

  std::span<const double> theta_;
  bool record_;
  int step_ = -1;
  std::deque<Node> nodes_;
  Vec theta_grad_;
};

inline const Vec& Var::value() const { return tape_->nodes_[id_].value; }

inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator*(Var a, double s) { return a.tape()->scale(a, s); }
inline Var operator*(double s, Var a) { return a.tape()->scale(a, s); }
inline Var operator-(Var a) { return a.tape()->scale(a, -1.0); }

/// Scalar-valued composite over theta, recorded onto the supplied tape.
using LossGraph = std::function<Var(Tape&)>;

/// dL/dtheta by reverse accumulation.
Vec grad(const LossGraph& graph, const ParamVector& theta);
/// L(theta) without recording.
double evaluate(const LossGraph& graph, const ParamVector& theta);

/// Central differences (L(theta + eps e_i) - L(theta - eps e_i)) / (2 eps).
Vec finite_diff_grad(const std::function<double(const Vec&)>& loss, const Vec& theta,
                     double eps = 1e-6);

/// Per-coordinate max of |g - fd| / max(|g|, floor).
double max_relative_error(const Vec& g, const Vec& fd, double floor = 1e-8);

}  // namespace msp
