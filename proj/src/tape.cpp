#include "msp/tape.hpp"

#include <cmath>
#include <string>

namespace msp {

namespace {

std::string size_str(Eigen::Index a, Eigen::Index b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

}  // namespace

Tape::Tape(std::span<const double> theta, bool record) : theta_(theta), record_(record) {}

Var Tape::push(Vec value, std::function<void(Tape&, const Vec&)> back, const char* op) {
  if (!value.allFinite()) {
    throw NumericalError(std::string("non-finite value produced by ") + op, step_);
  }
  Node n;
  n.value = std::move(value);
  if (record_) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check_same_tape(Var a) const {
  if (a.tape() != this) throw std::invalid_argument("variable belongs to a different tape");
}

void Tape::accumulate_theta(const ParamBlock& b, const Vec& g) {
  if (theta_grad_.size() == 0) theta_grad_ = Vec::Zero(static_cast<Eigen::Index>(theta_.size()));
  theta_grad_.segment(static_cast<Eigen::Index>(b.offset), g.size()) += g;
}

Var Tape::constant(Vec v) { return push(std::move(v), nullptr, "constant"); }

Var Tape::param(const ParamBlock& b) {
  if (b.offset + b.size() > theta_.size()) throw DimensionError("parameter block outside theta");
  Vec v = Eigen::Map<const Vec>(theta_.data() + b.offset, static_cast<Eigen::Index>(b.size()));
  return push(std::move(v), [b](Tape& t, const Vec& g) { t.accumulate_theta(b, g); }, "param");
}

Var Tape::matvec(const ParamBlock& w, Var x) {
  check_same_tape(x);
  if (static_cast<Eigen::Index>(w.cols) != x.size()) {
    throw DimensionError("matvec: W '" + w.name + "' is " + std::to_string(w.rows) + "x" +
                         std::to_string(w.cols) + ", x has " + std::to_string(x.size()));
  }
  Eigen::Map<const Mat> W(theta_.data() + w.offset, static_cast<Eigen::Index>(w.rows),
                          static_cast<Eigen::Index>(w.cols));
  Vec y = W * x.value();
  const auto xi = x.id();
  return push(std::move(y),
              [w, xi](Tape& t, const Vec& g) {
                Eigen::Map<const Mat> Wm(t.theta_.data() + w.offset,
                                         static_cast<Eigen::Index>(w.rows),
                                         static_cast<Eigen::Index>(w.cols));
                if (t.theta_grad_.size() == 0) {
                  t.theta_grad_ = Vec::Zero(static_cast<Eigen::Index>(t.theta_.size()));
                }
                Eigen::Map<Mat> dW(t.theta_grad_.data() + w.offset,
                                   static_cast<Eigen::Index>(w.rows),
                                   static_cast<Eigen::Index>(w.cols));
                dW.noalias() += g * t.nodes_[xi].value.transpose();
                t.accumulate(xi, Wm.transpose() * g);
              },
              "matvec");
}

Var Tape::param_mul(const ParamBlock& d, Var x) {
  check_same_tape(x);
  if (static_cast<Eigen::Index>(d.size()) != x.size()) {
    throw DimensionError("param_mul: '" + d.name + "' " + size_str(d.size(), x.size()));
  }
  Eigen::Map<const Vec> dv(theta_.data() + d.offset, x.size());
  Vec y = dv.cwiseProduct(x.value());
  const auto xi = x.id();
  return push(std::move(y),
              [d, xi](Tape& t, const Vec& g) {
                Eigen::Map<const Vec> dm(t.theta_.data() + d.offset, g.size());
                t.accumulate_theta(d, g.cwiseProduct(t.nodes_[xi].value));
                t.accumulate(xi, g.cwiseProduct(dm));
              },
              "param_mul");
}

Var Tape::add(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.size() != b.size()) throw DimensionError("add: " + size_str(a.size(), b.size()));
  const auto ai = a.id(), bi = b.id();
  return push(a.value() + b.value(),
              [ai, bi](Tape& t, const Vec& g) {
                t.accumulate(ai, g);
                t.accumulate(bi, g);
              },
              "add");
}

Var Tape::sub(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.size() != b.size()) throw DimensionError("sub: " + size_str(a.size(), b.size()));
  const auto ai = a.id(), bi = b.id();
  return push(a.value() - b.value(),
              [ai, bi](Tape& t, const Vec& g) {
                t.accumulate(ai, g);
                t.accumulate(bi, -g);
              },
              "sub");
}

Var Tape::mul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.size() != b.size()) throw DimensionError("mul: " + size_str(a.size(), b.size()));
  const auto ai = a.id(), bi = b.id();
  return push(a.value().cwiseProduct(b.value()),
              [ai, bi](Tape& t, const Vec& g) {
                t.accumulate(ai, g.cwiseProduct(t.nodes_[bi].value));
                t.accumulate(bi, g.cwiseProduct(t.nodes_[ai].value));
              },
              "mul");
}

Var Tape::div(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.size() != b.size()) throw DimensionError("div: " + size_str(a.size(), b.size()));
  const auto ai = a.id(), bi = b.id();
  return push(a.value().cwiseQuotient(b.value()),
              [ai, bi](Tape& t, const Vec& g) {
                const Vec& bv = t.nodes_[bi].value;
                const Vec& av = t.nodes_[ai].value;
                t.accumulate(ai, g.cwiseQuotient(bv));
                t.accumulate(bi, -g.cwiseProduct(av).cwiseQuotient(bv.cwiseProduct(bv)));
              },
              "div");
}

Var Tape::scale(Var a, double s) {
  check_same_tape(a);
  const auto ai = a.id();
  return push(a.value() * s, [ai, s](Tape& t, const Vec& g) { t.accumulate(ai, g * s); }, "scale");
}

Var Tape::mul_const(Var a, const Vec& c) {
  check_same_tape(a);
  if (a.size() != c.size()) throw DimensionError("mul_const: " + size_str(a.size(), c.size()));
  const auto ai = a.id();
  return push(a.value().cwiseProduct(c),
              [ai, c](Tape& t, const Vec& g) { t.accumulate(ai, g.cwiseProduct(c)); },
              "mul_const");
}

Var Tape::add_const(Var a, const Vec& c) {
  check_same_tape(a);
  if (a.size() != c.size()) throw DimensionError("add_const: " + size_str(a.size(), c.size()));
  const auto ai = a.id();
  return push(a.value() + c, [ai](Tape& t, const Vec& g) { t.accumulate(ai, g); }, "add_const");
}

Var Tape::scalar_mul(Var s, Var v) {
  check_same_tape(s);
  check_same_tape(v);
  if (s.size() != 1) throw DimensionError("scalar_mul: scalar operand has size " +
                                          std::to_string(s.size()));
  const auto si = s.id(), vi = v.id();
  return push(v.value() * s.scalar(),
              [si, vi](Tape& t, const Vec& g) {
                t.accumulate(si, Vec::Constant(1, g.dot(t.nodes_[vi].value)));
                t.accumulate(vi, g * t.nodes_[si].value(0));
              },
              "scalar_mul");
}

Var Tape::activation(Activation kind, Var a) {
  check_same_tape(a);
  const auto ai = a.id();
  Vec y = act(kind, a.value());
  switch (kind) {
    case Activation::kIdentity:
      return push(std::move(y), [ai](Tape& t, const Vec& g) { t.accumulate(ai, g); }, "identity");
    case Activation::kTanh: {
      const auto self = static_cast<std::uint32_t>(nodes_.size());
      return push(std::move(y),
                  [ai, self](Tape& t, const Vec& g) {
                    const Vec& yv = t.nodes_[self].value;
                    t.accumulate(ai, g.cwiseProduct((1.0 - yv.array().square()).matrix()));
                  },
                  "tanh");
    }
    case Activation::kLogistic: {
      const auto self = static_cast<std::uint32_t>(nodes_.size());
      return push(std::move(y),
                  [ai, self](Tape& t, const Vec& g) {
                    const Vec& yv = t.nodes_[self].value;
                    t.accumulate(ai, g.cwiseProduct((yv.array() * (1.0 - yv.array())).matrix()));
                  },
                  "logistic");
    }
  }
  throw std::logic_error("unreachable activation");
}

Var Tape::sin(Var a) {
  check_same_tape(a);
  const auto ai = a.id();
  return push(a.value().array().sin().matrix(),
              [ai](Tape& t, const Vec& g) {
                t.accumulate(ai, g.cwiseProduct(t.nodes_[ai].value.array().cos().matrix()));
              },
              "sin");
}

Var Tape::cos(Var a) {
  check_same_tape(a);
  const auto ai = a.id();
  return push(a.value().array().cos().matrix(),
              [ai](Tape& t, const Vec& g) {
                t.accumulate(ai, -g.cwiseProduct(t.nodes_[ai].value.array().sin().matrix()));
              },
              "cos");
}

Var Tape::concat(const std::vector<Var>& parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    check_same_tape(p);
    total += p.size();
  }
  Vec y(total);
  std::vector<std::pair<std::uint32_t, Eigen::Index>> ids;
  ids.reserve(parts.size());
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    y.segment(off, p.size()) = p.value();
    ids.emplace_back(p.id(), p.size());
    off += p.size();
  }
  return push(std::move(y),
              [ids = std::move(ids)](Tape& t, const Vec& g) {
                Eigen::Index o = 0;
                for (const auto& [id, n] : ids) {
                  t.accumulate(id, g.segment(o, n));
                  o += n;
                }
              },
              "concat");
}

Var Tape::slice(Var a, Eigen::Index offset, Eigen::Index len) {
  check_same_tape(a);
  if (offset < 0 || len < 0 || offset + len > a.size()) {
    throw DimensionError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + len) +
                         ") out of range for size " + std::to_string(a.size()));
  }
  const auto ai = a.id();
  const Eigen::Index n = a.size();
  return push(a.value().segment(offset, len),
              [ai, offset, n](Tape& t, const Vec& g) {
                Vec full = Vec::Zero(n);
                full.segment(offset, g.size()) = g;
                t.accumulate(ai, full);
              },
              "slice");
}

Var Tape::cross(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.size() != 3 || b.size() != 3) throw DimensionError("cross: operands must be 3-vectors");
  const auto ai = a.id(), bi = b.id();
  Eigen::Vector3d av = a.value(), bv = b.value();
  return push(Vec(av.cross(bv)),
              [ai, bi](Tape& t, const Vec& g) {
                Eigen::Vector3d gv = g;
                Eigen::Vector3d x = t.nodes_[ai].value;
                Eigen::Vector3d y = t.nodes_[bi].value;
                t.accumulate(ai, Vec(y.cross(gv)));
                t.accumulate(bi, Vec(gv.cross(x)));
              },
              "cross");
}

Var Tape::sum(Var a) {
  check_same_tape(a);
  const auto ai = a.id();
  const Eigen::Index n = a.size();
  return push(Vec::Constant(1, a.value().sum()),
              [ai, n](Tape& t, const Vec& g) { t.accumulate(ai, Vec::Constant(n, g(0))); }, "sum");
}

Var Tape::sum_squares(Var a) {
  check_same_tape(a);
  const auto ai = a.id();
  return push(Vec::Constant(1, a.value().squaredNorm()),
              [ai](Tape& t, const Vec& g) { t.accumulate(ai, 2.0 * g(0) * t.nodes_[ai].value); },
              "sum_squares");
}

Var Tape::norm(Var a) {
  check_same_tape(a);
  const auto ai = a.id();
  const double r = a.value().norm();
  return push(Vec::Constant(1, r),
              [ai, r](Tape& t, const Vec& g) {
                if (r > 0.0) t.accumulate(ai, (g(0) / r) * t.nodes_[ai].value);
              },
              "norm");
}

Vec Tape::backward(Var loss) {
  if (!record_) throw SequencingError("backward on a non-recording tape");
  check_same_tape(loss);
  if (loss.size() != 1) throw DimensionError("backward: loss must be scalar");
  theta_grad_ = Vec::Zero(static_cast<Eigen::Index>(theta_.size()));
  for (auto& n : nodes_) n.grad.resize(0);
  nodes_[loss.id()].grad = Vec::Ones(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.back) continue;
    if (!n.grad.allFinite()) throw NumericalError("gradient overflow", step_);
    n.back(*this, n.grad);
  }
  if (!theta_grad_.allFinite()) throw NumericalError("gradient overflow", step_);
  return theta_grad_;
}

Vec grad(const LossGraph& graph, const ParamVector& theta) {
  const Vec& v = theta.values();
  Tape tape(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  Var loss = graph(tape);
  return tape.backward(loss);
}

double evaluate(const LossGraph& graph, const ParamVector& theta) {
  const Vec& v = theta.values();
  Tape tape(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), false);
  return graph(tape).scalar();
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& loss, const Vec& theta, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  Vec g(theta.size());
  Vec probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + eps;
    const double up = loss(probe);
    probe(i) = theta(i) - eps;
    const double down = loss(probe);
    probe(i) = theta(i);
    g(i) = (up - down) / (2.0 * eps);
  }
  return g;
}

double max_relative_error(const Vec& g, const Vec& fd, double floor) {
  if (g.size() != fd.size()) throw DimensionError("max_relative_error: " + size_str(g.size(), fd.size()));
  double worst = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double denom = std::max(std::abs(g(i)), floor);
    worst = std::max(worst, std::abs(g(i) - fd(i)) / denom);
  }
  return worst;
}

}  // namespace msp
