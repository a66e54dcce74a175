#include "msp/numeric.hpp"

#include <cmath>

namespace msp {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kLogistic:
      return "logistic";
    case Activation::kIdentity:
      return "identity";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "logistic" || s == "sigmoid") return Activation::kLogistic;
  if (s == "identity" || s == "linear") return Activation::kIdentity;
  throw ParseError("unknown activation '" + s + "'");
}

std::string shape_string(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Vec affine(const Mat& w, const Vec& x, const Vec& b) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw DimensionError("affine: W is " + shape_string(w) + ", x is " + std::to_string(x.size()) +
                         "x1, b is " + std::to_string(b.size()) + "x1");
  }
  return w * x + b;
}

double logistic(double x) {
  // Split by sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec act(Activation kind, const Vec& x) {
  switch (kind) {
    case Activation::kTanh:
      return x.array().tanh().matrix();
    case Activation::kLogistic:
      return x.unaryExpr([](double v) { return logistic(v); });
    case Activation::kIdentity:
      return x;
  }
  return x;
}

}  // namespace msp
