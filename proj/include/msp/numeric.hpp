#pragma once

#include <Eigen/Dense>

#include <string>

#include "msp/errors.hpp"

namespace msp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { kTanh, kLogistic, kIdentity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

std::string shape_string(const Mat& m);

/// Returns W x + b; throws DimensionError naming both shapes on mismatch.
Vec affine(const Mat& w, const Vec& x, const Vec& b);

/// Elementwise activation.
Vec act(Activation kind, const Vec& x);

double logistic(double x);

}  // namespace msp
