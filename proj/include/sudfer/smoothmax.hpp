#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "sudfer/error.hpp"

namespace sudfer {

/// Inverse temperature of the smooth max. Always finite and positive; the
/// beta -> infinity limit is the plain max and is never requested here.
class SmoothMaxParams {
 public:
  explicit SmoothMaxParams(double beta) : beta_(beta) {
    if (!(beta > 0.0) || !std::isfinite(beta))
      throw Error(ErrorCode::InvalidParameter,
                  "beta must be positive and finite, got " + std::to_string(beta));
  }
  double beta() const { return beta_; }

 private:
  double beta_;
};

namespace detail {

template <class Derived>
void require_nonempty(const Eigen::MatrixBase<Derived>& x) {
  if (x.size() == 0) throw Error(ErrorCode::EmptyInput, "smooth max of an empty vector");
}

}  // namespace detail

/// F_beta(x) = beta^-1 log sum_i exp(beta x_i), evaluated as
/// max x + beta^-1 log sum_i exp(beta (x_i - max x)).
template <class Derived>
double smooth_max(const Eigen::MatrixBase<Derived>& x, SmoothMaxParams params) {
  detail::require_nonempty(x);
  const double beta = params.beta();
  const double top = x.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) sum += std::exp(beta * (x(i) - top));
  return top + std::log(sum) / beta;
}

/// p_i = exp(beta x_i) / sum_j exp(beta x_j), max-subtracted.
template <class Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& x, SmoothMaxParams params) {
  detail::require_nonempty(x);
  const double beta = params.beta();
  const double top = x.maxCoeff();
  Eigen::VectorXd p(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) p(i) = std::exp(beta * (x(i) - top));
  p /= p.sum();
  return p;
}

/// Gradient of F_beta; identical to softmax.
template <class Derived>
Eigen::VectorXd smooth_max_gradient(const Eigen::MatrixBase<Derived>& x, SmoothMaxParams params) {
  return softmax(x, params);
}

/// beta (diag(p) - p p^T). Symmetric PSD with zero row sums.
template <class Derived>
Eigen::MatrixXd smooth_max_hessian(const Eigen::MatrixBase<Derived>& x, SmoothMaxParams params) {
  const Eigen::VectorXd p = softmax(x, params);
  Eigen::MatrixXd h = p * p.transpose();
  h *= -params.beta();
  h.diagonal() += params.beta() * p;
  return h;
}

struct SandwichSlack {
  double lower;  // F_beta(x) - max x
  double upper;  // log(n)/beta - (F_beta(x) - max x)
};

/// Slacks in max x <= F_beta(x) <= max x + log(n)/beta; both are >= 0 up to
/// rounding.
template <class Derived>
SandwichSlack sandwich_gap(const Eigen::MatrixBase<Derived>& x, SmoothMaxParams params) {
  const double excess = smooth_max(x, params) - x.maxCoeff();
  return {excess, std::log(static_cast<double>(x.size())) / params.beta() - excess};
}

}  // namespace sudfer
