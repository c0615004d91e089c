#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include "sudfer/error.hpp"
#include "sudfer/gaussian.hpp"

namespace sudfer {

/// Comparison certificate for two Gaussian vectors of equal length.
struct BoundCertificate {
  std::size_t n = 0;
  double gamma = 0.0;
  double bound = 0.0;
  /// +infinity when gamma = 0 or n = 1: no finite beta is needed.
  double optimal_beta = std::numeric_limits<double>::infinity();
  bool dominates_xy = false;  // gamma^X <= gamma^Y entrywise
  bool dominates_yx = false;
  bool means_equal = false;

  /// The two-sided bound (and the one-sided conclusion) only hold when the
  /// means agree.
  bool theorem_applies() const { return means_equal; }
};

namespace detail {
inline void require_same_dimension(const IncrementMatrix& a, const IncrementMatrix& b) {
  if (a.dimension() != b.dimension())
    throw Error(ErrorCode::DimensionMismatch, "increment matrices differ in dimension");
}
}  // namespace detail

/// max_ij |gamma^X_ij - gamma^Y_ij|.
inline double gamma_discrepancy(const IncrementMatrix& gx, const IncrementMatrix& gy) {
  detail::require_same_dimension(gx, gy);
  return (gx.entries() - gy.entries()).cwiseAbs().maxCoeff();
}

/// sqrt(gamma ln n).
inline double sf_bound(double gamma, std::size_t n) {
  if (n < 1) throw Error(ErrorCode::DegenerateN, "n must be >= 1");
  if (gamma < 0.0) throw Error(ErrorCode::InvalidParameter, "gamma must be nonnegative");
  return std::sqrt(gamma * std::log(static_cast<double>(n)));
}

/// beta gamma / 4 + ln(n) / beta: the bound before beta is optimized.
inline double beta_tradeoff_bound(double beta, double gamma, std::size_t n) {
  if (!(beta > 0.0)) throw Error(ErrorCode::InvalidParameter, "beta must be positive");
  return beta * gamma / 4.0 + std::log(static_cast<double>(n)) / beta;
}

/// 2 sqrt(ln n / gamma), the minimizer of beta_tradeoff_bound.
inline double optimal_beta(double gamma, std::size_t n) {
  if (!(gamma > 0.0))
    throw Error(ErrorCode::DegenerateGamma, "optimal beta is undefined for gamma <= 0");
  if (n < 2) throw Error(ErrorCode::DegenerateN, "optimal beta needs n >= 2");
  return 2.0 * std::sqrt(std::log(static_cast<double>(n)) / gamma);
}

struct Domination {
  bool xy;  // gamma^X <= gamma^Y everywhere
  bool yx;
};

/// Exact entrywise comparison, no tolerance.
inline Domination check_domination(const IncrementMatrix& gx, const IncrementMatrix& gy) {
  detail::require_same_dimension(gx, gy);
  return {(gx.entries().array() <= gy.entries().array()).all(),
          (gy.entries().array() <= gx.entries().array()).all()};
}

inline BoundCertificate certify(const IncrementMatrix& gx, const IncrementMatrix& gy,
                                bool means_are_equal) {
  BoundCertificate c;
  c.n = gx.dimension();
  c.gamma = gamma_discrepancy(gx, gy);
  c.bound = sf_bound(c.gamma, c.n);
  if (c.gamma > 0.0 && c.n >= 2) c.optimal_beta = optimal_beta(c.gamma, c.n);
  const auto dom = check_domination(gx, gy);
  c.dominates_xy = dom.xy;
  c.dominates_yx = dom.yx;
  c.means_equal = means_are_equal;
  return c;
}

inline BoundCertificate certify(const GaussianSpec& x, const GaussianSpec& y) {
  if (x.dimension() != y.dimension())
    throw Error(ErrorCode::DimensionMismatch, "certify needs vectors of equal length");
  return certify(increment_matrix(x), increment_matrix(y), means_equal(x, y));
}

}  // namespace sudfer
