#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sudfer/bounds.hpp"
#include "sudfer/gaussian.hpp"
#include "sudfer/monte_carlo.hpp"
#include "sudfer/smoothmax.hpp"

namespace sudfer {

/// A point on the interpolation path and the law of Z_t there.
struct PathPoint {
  double t;
  GaussianSpec blended;
};

inline PathPoint path_point(const GaussianSpec& x, const GaussianSpec& y, double t) {
  return {t, blended_spec(x, y, t)};
}

/// Two estimates of the same phi'(t): the closed-form expectation and a
/// central difference of phi.
struct DerivativeEstimate {
  MCEstimate explicit_formula;
  MCEstimate finite_difference;
  double t;
  double beta;

  /// 3 combined standard errors plus the O(h^2) allowance 1e-4 * beta.
  double consistency_tolerance() const {
    return 3.0 * std::hypot(explicit_formula.std_error, finite_difference.std_error) +
           1e-4 * beta;
  }
  bool consistent() const {
    return std::abs(explicit_formula.value - finite_difference.value) <= consistency_tolerance();
  }
};

/// E F_beta(X) by Monte Carlo.
inline MCEstimate expected_smooth_max_mc(const GaussianSpec& spec, SmoothMaxParams params,
                                         std::size_t samples, std::uint64_t seed) {
  return mc_over_law(spec, samples, seed,
                     [params](const auto& x) { return smooth_max(x, params); });
}

/// phi(t) = E F_beta(Z_t).
inline MCEstimate phi(const GaussianSpec& x, const GaussianSpec& y, SmoothMaxParams params,
                      double t, std::size_t samples, std::uint64_t seed) {
  return expected_smooth_max_mc(blended_spec(x, y, t), params, samples, seed);
}

namespace detail {

inline void require_interior(double t) {
  if (!(t > 0.0 && t < 1.0))
    throw Error(ErrorCode::DomainError, "derivative is only evaluated for t in (0, 1)");
}

/// sigma_ii + sigma_jj - 2 sigma_ij.
inline Eigen::MatrixXd centered_increments(const Eigen::MatrixXd& s) {
  const Eigen::VectorXd d = s.diagonal();
  Eigen::MatrixXd g = -2.0 * s;
  g.colwise() += d;
  g.rowwise() += d.transpose();
  return g;
}

}  // namespace detail

/// phi'(t) = (beta/4) E[ sum_ij p_i(Z_t) p_j(Z_t) (gamma^Y_ij - gamma^X_ij) ].
/// Increment differences are taken from the centered covariances; with equal
/// means they coincide with the raw increment differences.
inline MCEstimate phi_derivative_explicit(const GaussianSpec& x, const GaussianSpec& y,
                                          SmoothMaxParams params, double t,
                                          std::size_t samples, std::uint64_t seed) {
  detail::require_interior(t);
  const GaussianSpec z = blended_spec(x, y, t);
  const Eigen::MatrixXd delta = detail::centered_increments(y.covariance()) -
                                detail::centered_increments(x.covariance());
  const double quarter_beta = params.beta() / 4.0;
  return mc_over_law(z, samples, seed, [&](const auto& draw) {
    const Eigen::VectorXd p = softmax(draw, params);
    return quarter_beta * p.dot(delta * p);
  });
}

/// Step used by phi_derivative_fd: min(t, 1 - t, 1e-3) / 2.
inline double fd_step(double t) { return std::min({t, 1.0 - t, 1e-3}) / 2.0; }

/// (phi(t+h) - phi(t-h)) / 2h with common random numbers at both ends; the
/// standard error comes from the paired per-sample differences.
inline MCEstimate phi_derivative_fd(const GaussianSpec& x, const GaussianSpec& y,
                                    SmoothMaxParams params, double t, std::size_t samples,
                                    std::uint64_t seed) {
  detail::require_interior(t);
  const double h = fd_step(t);
  const NormalFactor plus(blended_spec(x, y, t + h));
  const NormalFactor minus(blended_spec(x, y, t - h));
  const double inv_2h = 1.0 / (2.0 * h);
  return mc_estimate(x.dimension(), samples, seed,
                     [&](const Eigen::MatrixXd& zeta, std::span<double> out) {
                       const Eigen::MatrixXd up = plus.apply(zeta);
                       const Eigen::MatrixXd down = minus.apply(zeta);
                       for (Eigen::Index c = 0; c < zeta.cols(); ++c)
                         out[static_cast<std::size_t>(c)] =
                             (smooth_max(up.col(c), params) - smooth_max(down.col(c), params)) *
                             inv_2h;
                     });
}

/// F_beta as a test function for the integration-by-parts identity.
struct SmoothMaxFunctional {
  SmoothMaxParams params;
  double value(const Eigen::VectorXd& x) const { return smooth_max(x, params); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return softmax(x, params); }
};

/// x -> x_j. The identity holds for it exactly, which makes it a check on the
/// residual plumbing itself.
struct LinearFunctional {
  Eigen::Index j;
  double value(const Eigen::VectorXd& x) const { return x(j); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    return Eigen::VectorXd::Unit(x.size(), j);
  }
};

/// Residual of E(X_i F(X)) - sum_j E(X_i X_j) E(d_j F(X)) for centered X,
/// both terms evaluated on the same draws. `i` is zero-based.
template <class Functional>
MCEstimate stein_residual(const GaussianSpec& spec, const Functional& f, std::size_t i,
                          std::size_t samples, std::uint64_t seed) {
  if (i >= spec.dimension())
    throw Error(ErrorCode::IndexOutOfRange, "coordinate index " + std::to_string(i) +
                                                " out of range for n = " +
                                                std::to_string(spec.dimension()));
  if (spec.mean().cwiseAbs().maxCoeff() > kMeanTolerance)
    throw Error(ErrorCode::NotCentered, "integration by parts needs a centered vector");
  const auto row = static_cast<Eigen::Index>(i);
  const Eigen::VectorXd sigma_i = spec.covariance().row(row).transpose();
  return mc_over_law(spec, samples, seed, [&](const auto& draw) {
    const Eigen::VectorXd x = draw;
    return x(row) * f.value(x) - sigma_i.dot(f.gradient(x));
  });
}

inline MCEstimate stein_residual(const GaussianSpec& spec, SmoothMaxParams params,
                                 std::size_t i, std::size_t samples, std::uint64_t seed) {
  return stein_residual(spec, SmoothMaxFunctional{params}, i, samples, seed);
}

struct PathReport {
  std::vector<DerivativeEstimate> points;
  /// flags[k]: explicit estimate at points[k] is below -3 standard errors.
  std::vector<bool> flags;
  /// gamma^X <= gamma^Y entrywise, i.e. phi should be nondecreasing.
  bool dominated = false;

  std::size_t flag_count() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
  }
};

/// Evaluates both derivative estimates at each grid point. Grid point k uses
/// seed stream k; within it the explicit and finite-difference estimates draw
/// from independent substreams 0 and 1.
inline PathReport path_monotonicity_report(const GaussianSpec& x, const GaussianSpec& y,
                                           SmoothMaxParams params, std::span<const double> grid,
                                           std::size_t samples, std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::InvalidParameter, "derivative grid is empty");
  PathReport report;
  report.dominated = check_domination(increment_matrix(x), increment_matrix(y)).xy;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const std::uint64_t point_seed = derive_seed(seed, k);
    DerivativeEstimate d{
        phi_derivative_explicit(x, y, params, grid[k], samples, derive_seed(point_seed, 0)),
        phi_derivative_fd(x, y, params, grid[k], samples, derive_seed(point_seed, 1)), grid[k],
        params.beta()};
    report.flags.push_back(d.explicit_formula.value < -3.0 * d.explicit_formula.std_error);
    report.points.push_back(d);
  }
  return report;
}

}  // namespace sudfer
