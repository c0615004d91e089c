#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "sudfer/gaussian.hpp"
#include "sudfer/monte_carlo.hpp"

namespace sudfer {

/// Monte Carlo estimate of E max_i X_i.
inline MCEstimate expected_max_mc(const GaussianSpec& spec, std::size_t samples,
                                  std::uint64_t seed) {
  return mc_over_law(spec, samples, seed,
                     [](const auto& x) { return x.maxCoeff(); });
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double standard_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Closed form for n = 2:
///   E max(X1, X2) = mu1 Phi(d/s) + mu2 Phi(-d/s) + s phi(d/s),
/// d = mu1 - mu2, s^2 = Var(X1 - X2). When s = 0 the maximum is deterministic.
inline double expected_max_bivariate_exact(const GaussianSpec& spec) {
  if (spec.dimension() != 2)
    throw Error(ErrorCode::WrongDimension, "bivariate closed form requires n = 2");
  const auto& mu = spec.mean();
  const auto& s = spec.covariance();
  const double delta = mu(0) - mu(1);
  const double theta = std::sqrt(std::max(0.0, s(0, 0) + s(1, 1) - 2.0 * s(0, 1)));
  if (theta == 0.0) return delta >= 0.0 ? mu(0) : mu(1);
  const double u = delta / theta;
  return mu(0) * standard_normal_cdf(u) + mu(1) * standard_normal_cdf(-u) +
         theta * standard_normal_pdf(u);
}

struct GapEstimate {
  MCEstimate x;        // E max X
  MCEstimate y;        // E max Y
  MCEstimate gap;      // x - y
  MCEstimate abs_gap;  // |x - y|, same standard error
};

/// Independent estimates of E max X and E max Y (streams 0 and 1 of `seed`)
/// and their difference.
inline GapEstimate empirical_gap(const GaussianSpec& x, const GaussianSpec& y,
                                 std::size_t samples, std::uint64_t seed) {
  GapEstimate out;
  out.x = expected_max_mc(x, samples, derive_seed(seed, 0));
  out.y = expected_max_mc(y, samples, derive_seed(seed, 1));
  const double se = std::hypot(out.x.std_error, out.y.std_error);
  out.gap = MCEstimate{out.x.value - out.y.value, se, samples, seed};
  out.abs_gap = MCEstimate{std::abs(out.gap.value), se, samples, seed};
  return out;
}

}  // namespace sudfer
