#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "sudfer/error.hpp"
#include "sudfer/monte_carlo.hpp"

namespace sudfer {

/// Relative PSD tolerance: eigenvalues in [-kPsdTolerance * (1 + trace), 0)
/// are treated as rounding noise and clamped to zero.
inline constexpr double kPsdTolerance = 1e-10;
/// Two means are "equal" when they agree within kMeanTolerance * (1 + max|mu|).
inline constexpr double kMeanTolerance = 1e-9;

class GaussianSpec;
GaussianSpec validate_spec(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

/// Law of a finite Gaussian vector, N(mean, covariance). Only obtainable
/// through validate_spec, so every instance is symmetric and PSD.
class GaussianSpec {
 public:
  std::size_t dimension() const { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }

  bool is_diagonal() const {
    const Eigen::Index n = mean_.size();
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j && covariance_(i, j) != 0.0) return false;
    return true;
  }

  friend bool operator==(const GaussianSpec& a, const GaussianSpec& b) {
    return a.mean_.size() == b.mean_.size() && a.mean_ == b.mean_ &&
           a.covariance_ == b.covariance_;
  }

 private:
  GaussianSpec(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
      : mean_(std::move(mean)), covariance_(std::move(covariance)) {}

  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;

  friend GaussianSpec validate_spec(Eigen::VectorXd, Eigen::MatrixXd);
};

inline double psd_tolerance(const Eigen::MatrixXd& covariance) {
  return kPsdTolerance * (1.0 + std::abs(covariance.trace()));
}

inline GaussianSpec validate_spec(Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
  const Eigen::Index n = mean.size();
  if (n < 1) throw Error(ErrorCode::DimensionMismatch, "a Gaussian vector needs n >= 1");
  if (covariance.rows() != n || covariance.cols() != n)
    throw Error(ErrorCode::DimensionMismatch,
                "mean has length " + std::to_string(n) + " but covariance is " +
                    std::to_string(covariance.rows()) + "x" + std::to_string(covariance.cols()));
  if (!mean.allFinite() || !covariance.allFinite())
    throw Error(ErrorCode::NonFinite, "mean and covariance entries must be finite");
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i)
      if (covariance(i, j) != covariance(j, i))
        throw Error(ErrorCode::NotSymmetric, "covariance(" + std::to_string(i) + "," +
                                                 std::to_string(j) + ") != covariance(" +
                                                 std::to_string(j) + "," + std::to_string(i) + ")");

  const double tol = psd_tolerance(covariance);
  bool diagonal = true;
  for (Eigen::Index j = 0; j < n && diagonal; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != j && covariance(i, j) != 0.0) {
        diagonal = false;
        break;
      }

  if (diagonal) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (covariance(i, i) < -tol)
        throw Error(ErrorCode::NotPSD, "negative variance at index " + std::to_string(i));
      if (covariance(i, i) < 0.0) covariance(i, i) = 0.0;
    }
    return GaussianSpec(std::move(mean), std::move(covariance));
  }

  if (Eigen::LLT<Eigen::MatrixXd> llt(covariance); llt.info() == Eigen::Success)
    return GaussianSpec(std::move(mean), std::move(covariance));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorCode::NotPSD, "eigendecomposition of the covariance did not converge");
  const double smallest = eig.eigenvalues().minCoeff();
  if (smallest < -tol)
    throw Error(ErrorCode::NotPSD,
                "smallest eigenvalue " + std::to_string(smallest) + " is below -" +
                    std::to_string(tol));
  if (smallest < 0.0) {
    const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd rebuilt =
        eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = j + 1; i < n; ++i) rebuilt(j, i) = rebuilt(i, j);
    covariance = std::move(rebuilt);
  }
  return GaussianSpec(std::move(mean), std::move(covariance));
}

inline GaussianSpec standard_normal_spec(std::size_t n) {
  const auto size = static_cast<Eigen::Index>(n);
  return validate_spec(Eigen::VectorXd::Zero(size), Eigen::MatrixXd::Identity(size, size));
}

/// The degenerate law concentrated at `mean`.
inline GaussianSpec point_mass_spec(Eigen::VectorXd mean) {
  const Eigen::Index n = mean.size();
  return validate_spec(std::move(mean), Eigen::MatrixXd::Zero(n, n));
}

/// gamma_ij = E(X_i - X_j)^2: symmetric, zero diagonal, nonnegative.
class IncrementMatrix {
 public:
  /// Checks symmetry, zero diagonal and nonnegativity of hand-built entries.
  static IncrementMatrix from_entries(Eigen::MatrixXd entries) {
    const Eigen::Index n = entries.rows();
    if (n < 1 || entries.cols() != n)
      throw Error(ErrorCode::DimensionMismatch, "increment matrix must be square with n >= 1");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (entries(j, j) != 0.0)
        throw Error(ErrorCode::InvalidIncrements, "increment diagonal must be zero");
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!(entries(i, j) >= 0.0))
          throw Error(ErrorCode::InvalidIncrements, "increments must be nonnegative");
        if (entries(i, j) != entries(j, i))
          throw Error(ErrorCode::InvalidIncrements, "increment matrix must be symmetric");
      }
    }
    return IncrementMatrix(std::move(entries));
  }

  std::size_t dimension() const { return static_cast<std::size_t>(entries_.rows()); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

 private:
  explicit IncrementMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {}
  Eigen::MatrixXd entries_;

  friend IncrementMatrix increment_matrix(const GaussianSpec&);
};

/// sigma_ii + sigma_jj - 2 sigma_ij + (mu_i - mu_j)^2, with rounding below
/// zero clamped away.
inline IncrementMatrix increment_matrix(const GaussianSpec& spec) {
  const auto& s = spec.covariance();
  const auto& mu = spec.mean();
  const Eigen::Index n = mu.size();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double gap = mu(i) - mu(j);
      const double v = std::max(0.0, s(i, i) + s(j, j) - 2.0 * s(i, j) + gap * gap);
      g(i, j) = v;
      g(j, i) = v;
    }
  return IncrementMatrix(std::move(g));
}

/// x = mean + A z with A A^T = covariance. Diagonal covariances scale
/// coordinatewise; others use Cholesky, falling back to a clamped
/// eigendecomposition for singular matrices.
class NormalFactor {
 public:
  explicit NormalFactor(const GaussianSpec& spec) : mean_(spec.mean()) {
    const auto& cov = spec.covariance();
    if (spec.is_diagonal()) {
      kind_ = Kind::Diagonal;
      scale_ = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
      return;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
      kind_ = Kind::Lower;
      dense_ = llt.matrixL();
      return;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < -psd_tolerance(cov))
      throw Error(ErrorCode::FactorizationFailure,
                  "covariance could not be factorized after clamping");
    kind_ = Kind::Dense;
    dense_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  std::size_t dimension() const { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }

  /// True for the point mass: every draw equals the mean.
  bool is_zero() const { return kind_ == Kind::Diagonal && (scale_.array() == 0.0).all(); }

  /// Maps a standard normal block (dimension x rows) to draws of the law.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& z) const {
    Eigen::MatrixXd x;
    switch (kind_) {
      case Kind::Diagonal: x.noalias() = scale_.asDiagonal() * z; break;
      case Kind::Lower: x.noalias() = dense_.triangularView<Eigen::Lower>() * z; break;
      case Kind::Dense: x.noalias() = dense_ * z; break;
    }
    x.colwise() += mean_;
    return x;
  }

 private:
  enum class Kind { Diagonal, Lower, Dense };
  Kind kind_ = Kind::Diagonal;
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
  Eigen::MatrixXd dense_;
};

/// FNV-1a over the dimension and the raw bytes of mean and covariance.
inline std::uint64_t fingerprint(const GaussianSpec& spec) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xFFU;
      h *= 0x100000001B3ULL;
    }
  };
  mix(spec.dimension());
  for (Eigen::Index i = 0; i < spec.mean().size(); ++i) mix(std::bit_cast<std::uint64_t>(spec.mean()(i)));
  const auto& c = spec.covariance();
  for (Eigen::Index k = 0; k < c.size(); ++k) mix(std::bit_cast<std::uint64_t>(c.data()[k]));
  return h;
}

struct SampleBatch {
  Eigen::MatrixXd draws;  // count x n, one draw per row
  std::uint64_t seed = 0;
  std::uint64_t spec_fingerprint = 0;
};

/// Draws `count` iid rows from the law. Uses the same shard streams as the
/// Monte Carlo estimators, so a statistic of these rows matches the
/// corresponding streamed estimate.
inline SampleBatch sample(const GaussianSpec& spec, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::InvalidParameter, "sample count must be >= 1");
  const NormalFactor factor(spec);
  const std::size_t n = spec.dimension();
  const ShardPlan plan(n, count);
  SampleBatch batch{Eigen::MatrixXd(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(n)),
                    seed, fingerprint(spec)};
  parallel::for_each_shard(plan.shards, [&](std::size_t shard) {
    const std::size_t rows = plan.rows(shard, count);
    const Eigen::MatrixXd x = factor.apply(shard_normals(n, rows, seed, shard));
    batch.draws.middleRows(static_cast<Eigen::Index>(plan.begin(shard)),
                           static_cast<Eigen::Index>(rows)) = x.transpose();
  });
  return batch;
}

/// Streams `samples` draws of the law through `statistic(column) -> double`
/// without materializing the batch.
template <class Statistic>
MCEstimate mc_over_law(const GaussianSpec& spec, std::size_t samples, std::uint64_t seed,
                       Statistic&& statistic) {
  const NormalFactor factor(spec);
  if (factor.is_zero()) {
    // Constant draws: skip generation; the streamed mean of a constant is
    // exactly that constant with zero spread.
    if (samples < 2)
      throw Error(ErrorCode::InvalidParameter, "Monte Carlo estimates need at least 2 samples");
    return MCEstimate{statistic(factor.mean()), 0.0, samples, seed};
  }
  return mc_estimate(spec.dimension(), samples, seed,
                     [&](const Eigen::MatrixXd& z, std::span<double> out) {
                       const Eigen::MatrixXd x = factor.apply(z);
                       for (Eigen::Index c = 0; c < x.cols(); ++c)
                         out[static_cast<std::size_t>(c)] = statistic(x.col(c));
                     });
}

inline bool means_equal(const GaussianSpec& x, const GaussianSpec& y) {
  if (x.dimension() != y.dimension()) return false;
  const double scale =
      1.0 + std::max(x.mean().cwiseAbs().maxCoeff(), y.mean().cwiseAbs().maxCoeff());
  return (x.mean() - y.mean()).cwiseAbs().maxCoeff() <= kMeanTolerance * scale;
}

/// Law of sqrt(1-t) (X - mu) + sqrt(t) (Y - mu) + mu for independent X, Y:
/// N(mu, (1-t) Cov X + t Cov Y). The endpoints return the inputs unchanged.
inline GaussianSpec blended_spec(const GaussianSpec& x, const GaussianSpec& y, double t) {
  if (x.dimension() != y.dimension())
    throw Error(ErrorCode::DimensionMismatch, "blended laws must have equal dimension");
  if (!(t >= 0.0 && t <= 1.0))
    throw Error(ErrorCode::DomainError, "path parameter t must lie in [0, 1]");
  if (!means_equal(x, y))
    throw Error(ErrorCode::MeanMismatch, "blending requires E X_i = E Y_i for every i");
  if (t == 0.0) return x;
  if (t == 1.0) return y;
  // a + t (b - a) reproduces a exactly when a == b.
  Eigen::VectorXd mean = x.mean() + t * (y.mean() - x.mean());
  Eigen::MatrixXd cov = x.covariance() + t * (y.covariance() - x.covariance());
  return validate_spec(std::move(mean), std::move(cov));
}

}  // namespace sudfer
