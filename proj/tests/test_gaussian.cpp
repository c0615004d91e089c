#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "sudfer/experiment.hpp"
#include "sudfer/gaussian.hpp"

namespace sudfer {
namespace {

Eigen::MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (auto r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::IoError;
}

TEST(ValidateSpec, IdentityIsValid) {
  const auto spec = validate_spec(Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity());
  EXPECT_EQ(spec.dimension(), 2u);
  EXPECT_TRUE(spec.is_diagonal());
}

TEST(ValidateSpec, RejectsNegativeVariance) {
  EXPECT_EQ(code_of([] { validate_spec(Eigen::VectorXd::Zero(1), mat({{-1.0}})); }),
            ErrorCode::NotPSD);
}

TEST(ValidateSpec, RejectsIndefiniteMatrix) {
  // eigenvalues 3 and -1
  EXPECT_EQ(code_of([] { validate_spec(Eigen::Vector2d(0, 0), mat({{1, 2}, {2, 1}})); }),
            ErrorCode::NotPSD);
}

TEST(ValidateSpec, RejectsShapeErrors) {
  EXPECT_EQ(code_of([] { validate_spec(Eigen::Vector3d(0, 0, 0), Eigen::Matrix2d::Identity()); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { validate_spec(Eigen::VectorXd(0), Eigen::MatrixXd(0, 0)); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { validate_spec(Eigen::Vector2d(0, 0), Eigen::MatrixXd::Identity(2, 3)); }),
            ErrorCode::DimensionMismatch);
}

TEST(ValidateSpec, SymmetryIsExact) {
  auto m = mat({{1.0, 0.5}, {std::nextafter(0.5, 1.0), 1.0}});
  EXPECT_EQ(code_of([&] { validate_spec(Eigen::Vector2d(0, 0), m); }), ErrorCode::NotSymmetric);
}

TEST(ValidateSpec, RejectsNonFinite) {
  EXPECT_EQ(code_of([] { validate_spec(Eigen::Vector2d(NAN, 0), Eigen::Matrix2d::Identity()); }),
            ErrorCode::NonFinite);
}

TEST(ValidateSpec, ClampsTinyNegativeEigenvalues) {
  const Eigen::Matrix3d q = Eigen::Quaterniond(0.3, -0.5, 0.2, 0.7).normalized().toRotationMatrix();
  auto build = [&](double smallest) {
    Eigen::MatrixXd m = q * Eigen::Vector3d(2.0, 1.0, smallest).asDiagonal() * q.transpose();
    return Eigen::MatrixXd((m + m.transpose()) / 2.0);
  };
  // Tolerance is 1e-10 * (1 + 3).
  const auto spec = validate_spec(Eigen::Vector3d::Zero(), build(-1e-12));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(spec.covariance());
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-14);
  EXPECT_TRUE(spec.covariance().isApprox(spec.covariance().transpose(), 0.0));

  EXPECT_EQ(code_of([&] { validate_spec(Eigen::Vector3d::Zero(), build(-1e-6)); }),
            ErrorCode::NotPSD);
}

TEST(IncrementMatrix, HandValues) {
  EXPECT_DOUBLE_EQ(increment_matrix(standard_normal_spec(2))(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(increment_matrix(point_mass_spec(Eigen::Vector2d(0, 1)))(0, 1), 1.0);
}

TEST(IncrementMatrix, FromEntriesChecksInvariants) {
  EXPECT_EQ(code_of([] { IncrementMatrix::from_entries(mat({{0, 1}, {2, 0}})); }),
            ErrorCode::InvalidIncrements);
  EXPECT_EQ(code_of([] { IncrementMatrix::from_entries(mat({{1, 1}, {1, 0}})); }),
            ErrorCode::InvalidIncrements);
  EXPECT_EQ(code_of([] { IncrementMatrix::from_entries(mat({{0, -1}, {-1, 0}})); }),
            ErrorCode::InvalidIncrements);
}

TEST(IncrementMatrix, MatchesMonteCarloIncrements) {
  const GaussianSpec base = random_spec(4, 11, Generator::Wishart);
  const GaussianSpec spec =
      validate_spec(Eigen::Vector4d(0.3, -0.2, 1.0, 0.0), base.covariance());
  const auto gamma = increment_matrix(spec);
  const std::size_t count = 1000000;
  const auto batch = sample(spec, count, 99);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = i + 1; j < 4; ++j) {
      const Eigen::ArrayXd d2 = (batch.draws.col(i) - batch.draws.col(j)).array().square();
      const double m = d2.mean();
      const double se = std::sqrt((d2 - m).square().sum() / (count - 1) / count);
      EXPECT_NEAR(m, gamma(i, j), 3.0 * se) << i << "," << j;
    }
}

TEST(IncrementMatrix, InvariantsOnRandomSpecs) {
  int checked = 0;
  for (std::uint64_t s = 0; s < 120; ++s) {
    const auto gen = static_cast<Generator>(s % 3);
    const std::size_t n = 1 + s % 9;
    GaussianSpec base = random_spec(n, derive_seed(500, s), gen);
    Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n), -1.0, 2.0);
    const auto spec = validate_spec(mu, base.covariance());
    const Eigen::MatrixXd g = increment_matrix(spec).entries();
    ASSERT_TRUE(g.isApprox(g.transpose(), 0.0));
    EXPECT_TRUE((g.diagonal().array() == 0.0).all());
    EXPECT_TRUE((g.array() >= 0.0).all());
    const Eigen::MatrixXd d = g.cwiseSqrt();
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.rows(); ++j)
        for (Eigen::Index k = 0; k < d.rows(); ++k)
          EXPECT_LE(d(i, k), d(i, j) + d(j, k) + 1e-12 * (1.0 + d(i, k)));
    ++checked;
  }
  EXPECT_GE(checked, 100);
}

TEST(Sample, PointMassRowsEqualMean) {
  const auto batch = sample(point_mass_spec(Eigen::Vector2d(3, -1)), 1000, 5);
  for (Eigen::Index r = 0; r < batch.draws.rows(); ++r) {
    EXPECT_EQ(batch.draws(r, 0), 3.0);
    EXPECT_EQ(batch.draws(r, 1), -1.0);
  }
}

TEST(Sample, StandardNormalMoments) {
  const auto batch = sample(standard_normal_spec(3), 1000000, 17);
  for (Eigen::Index c = 0; c < 3; ++c) {
    const Eigen::ArrayXd col = batch.draws.col(c).array();
    const double m = col.mean();
    const double var = (col - m).square().sum() / static_cast<double>(col.size() - 1);
    EXPECT_NEAR(m, 0.0, 4e-3);
    EXPECT_NEAR(var, 1.0, 1e-2);
  }
}

TEST(Sample, CorrelationIsReproduced) {
  const auto spec = validate_spec(Eigen::Vector2d(0, 0), mat({{1, 0.9}, {0.9, 1}}));
  const auto batch = sample(spec, 1000000, 23);
  const Eigen::ArrayXd a = batch.draws.col(0).array() - batch.draws.col(0).mean();
  const Eigen::ArrayXd b = batch.draws.col(1).array() - batch.draws.col(1).mean();
  const double corr = (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
  EXPECT_NEAR(corr, 0.9, 1e-2);
}

TEST(Sample, SingularCovarianceFallsBack) {
  // rank one: X2 = 2 X1
  const auto spec = validate_spec(Eigen::Vector2d(1, 0), mat({{1, 2}, {2, 4}}));
  const auto batch = sample(spec, 1000, 3);
  for (Eigen::Index r = 0; r < batch.draws.rows(); ++r)
    EXPECT_NEAR(batch.draws(r, 1), 2.0 * (batch.draws(r, 0) - 1.0), 1e-9);
}

TEST(Sample, DeterministicAndIndependentOfWorkers) {
  const auto spec = random_spec(5, 8, Generator::Wishart);
  parallel::set_max_workers(1);
  const auto one = sample(spec, 50000, 42);
  parallel::set_max_workers(4);
  const auto four = sample(spec, 50000, 42);
  const auto again = sample(spec, 50000, 42);
  parallel::set_max_workers(0);
  EXPECT_EQ(one.draws, four.draws);
  EXPECT_EQ(four.draws, again.draws);
  EXPECT_EQ(one.spec_fingerprint, fingerprint(spec));
  EXPECT_EQ(one.seed, 42u);
  EXPECT_NE(sample(spec, 10, 43).draws, sample(spec, 10, 42).draws);
}

TEST(Sample, StreamedStatisticMatchesBatch) {
  const auto spec = random_spec(3, 4, Generator::Equicorrelated);
  const auto batch = sample(spec, 30000, 7);
  const auto est = mc_over_law(spec, 30000, 7, [](const auto& x) { return x.sum(); });
  EXPECT_NEAR(est.value, batch.draws.rowwise().sum().mean(), 1e-12);
}

TEST(Sample, RejectsZeroCount) {
  EXPECT_EQ(code_of([] { sample(standard_normal_spec(2), 0, 1); }), ErrorCode::InvalidParameter);
}

TEST(Fingerprint, DistinguishesSpecs) {
  EXPECT_EQ(fingerprint(standard_normal_spec(3)), fingerprint(standard_normal_spec(3)));
  EXPECT_NE(fingerprint(standard_normal_spec(3)),
            fingerprint(point_mass_spec(Eigen::Vector3d::Zero())));
}

TEST(BlendedSpec, EndpointsAreExact) {
  const auto x = random_spec(4, 1, Generator::Wishart);
  const auto y = random_spec(4, 2, Generator::Diagonal);
  EXPECT_EQ(blended_spec(x, y, 0.0), x);
  EXPECT_EQ(blended_spec(x, y, 1.0), y);
  for (double t : {0.0, 0.17, 0.5, 0.93, 1.0}) EXPECT_EQ(blended_spec(x, x, t), x);
}

TEST(BlendedSpec, ConvexCombinationIsExactForDyadicT) {
  const auto x = validate_spec(Eigen::Vector2d(1, 2), mat({{4, 2}, {2, 3}}));
  const auto y = validate_spec(Eigen::Vector2d(1, 2), mat({{8, -2}, {-2, 1}}));
  const auto z = blended_spec(x, y, 0.25);
  EXPECT_EQ(z.covariance(), mat({{5, 1}, {1, 2.5}}));
  EXPECT_EQ(z.mean(), Eigen::Vector2d(1, 2));
}

TEST(BlendedSpec, Errors) {
  const auto x = standard_normal_spec(2);
  const auto shifted = validate_spec(Eigen::Vector2d(0, 1e-3), Eigen::Matrix2d::Identity());
  EXPECT_EQ(code_of([&] { blended_spec(x, shifted, 0.5); }), ErrorCode::MeanMismatch);
  EXPECT_EQ(code_of([&] { blended_spec(x, standard_normal_spec(3), 0.5); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { blended_spec(x, x, 1.5); }), ErrorCode::DomainError);
  // within the relative tolerance
  const auto close = validate_spec(Eigen::Vector2d(0, 1e-12), Eigen::Matrix2d::Identity());
  EXPECT_NO_THROW(blended_spec(x, close, 0.5));
}

}  // namespace
}  // namespace sudfer
