#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fairmetric/core.hpp"
#include "fairmetric/numerics.hpp"
#include "test_util.hpp"

using namespace fairmetric;
using testutil::random_spd;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(Distance, EuclideanSpecialCase) {
  const auto m = MahalanobisMetric::identity(2);
  EXPECT_DOUBLE_EQ(distance(m, vec({0, 0}), vec({3, 4})), 5.0);
  EXPECT_DOUBLE_EQ(squared_distance(m, vec({0, 0}), vec({3, 4})), 25.0);
}

TEST(Distance, SelfDistanceIsZero) {
  std::mt19937_64 rng(3);
  const MahalanobisMetric m(random_spd(rng, 4));
  const Vector x = testutil::random_matrix(rng, 4, 1);
  EXPECT_EQ(distance(m, x, x), 0.0);
  EXPECT_EQ(squared_distance(m, x, x), 0.0);
}

TEST(Distance, DiagonalMetric) {
  const auto m = MahalanobisMetric::diagonal(vec({4, 1}));
  EXPECT_DOUBLE_EQ(distance(m, vec({0, 0}), vec({1, 1})), std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(squared_distance(m, vec({0, 0}), vec({1, 1})), 5.0);
}

TEST(Distance, DimensionMismatchIsConfigError) {
  const auto m = MahalanobisMetric::identity(2);
  EXPECT_THROW(distance(m, vec({0, 0, 0}), vec({1, 1, 1})), ConfigError);
}

TEST(Metric, RejectsAsymmetricAndIndefinite) {
  EXPECT_THROW(MahalanobisMetric(mat2(1, 0.5, 0.4, 1)), InvariantError);
  EXPECT_THROW(MahalanobisMetric(mat2(1, 0, 0, -1)), InvariantError);
  EXPECT_NO_THROW(MahalanobisMetric(mat2(1, 0, 0, -1e-10)));
}

TEST(Metric, PropertiesOnRandomPoints) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const MahalanobisMetric m(random_spd(rng, 5, 0.0));
    const Matrix p = testutil::random_matrix(rng, 3, 5);
    const Vector x = p.row(0).transpose(), y = p.row(1).transpose(), z = p.row(2).transpose();
    const double dxy = distance(m, x, y), dyz = distance(m, y, z), dxz = distance(m, x, z);
    EXPECT_NEAR(dxy * dxy, squared_distance(m, x, y), 1e-9 * std::max(1.0, dxy * dxy));
    EXPECT_DOUBLE_EQ(dxy, distance(m, y, x));
    EXPECT_GE(dxy, 0.0);
    EXPECT_LE(dxz, dxy + dyz + 1e-9);
    const double t = 3.7;
    EXPECT_NEAR(distance(m.scaled(t), x, y), std::sqrt(t) * dxy, 1e-9 * std::max(1.0, dxy));
  }
}

TEST(PsdProject, ClampsNegativeEigenvalues) {
  const Matrix p = numerics::psd_project(mat2(2, 0, 0, -3));
  EXPECT_NEAR((p - mat2(2, 0, 0, 0)).norm(), 0.0, 1e-12);
}

TEST(PsdProject, OffDiagonalExample) {
  const Matrix p = numerics::psd_project(mat2(0, 1, 1, 0));
  EXPECT_NEAR((p - mat2(0.5, 0.5, 0.5, 0.5)).norm(), 0.0, 1e-12);
}

TEST(PsdProject, IdentityOnConeAndIdempotent) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_spd(rng, 4, 0.1);
    EXPECT_LT((numerics::psd_project(a) - a).norm(), 1e-9);
    const Matrix s = numerics::symmetrize(testutil::random_matrix(rng, 4, 4));
    const Matrix once = numerics::psd_project(s);
    EXPECT_LT((numerics::psd_project(once) - once).norm(), 1e-9);
    EXPECT_GE(numerics::min_eigenvalue(once), -1e-12);
  }
}

TEST(PsdProject, AsymmetricInputIsInvariantError) {
  EXPECT_THROW(numerics::psd_project(mat2(1, 2, 0, 1)), InvariantError);
}

TEST(SafeInverse, Examples) {
  EXPECT_LT((numerics::safe_inverse(Matrix::Identity(3, 3)).inverse - Matrix::Identity(3, 3)).norm(), 1e-12);
  EXPECT_LT((numerics::safe_inverse(mat2(2, 0, 0, 4)).inverse - mat2(0.5, 0, 0, 0.25)).norm(), 1e-12);
  const auto r = numerics::safe_inverse(mat2(1, 0.5, 0.5, 1));
  EXPECT_LT((r.inverse - mat2(4.0 / 3, -2.0 / 3, -2.0 / 3, 4.0 / 3)).norm(), 1e-12);
  EXPECT_FALSE(r.floored);
}

TEST(SafeInverse, FloorsSingularInput) {
  const auto r = numerics::safe_inverse(mat2(1, 1, 1, 1));
  EXPECT_TRUE(r.floored);
  EXPECT_TRUE(r.inverse.allFinite());
}

TEST(SafeInverse, InverseTimesInputIsIdentity) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_spd(rng, 5);
    const auto r = numerics::safe_inverse(a);
    ASSERT_FALSE(r.floored);
    EXPECT_LT((r.inverse * a - Matrix::Identity(5, 5)).norm(), 1e-6);
  }
}

TEST(Logdet, Examples) {
  EXPECT_NEAR(numerics::logdet(Matrix::Identity(4, 4)), 0.0, 1e-12);
  EXPECT_NEAR(numerics::logdet(mat2(std::exp(1.0), 0, 0, std::exp(1.0))), 2.0, 1e-12);
  EXPECT_NEAR(numerics::logdet(mat2(2, 1, 1, 2)), std::log(3.0), 1e-12);
  EXPECT_THROW(numerics::logdet(mat2(1, 1, 1, 1)), NumericalError);
}

TEST(Logdet, MatchesBruteForceDeterminant) {
  std::mt19937_64 rng(21);
  for (int d : {2, 3}) {
    for (int trial = 0; trial < 25; ++trial) {
      const Matrix a = random_spd(rng, d);
      const double expected = std::log(oracle::det(testutil::to_rows(a)));
      EXPECT_NEAR(numerics::logdet(a), expected, 1e-8 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST(Covariance, Examples) {
  Matrix same(3, 2);
  same << 1, 2, 1, 2, 1, 2;
  EXPECT_EQ(numerics::covariance(same).norm(), 0.0);
  Matrix two(2, 2);
  two << 0, 0, 2, 0;
  EXPECT_LT((numerics::covariance(two) - mat2(2, 0, 0, 0)).norm(), 1e-15);
  EXPECT_THROW(numerics::covariance(Matrix::Zero(1, 3)), ConfigError);
}

TEST(Covariance, StandardizedUncorrelatedColumnsGiveIdentity) {
  // columns are orthogonal, zero-mean, unit sample variance
  Matrix x(4, 2);
  x << 1, 1, 1, -1, -1, 1, -1, -1;
  x *= std::sqrt(3.0 / 4.0);
  EXPECT_LT((numerics::covariance(x) - Matrix::Identity(2, 2)).norm(), 1e-12);
}

TEST(Covariance, SymmetricPsdOnRandomData) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix c = numerics::covariance(testutil::random_matrix(rng, 8, 5));
    EXPECT_TRUE(numerics::is_symmetric(c));
    EXPECT_GE(numerics::min_eigenvalue(c), -1e-12);
  }
}

TEST(Aggregate, MeanAndSampleStd) {
  const auto c = aggregate("m", "l", {1.0, std::nullopt, 3.0});
  EXPECT_EQ(c.n_repeats, 2u);
  EXPECT_DOUBLE_EQ(c.mean, 2.0);
  EXPECT_DOUBLE_EQ(c.dispersion, std::sqrt(2.0));
  EXPECT_FALSE(aggregate("m", "l", {std::nullopt}).available());
}

TEST(LabeledDataset, RejectsBadInputs) {
  Matrix x = Matrix::Zero(2, 2);
  EXPECT_THROW(LabeledDataset(x, {1, 6}, {1, 5}), ConfigError);
  EXPECT_THROW(LabeledDataset(x, {1}, {1, 5}), ConfigError);
  EXPECT_THROW(LabeledDataset(x, {1, 2}, {3, 3}), ConfigError);
  x(0, 0) = std::nan("");
  EXPECT_THROW(LabeledDataset(x, {1, 2}, {1, 5}), ConfigError);
}

TEST(Metric, FromEigenMatchesMatrixForm) {
  std::mt19937_64 rng(31);
  const Matrix a = random_spd(rng, 4);
  const auto e = numerics::eigen_symmetric(a);
  const auto m = MahalanobisMetric::from_eigen(e.values, e.vectors);
  EXPECT_LT((m.matrix() - a).norm(), 1e-10);
  EXPECT_LT((m.factor() * m.factor().transpose() - a).norm(), 1e-10);
  const Vector x = testutil::random_matrix(rng, 4, 1), y = testutil::random_matrix(rng, 4, 1);
  EXPECT_NEAR(squared_distance(m, x, y), (x - y).dot(a * (x - y)), 1e-10);
  Vector bad = e.values;
  bad[0] = -1.0;
  EXPECT_THROW(MahalanobisMetric::from_eigen(bad, e.vectors), InvariantError);
}
