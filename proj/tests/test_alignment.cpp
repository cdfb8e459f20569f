#include <gtest/gtest.h>

#include "rotenc/alignment.hpp"
#include "support.hpp"

using namespace rotenc;

namespace {

PointCloudd make_cloud(std::initializer_list<std::array<double, 3>> points) {
  PointCloudd c{Coords<double>(static_cast<Eigen::Index>(points.size()), 3), {}};
  Eigen::Index i = 0;
  for (const auto& p : points) {
    c.coords.row(i++) << p[0], p[1], p[2];
    c.atomic_numbers.push_back(6);
  }
  return c;
}

}  // namespace

TEST(PcaFrame, AxisAlignedLine) {
  const auto frame = pca_frame(make_cloud({{1, 0, 0}, {-1, 0, 0}, {2, 0, 0}, {-2, 0, 0}}));
  EXPECT_NEAR(frame.eigenvalues(0), 2.5, 1e-12);
  EXPECT_NEAR(frame.eigenvalues(1), 0.0, 1e-12);
  EXPECT_NEAR(frame.eigenvalues(2), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(frame.axes(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(frame.axes.determinant(), 1.0, 1e-9);
}

TEST(PcaFrame, KnownCovariance) {
  // Six points +-a e1, +-b e2, +-c e3 have covariance diag(a^2, b^2, c^2) / 3.
  const double a = std::sqrt(12.0), b = std::sqrt(3.0), c = std::sqrt(0.75);
  PointCloudd cloud = make_cloud({{a, 0, 0}, {-a, 0, 0}, {0, b, 0}, {0, -b, 0}, {0, 0, c}, {0, 0, -c}});
  const auto r = sample_rotations({1, 17, SamplingMode::haar_random})[0];
  cloud = apply_rotation(cloud, r);
  // Oracle: explicit outer-product covariance and a direct eigen-solve.
  Matrix3<double> cov = Matrix3<double>::Zero();
  for (Eigen::Index i = 0; i < cloud.size(); ++i) cov += cloud.coords.row(i).transpose() * cloud.coords.row(i);
  cov /= 6.0;
  Eigen::SelfAdjointEigenSolver<Matrix3<double>> oracle(cov);
  const auto frame = pca_frame(cloud);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(frame.eigenvalues(i), oracle.eigenvalues()(2 - i), 1e-10);
  EXPECT_NEAR(frame.eigenvalues(0), 4.0, 1e-10);
  EXPECT_NEAR(frame.eigenvalues(1), 1.0, 1e-10);
  EXPECT_NEAR(frame.eigenvalues(2), 0.25, 1e-10);
  EXPECT_NEAR(frame.axes.determinant(), 1.0, 1e-9);
}

TEST(PcaFrame, RequiresCenteredInput) {
  try {
    pca_frame(make_cloud({{1, 1, 1}, {2, 1, 1}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotCentered);
  }
}

TEST(PcaFrame, RightHandedOnRandomClouds) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto frame = pca_frame(center_cloud(testing_support::random_cloud(8, s)).cloud);
    EXPECT_NEAR(frame.axes.determinant(), 1.0, 1e-9);
    EXPECT_LE(orthogonality_error(frame.axes), 1e-9);
  }
}

TEST(CanonicalAlign, RotationInvariant) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const PointCloudd cloud = testing_support::nondegenerate_cloud(10, s);
    const auto base = canonical_align(cloud);
    for (const auto& r : sample_rotations({100, s + 1000, SamplingMode::haar_random})) {
      Coords<double> moved = rotate(cloud.coords, r);
      moved.rowwise() += Eigen::RowVector3d(3.0, -2.0, 0.5);
      const auto other = canonical_align(PointCloudd{moved, cloud.atomic_numbers});
      ASSERT_LE((other.aligned.coords - base.aligned.coords).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(CanonicalAlign, Idempotent) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto once = canonical_align(testing_support::nondegenerate_cloud(7, s));
    const auto twice = canonical_align(once.aligned);
    EXPECT_LE((twice.aligned.coords - once.aligned.coords).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(CanonicalAlign, TransformIsProperAndReproducesOutput) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const PointCloudd cloud = testing_support::random_cloud(6, s);
    const auto r = canonical_align(cloud);
    EXPECT_NEAR(r.transform().determinant(), 1.0, 1e-9);
    const Coords<double> expected = center_cloud(cloud).cloud.coords * r.transform().transpose();
    EXPECT_LE((expected - r.aligned.coords).cwiseAbs().maxCoeff(), 1e-12);
    int flips = 0;
    for (bool f : r.flips) flips += f ? 1 : 0;
    EXPECT_EQ(flips % 2, 0);
  }
}

TEST(CanonicalAlign, ChiralPairStaysDistinct) {
  const PointCloudd cloud = make_cloud({{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {0, 0, 3}});
  const auto a = canonical_align(cloud);
  const auto b = canonical_align(mirror(cloud));
  EXPECT_GT((a.aligned.coords - b.aligned.coords).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(CanonicalAlign, SphereIsDegenerate) {
  const PointCloudd sphere = make_cloud({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}});
  EXPECT_TRUE(canonical_align(sphere).degenerate);
  const auto residual = invariance_residual(sphere, 10, 1);
  EXPECT_EQ(residual.degenerate_trials, 10u);
}

TEST(CanonicalAlign, TooFewPoints) {
  try {
    canonical_align(make_cloud({{1, 2, 3}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewPoints);
  }
}

TEST(CanonicalAlign, PermutationGivesSameRowsPermuted) {
  const PointCloudd cloud = testing_support::nondegenerate_cloud(9, 4);
  const auto perm = testing_support::random_permutation(9, 2);
  PointCloudd permuted = cloud;
  for (Eigen::Index i = 0; i < 9; ++i) permuted.coords.row(i) = cloud.coords.row(perm[static_cast<std::size_t>(i)]);
  const auto a = canonical_align(cloud);
  const auto b = canonical_align(permuted);
  for (Eigen::Index i = 0; i < 9; ++i) {
    EXPECT_EQ(b.aligned.coords.row(i), a.aligned.coords.row(perm[static_cast<std::size_t>(i)]));
  }
}

TEST(InvarianceResidual, SmallOnNondegenerateCloud) {
  const auto r = invariance_residual(testing_support::nondegenerate_cloud(8, 3), 100, 9);
  EXPECT_LE(r.max_abs_deviation, 1e-6);
  EXPECT_EQ(r.trials, 100u);
}

TEST(InvarianceResidual, ZeroTrialsRejected) {
  EXPECT_THROW(invariance_residual(testing_support::nondegenerate_cloud(8, 3), 0, 9), Error);
}
