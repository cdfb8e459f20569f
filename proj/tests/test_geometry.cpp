#include <gtest/gtest.h>

#include "rotenc/geometry.hpp"
#include "support.hpp"

using namespace rotenc;

TEST(SampleRotations, SingleRotationIsOrthogonal) {
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    const auto r = sample_rotations({1, seed, SamplingMode::haar_random});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_LE(orthogonality_error(r[0].matrix()), 1e-12);
  }
}

TEST(SampleRotations, HaarMeanIsNearZero) {
  for (SamplingMode mode : {SamplingMode::haar_random, SamplingMode::stratified}) {
    const auto rs = sample_rotations({4096, 3, mode});
    Matrix3<double> sum = Matrix3<double>::Zero();
    for (const auto& r : rs) {
      sum += r.matrix();
      EXPECT_LE(orthogonality_error(r.matrix()), 1e-12);
      EXPECT_NEAR(r.matrix().determinant(), 1.0, 1e-12);
    }
    EXPECT_LE((sum / 4096.0).cwiseAbs().maxCoeff(), 0.05);
  }
}

TEST(SampleRotations, Deterministic) {
  for (SamplingMode mode : {SamplingMode::haar_random, SamplingMode::stratified}) {
    const auto a = sample_rotations({32, 11, mode});
    const auto b = sample_rotations({32, 11, mode});
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(testing_support::bitwise_equal(a[i].matrix(), b[i].matrix()));
  }
  const auto c = sample_rotations({4, 12, SamplingMode::haar_random});
  const auto d = sample_rotations({4, 11, SamplingMode::haar_random});
  EXPECT_FALSE(testing_support::bitwise_equal(c[0].matrix(), d[0].matrix()));
}

TEST(SampleRotations, ZeroCountRejected) {
  try {
    sample_rotations({0, 0, SamplingMode::haar_random});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
}

TEST(SampleRotations, FirstRowIsUniformOnSphere) {
  // R e_x is uniform on S^2, so its z-component is uniform on [-1, 1].
  const auto rs = sample_rotations({8000, 5, SamplingMode::haar_random});
  int bins[4] = {0, 0, 0, 0};
  for (const auto& r : rs) {
    const double z = r.matrix()(2, 0);
    bins[std::min(3, static_cast<int>((z + 1.0) * 2.0))]++;
  }
  for (int b : bins) EXPECT_NEAR(b / 8000.0, 0.25, 0.025);
}

TEST(Quaternion, Examples) {
  EXPECT_TRUE(quaternion_to_matrix<double>({1, 0, 0, 0}).matrix().isApprox(Matrix3<double>::Identity(), 0.0));
  const Matrix3<double> expected = Vector3<double>(1, -1, -1).asDiagonal();
  EXPECT_LE((quaternion_to_matrix<double>({0, 1, 0, 0}).matrix() - expected).cwiseAbs().maxCoeff(), 1e-15);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    Vector4<double> q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    EXPECT_NEAR(quaternion_to_matrix<double>(q).matrix().determinant(), 1.0, 1e-12);
  }
}

TEST(Quaternion, NonUnitRejected) {
  try {
    quaternion_to_matrix<double>({1, 1, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidQuaternion);
  }
}

TEST(Rotation, RejectsImproperMatrix) {
  EXPECT_THROW(Rotationd::from_matrix(Vector3<double>(-1, 1, 1).asDiagonal().toDenseMatrix()), Error);
  EXPECT_THROW(Rotationd::from_matrix(2.0 * Matrix3<double>::Identity()), Error);
}

TEST(Rotate, Examples) {
  const Coords<double> x = testing_support::random_coords(7, 1);
  EXPECT_TRUE(testing_support::bitwise_equal(rotate(x, Rotationd::identity()), x));

  Coords<double> p(1, 3);
  p << 1, 0, 0;
  const auto r = Rotationd::about_axis({0, 0, 1}, std::numbers::pi / 2);
  const Coords<double> q = rotate(p, r);
  EXPECT_NEAR(q(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(q(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(q(0, 2), 0.0, 1e-12);
}

TEST(Rotate, PreservesPairwiseDistances) {
  const Coords<double> x = testing_support::random_coords(12, 2);
  for (const auto& r : sample_rotations({20, 8, SamplingMode::haar_random})) {
    EXPECT_LE((pairwise_distances(rotate(x, r)) - pairwise_distances(x)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(CenterCloud, Examples) {
  PointCloudd one{Coords<double>(1, 3), {6}};
  one.coords << 5, 5, 5;
  const auto c1 = center_cloud(one);
  EXPECT_EQ(c1.cloud.coords, Coords<double>::Zero(1, 3));
  EXPECT_EQ(c1.centroid, Vector3<double>(5, 5, 5));

  PointCloudd two{Coords<double>(2, 3), {1, 1}};
  two.coords << 0, 0, 0, 2, 0, 0;
  const auto c2 = center_cloud(two);
  Coords<double> expected(2, 3);
  expected << -1, 0, 0, 1, 0, 0;
  EXPECT_EQ(c2.cloud.coords, expected);

  const auto once = center_cloud(testing_support::random_cloud(9, 3)).cloud;
  const auto twice = center_cloud(once).cloud;
  EXPECT_LE((once.coords - twice.coords).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CenterCloud, EmptyRejected) {
  PointCloudd empty{Coords<double>(0, 3), {}};
  EXPECT_THROW(center_cloud(empty), Error);
}

TEST(Geometry, FloatInstantiation) {
  const auto rs = sample_rotations<float>({8, 1, SamplingMode::haar_random});
  for (const auto& r : rs) EXPECT_LE(orthogonality_error(r.matrix()), 1e-5f);
}

TEST(OrderIndependentSum, SameBitsForAnyOrder) {
  std::vector<double> terms{1e16, 1.0, -1e16, 3.5, 1e-3, 7.25};
  const double reference = order_independent_sum(terms);
  std::vector<double> shuffled = terms;
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    rng.shuffle(shuffled);
    EXPECT_EQ(order_independent_sum(shuffled), reference);
  }
}
