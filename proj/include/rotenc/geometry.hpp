#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "rotenc/error.hpp"
#include "rotenc/numeric.hpp"
#include "rotenc/random.hpp"

namespace rotenc {

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
/// |V| x 3 coordinate block, one atom per row.
template <typename Scalar>
using Coords = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

template <typename Scalar>
constexpr Scalar rotation_tolerance() {
  if constexpr (sizeof(Scalar) >= sizeof(double)) {
    return Scalar(1e-12);
  } else {
    return Scalar(1e-5);
  }
}

template <typename Scalar>
Scalar orthogonality_error(const Matrix3<Scalar>& m) {
  return (m * m.transpose() - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff();
}

/// Proper orthogonal 3x3 matrix. Every instance has passed the
/// orthogonality and det = +1 checks at construction.
template <typename Scalar>
class Rotation {
 public:
  using Matrix = Matrix3<Scalar>;

  Rotation() : m_(Matrix::Identity()) {}

  static Rotation identity() { return Rotation(); }

  static Rotation from_matrix(const Matrix& m, Scalar tol = rotation_tolerance<Scalar>()) {
    if (!m.allFinite()) throw Error(ErrorCode::InvalidInput, "rotation matrix has non-finite entries");
    const Scalar ortho = orthogonality_error(m);
    const Scalar det = m.determinant();
    if (ortho > tol || std::abs(det - Scalar(1)) > tol) {
      throw Error(ErrorCode::InvalidInput, "matrix is not a proper rotation (orthogonality error " +
                                               std::to_string(static_cast<double>(ortho)) + ", det " +
                                               std::to_string(static_cast<double>(det)) + ")");
    }
    return Rotation(m);
  }

  /// Rotation by `angle` radians about a unit `axis`.
  static Rotation about_axis(const Vector3<Scalar>& axis, Scalar angle) {
    return from_matrix(Eigen::AngleAxis<Scalar>(angle, axis.normalized()).toRotationMatrix());
  }

  const Matrix& matrix() const { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }

 private:
  explicit Rotation(const Matrix& m) : m_(m) {}
  Matrix m_;
};

using Rotationd = Rotation<double>;

template <typename Scalar>
struct PointCloud {
  Coords<Scalar> coords;
  std::vector<int> atomic_numbers;

  Eigen::Index size() const { return coords.rows(); }
};

using PointCloudd = PointCloud<double>;

template <typename Scalar>
void validate(const PointCloud<Scalar>& cloud) {
  if (cloud.size() < 1) throw Error(ErrorCode::EmptyMolecule, "point cloud has no atoms");
  if (static_cast<Eigen::Index>(cloud.atomic_numbers.size()) != cloud.size()) {
    throw Error(ErrorCode::InvalidInput, "atomic number count " + std::to_string(cloud.atomic_numbers.size()) +
                                             " does not match coordinate rows " + std::to_string(cloud.size()));
  }
  if (!cloud.coords.allFinite()) throw Error(ErrorCode::InvalidInput, "point cloud has non-finite coordinates");
  for (int z : cloud.atomic_numbers) {
    if (z <= 0) throw Error(ErrorCode::InvalidInput, "atomic numbers must be positive, got " + std::to_string(z));
  }
}

enum class SamplingMode { haar_random, stratified };

struct SamplingConfig {
  std::size_t k = 16;
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::haar_random;
};

/// Standard quaternion-to-matrix map for q = (w, x, y, z).
template <typename Scalar>
Rotation<Scalar> quaternion_to_matrix(const Vector4<Scalar>& q) {
  const Scalar norm = q.norm();
  const Scalar tol = sizeof(Scalar) >= sizeof(double) ? Scalar(1e-9) : Scalar(1e-5);
  if (!std::isfinite(static_cast<double>(norm)) || std::abs(norm - Scalar(1)) > tol) {
    throw Error(ErrorCode::InvalidQuaternion,
                "quaternion norm " + std::to_string(static_cast<double>(norm)) + " is not 1");
  }
  const Vector4<Scalar> u = q / norm;
  const Eigen::Quaternion<Scalar> quat(u(0), u(1), u(2), u(3));
  return Rotation<Scalar>::from_matrix(quat.toRotationMatrix());
}

/// Maps three variates in [0,1) to a Haar-distributed rotation through the
/// uniform unit-quaternion construction.
template <typename Scalar>
Rotation<Scalar> rotation_from_uniforms(Scalar u1, Scalar u2, Scalar u3) {
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  const Scalar a = std::sqrt(Scalar(1) - u1);
  const Scalar b = std::sqrt(u1);
  const Vector4<Scalar> q(a * std::sin(two_pi * u2), a * std::cos(two_pi * u2), b * std::sin(two_pi * u3),
                          b * std::cos(two_pi * u3));
  return quaternion_to_matrix<Scalar>(q);
}

namespace detail {

inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return r;
}

}  // namespace detail

/// k rotations as a pure function of (seed, k, mode). Stratified mode feeds a
/// seeded, randomly shifted Halton sequence (bases 2, 3, 5) through the same
/// quaternion construction.
template <typename Scalar = double>
std::vector<Rotation<Scalar>> sample_rotations(const SamplingConfig& config) {
  if (config.k == 0) throw Error(ErrorCode::InvalidConfig, "rotation count k must be at least 1");
  std::vector<Rotation<Scalar>> out;
  out.reserve(config.k);
  Rng rng(config.seed);
  if (config.mode == SamplingMode::haar_random) {
    for (std::size_t i = 0; i < config.k; ++i) {
      const double u1 = rng.uniform();
      const double u2 = rng.uniform();
      const double u3 = rng.uniform();
      out.push_back(rotation_from_uniforms<Scalar>(Scalar(u1), Scalar(u2), Scalar(u3)));
    }
  } else {
    const double shift[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    const std::uint64_t bases[3] = {2, 3, 5};
    for (std::size_t i = 0; i < config.k; ++i) {
      double u[3];
      for (int d = 0; d < 3; ++d) {
        u[d] = detail::radical_inverse(i + 1, bases[d]) + shift[d];
        if (u[d] >= 1.0) u[d] -= 1.0;
      }
      out.push_back(rotation_from_uniforms<Scalar>(Scalar(u[0]), Scalar(u[1]), Scalar(u[2])));
    }
  }
  return out;
}

/// Row-vector convention: coords' = coords * R^T.
template <typename Derived, typename Scalar>
Coords<Scalar> rotate(const Eigen::MatrixBase<Derived>& coords, const Rotation<Scalar>& rotation) {
  return coords * rotation.matrix().transpose();
}

template <typename Scalar>
PointCloud<Scalar> apply_rotation(const PointCloud<Scalar>& cloud, const Rotation<Scalar>& rotation) {
  return PointCloud<Scalar>{rotate(cloud.coords, rotation), cloud.atomic_numbers};
}

template <typename Scalar>
Vector3<Scalar> centroid(const Coords<Scalar>& coords) {
  if (coords.rows() == 0) throw Error(ErrorCode::EmptyMolecule, "centroid of an empty point set");
  return column_means(coords).transpose();
}

template <typename Scalar>
struct CenteredCloud {
  PointCloud<Scalar> cloud;
  Vector3<Scalar> centroid;
};

template <typename Scalar>
CenteredCloud<Scalar> center_cloud(const PointCloud<Scalar>& cloud) {
  const Vector3<Scalar> c = centroid(cloud.coords);
  Coords<Scalar> shifted = cloud.coords.rowwise() - c.transpose();
  return {PointCloud<Scalar>{std::move(shifted), cloud.atomic_numbers}, c};
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> pairwise_distances(const Coords<Scalar>& coords) {
  const Eigen::Index n = coords.rows();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = Scalar(0);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = (coords.row(i) - coords.row(j)).norm();
    }
  }
  return d;
}

/// Reflection through the yz-plane (x -> -x); maps a chiral cloud to its enantiomer.
template <typename Scalar>
PointCloud<Scalar> mirror(const PointCloud<Scalar>& cloud) {
  PointCloud<Scalar> out = cloud;
  out.coords.col(0) = -out.coords.col(0);
  return out;
}

}  // namespace rotenc
