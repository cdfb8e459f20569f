#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "rotenc/error.hpp"
#include "rotenc/geometry.hpp"
#include "rotenc/numeric.hpp"

namespace rotenc {

template <typename Scalar>
struct AlignmentOptions {
  /// Relative threshold below which a reference-vector entry counts as zero.
  Scalar zero_tol = Scalar(1e-8);
  /// Two eigenvalues closer than this (relative to the largest) make the frame non-unique.
  Scalar degenerate_tol = Scalar(1e-6);
};

template <typename Scalar>
struct PrincipalFrame {
  Matrix3<Scalar> axes;         // rows are unit principal axes, det = +1
  Vector3<Scalar> eigenvalues;  // descending
};

template <typename Scalar>
struct AlignmentResult {
  PointCloud<Scalar> aligned;
  Matrix3<Scalar> frame;        // principal axes as rows, after the handedness fix
  Vector3<Scalar> eigenvalues;  // descending, Å^2
  Vector3<Scalar> centroid;
  /// Per-axis third moments of the projected cloud; decides the axis signs.
  Vector3<Scalar> reference;
  std::vector<int> zero_axes;
  std::vector<int> nonzero_axes;
  int negative_count = 0;
  std::array<bool, 3> flips{false, false, false};
  bool degenerate = false;

  /// Proper rotation taking centered input coordinates to `aligned` (x~ = x T^T).
  Matrix3<Scalar> transform() const {
    Matrix3<Scalar> t = frame;
    for (int a = 0; a < 3; ++a) {
      if (flips[static_cast<std::size_t>(a)]) t.row(a) = -t.row(a);
    }
    return t;
  }
};

/// Population covariance of a centered cloud; each entry is an order-independent sum.
template <typename Scalar>
Matrix3<Scalar> covariance(const Coords<Scalar>& centered) {
  const Eigen::Index n = centered.rows();
  Matrix3<Scalar> cov;
  std::vector<Scalar> terms(static_cast<std::size_t>(n));
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      for (Eigen::Index i = 0; i < n; ++i) terms[static_cast<std::size_t>(i)] = centered(i, a) * centered(i, b);
      cov(a, b) = cov(b, a) = order_independent_sum(terms) / static_cast<Scalar>(n);
    }
  }
  return cov;
}

/// Principal axes of a centered cloud, ordered by descending variance, with
/// the third axis negated when needed so the frame is right-handed.
template <typename Scalar>
PrincipalFrame<Scalar> pca_frame(const PointCloud<Scalar>& cloud) {
  if (cloud.size() < 1) throw Error(ErrorCode::TooFewPoints, "PCA needs at least one point");
  const Vector3<Scalar> c = centroid(cloud.coords);
  if (c.norm() > Scalar(1e-9)) {
    throw Error(ErrorCode::NotCentered, "centroid norm " + std::to_string(static_cast<double>(c.norm())) +
                                            " exceeds 1e-9; center the cloud first");
  }
  Eigen::SelfAdjointEigenSolver<Matrix3<Scalar>> solver(covariance(cloud.coords));
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::InvalidInput, "eigen-decomposition failed");

  PrincipalFrame<Scalar> out;
  // The solver returns ascending eigenvalues.
  for (int a = 0; a < 3; ++a) {
    out.eigenvalues(a) = std::max(Scalar(0), solver.eigenvalues()(2 - a));
    out.axes.row(a) = solver.eigenvectors().col(2 - a).normalized().transpose();
  }
  if (out.axes.determinant() < Scalar(0)) out.axes.row(2) = -out.axes.row(2);
  return out;
}

template <typename Scalar>
bool is_degenerate_spectrum(const Vector3<Scalar>& eigenvalues, Scalar rel_tol) {
  const Scalar scale = std::max(eigenvalues.cwiseAbs().maxCoeff(), std::numeric_limits<Scalar>::min());
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      if (std::abs(eigenvalues(a) - eigenvalues(b)) <= rel_tol * scale) return true;
    }
  }
  return false;
}

/// Canonical pose of a point cloud: center, project onto the principal
/// frame, then fix the remaining axis-sign freedom so that every rotated
/// copy of the same cloud lands on the same coordinates.
///
/// The sign step reads a reference vector in the principal frame (the
/// per-axis third moments). Its zero entries form {O}, the rest {Z}, and c
/// counts the negative entries over {Z}. The negative axes are negated, and
/// when c is odd the parity is absorbed by negating axis o1 (the first zero
/// axis) if |{Z}| < 3, otherwise axis 3. The number of negated axes is then
/// always even, so the overall transform stays a proper rotation and
/// mirror images keep distinct canonical forms.
///
/// The result is flagged degenerate when two eigenvalues coincide or when
/// fewer than two reference entries are non-zero; no unique pose exists then.
template <typename Scalar>
AlignmentResult<Scalar> canonical_align(const PointCloud<Scalar>& cloud,
                                        const AlignmentOptions<Scalar>& options = {}) {
  if (cloud.size() < 2) throw Error(ErrorCode::TooFewPoints, "alignment needs at least two points");
  validate(cloud);

  AlignmentResult<Scalar> result;
  const CenteredCloud<Scalar> centered = center_cloud(cloud);
  result.centroid = centered.centroid;

  const PrincipalFrame<Scalar> frame = pca_frame(centered.cloud);
  result.frame = frame.axes;
  result.eigenvalues = frame.eigenvalues;

  Coords<Scalar> projected = centered.cloud.coords * frame.axes.transpose();

  const Eigen::Index n = projected.rows();
  std::vector<Scalar> cubes(static_cast<std::size_t>(n));
  std::vector<Scalar> abs_cubes(static_cast<std::size_t>(n));
  Scalar scale(0);
  for (int a = 0; a < 3; ++a) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar x = projected(i, a);
      cubes[static_cast<std::size_t>(i)] = x * x * x;
      abs_cubes[static_cast<std::size_t>(i)] = std::abs(x * x * x);
    }
    result.reference(a) = order_independent_sum(cubes) / static_cast<Scalar>(n);
    scale = std::max(scale, order_independent_sum(abs_cubes) / static_cast<Scalar>(n));
  }
  const Scalar zero_tol = options.zero_tol * scale;

  for (int a = 0; a < 3; ++a) {
    if (std::abs(result.reference(a)) > zero_tol) {
      result.nonzero_axes.push_back(a);
    } else {
      result.zero_axes.push_back(a);
    }
  }
  for (int a : result.nonzero_axes) {
    if (result.reference(a) < Scalar(0)) {
      result.flips[static_cast<std::size_t>(a)] = true;
      ++result.negative_count;
    }
  }
  if (result.negative_count % 2 == 1) {
    const int absorber = result.nonzero_axes.size() < 3 ? result.zero_axes.front() : 2;
    result.flips[static_cast<std::size_t>(absorber)] = !result.flips[static_cast<std::size_t>(absorber)];
  }
  for (int a = 0; a < 3; ++a) {
    if (result.flips[static_cast<std::size_t>(a)]) projected.col(a) = -projected.col(a);
  }

  result.degenerate = is_degenerate_spectrum(frame.eigenvalues, options.degenerate_tol) ||
                      result.nonzero_axes.size() < 2;
  result.aligned = PointCloud<Scalar>{std::move(projected), cloud.atomic_numbers};
  return result;
}

template <typename Scalar>
struct InvarianceResidual {
  Scalar max_abs_deviation = Scalar(0);
  std::size_t trials = 0;
  std::size_t degenerate_trials = 0;
};

/// Largest coordinate discrepancy between the canonical form of the cloud and
/// the canonical forms of `trials` randomly rotated copies.
template <typename Scalar>
InvarianceResidual<Scalar> invariance_residual(const PointCloud<Scalar>& cloud, std::size_t trials,
                                               std::uint64_t seed,
                                               const AlignmentOptions<Scalar>& options = {}) {
  if (trials < 1) throw Error(ErrorCode::InvalidInput, "invariance_residual needs at least one trial");
  const AlignmentResult<Scalar> base = canonical_align(cloud, options);
  InvarianceResidual<Scalar> out;
  out.trials = trials;
  for (const Rotation<Scalar>& r : sample_rotations<Scalar>({trials, seed, SamplingMode::haar_random})) {
    const AlignmentResult<Scalar> rotated = canonical_align(apply_rotation(cloud, r), options);
    if (rotated.degenerate) ++out.degenerate_trials;
    out.max_abs_deviation = std::max(out.max_abs_deviation,
                                     (rotated.aligned.coords - base.aligned.coords).cwiseAbs().maxCoeff());
  }
  return out;
}

}  // namespace rotenc
