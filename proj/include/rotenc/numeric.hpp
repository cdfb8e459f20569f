#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace rotenc {

/// Sum of terms that yields the same bits for every ordering of the input:
/// terms are sorted before accumulation. Reductions over atoms go through
/// here so that atom relabeling leaves results exactly unchanged.
template <typename Scalar>
Scalar order_independent_sum(std::vector<Scalar> terms) {
  std::sort(terms.begin(), terms.end());
  Scalar total(0);
  for (const Scalar& t : terms) total += t;
  return total;
}

template <typename Scalar>
Scalar order_independent_sum(std::span<const Scalar> terms) {
  return order_independent_sum(std::vector<Scalar>(terms.begin(), terms.end()));
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> column_sums(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> out(m.cols());
  std::vector<Scalar> column(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) column[static_cast<std::size_t>(i)] = m(i, j);
    out(j) = order_independent_sum(column);
  }
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> column_means(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() == 0) return Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(m.cols());
  return column_sums(m) / static_cast<Scalar>(m.rows());
}

}  // namespace rotenc
