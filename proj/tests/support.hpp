#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rotenc/alignment.hpp"
#include "rotenc/config.hpp"
#include "rotenc/data.hpp"
#include "rotenc/geometry.hpp"
#include "rotenc/model.hpp"
#include "rotenc/random.hpp"

namespace testing_support {

inline rotenc::Coords<double> random_coords(std::size_t n, std::uint64_t seed, double spread = 1.5) {
  rotenc::Rng rng(seed);
  rotenc::Coords<double> c(static_cast<Eigen::Index>(n), 3);
  const double sx = spread * 1.6, sy = spread * 1.0, sz = spread * 0.5;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    c(i, 0) = sx * rng.normal();
    c(i, 1) = sy * rng.normal();
    c(i, 2) = sz * rng.normal();
  }
  return c;
}

inline rotenc::PointCloudd random_cloud(std::size_t n, std::uint64_t seed) {
  rotenc::PointCloudd cloud{random_coords(n, seed), {}};
  const int elements[] = {1, 6, 7, 8};
  for (std::size_t i = 0; i < n; ++i) cloud.atomic_numbers.push_back(elements[(i + seed) % 4]);
  return cloud;
}

/// Random cloud whose canonical frame is well defined.
inline rotenc::PointCloudd nondegenerate_cloud(std::size_t n, std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    rotenc::PointCloudd cloud = random_cloud(n, rotenc::derive_seed(seed, {attempt}));
    const auto r = rotenc::canonical_align(cloud);
    if (r.degenerate) continue;
    const auto& e = r.eigenvalues;
    if ((e(0) - e(1)) < 0.05 * e(0) || (e(1) - e(2)) < 0.05 * e(0)) continue;
    if (r.reference.cwiseAbs().minCoeff() < 1e-3 * r.reference.cwiseAbs().maxCoeff()) continue;
    return cloud;
  }
}

inline rotenc::MoleculeRecord record_from(const rotenc::PointCloudd& cloud, const std::string& id, double target) {
  rotenc::MoleculeRecord r;
  r.id = id;
  r.atomic_numbers = cloud.atomic_numbers;
  r.coords = cloud.coords;
  r.targets["y"] = target;
  return r;
}

/// Small widths so tests stay fast.
inline rotenc::ModelConfig small_model_config() {
  rotenc::ModelConfig c;
  c.encoder.widths = {16, 16};
  c.encoder.embed_dim = 4;
  c.encoder.k = 4;
  c.gnn.layers = 2;
  c.gnn.hidden = 8;
  c.gnn.message_width = 8;
  c.gnn.output_width = 8;
  c.head_hidden = 16;
  c.graph.rbf.count = 8;
  return c;
}

inline rotenc::TrainConfig small_train_config() {
  rotenc::TrainConfig c;
  c.model = small_model_config();
  c.epochs = 3;
  c.batch_size = 8;
  c.split.mode = rotenc::SplitMode::holdout;
  c.split.train_fraction = 0.75;
  return c;
}

inline bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

inline rotenc::MoleculeRecord permute_atoms(const rotenc::MoleculeRecord& r, const std::vector<Eigen::Index>& perm) {
  // perm[new] = old
  rotenc::MoleculeRecord out = r;
  std::vector<Eigen::Index> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.atomic_numbers[i] = r.atomic_numbers[static_cast<std::size_t>(perm[i])];
    out.coords.row(static_cast<Eigen::Index>(i)) = r.coords.row(perm[i]);
    inverse[static_cast<std::size_t>(perm[i])] = static_cast<Eigen::Index>(i);
  }
  if (r.bonds) {
    for (auto& b : *out.bonds) {
      b.u = inverse[static_cast<std::size_t>(b.u)];
      b.v = inverse[static_cast<std::size_t>(b.v)];
    }
  }
  return out;
}

inline std::vector<Eigen::Index> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<Eigen::Index> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<Eigen::Index>(i);
  rotenc::Rng rng(seed);
  rng.shuffle(p);
  return p;
}

}  // namespace testing_support
