#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rotenc/geometry.hpp"
#include "rotenc/gnn.hpp"

namespace rotenc {

struct Bond {
  ad::Index u = 0;
  ad::Index v = 0;
  int order = 1;  // 1, 2, 3, or 4 (aromatic)

  bool operator==(const Bond&) const = default;
};

struct MoleculeRecord {
  std::string id;
  std::vector<int> atomic_numbers;
  Coords<double> coords;  // Å
  std::optional<std::vector<Bond>> bonds;
  std::map<std::string, double> targets;

  PointCloudd cloud() const { return PointCloudd{coords, atomic_numbers}; }
  bool operator==(const MoleculeRecord&) const = default;
};

void validate(const MoleculeRecord& record);

// Record files: one JSON object per line. See docs/record_format.md.
std::vector<MoleculeRecord> parse_dataset(std::istream& in, const std::string& source = "<stream>");
std::vector<MoleculeRecord> load_dataset(const std::filesystem::path& path);
std::string format_record(const MoleculeRecord& record);
void write_dataset(std::ostream& out, const std::vector<MoleculeRecord>& records);
void write_dataset(const std::filesystem::path& path, const std::vector<MoleculeRecord>& records);

/// Atomic number of an element symbol ("C", "Cl", ...); numeric strings pass through.
int element_number(const std::string& symbol);

struct XyzFrame {
  std::string comment;
  std::vector<int> atomic_numbers;
  Coords<double> coords;
};

/// Multi-frame XYZ: count line, comment line, then one "symbol x y z" line per atom.
std::vector<XyzFrame> parse_xyz(std::istream& in, const std::string& source = "<stream>");

/// Molecule id derived from an XYZ comment line: text before the first tab,
/// trimmed, whitespace runs replaced by '_'; "mol<index>" when empty.
std::string xyz_frame_id(const XyzFrame& frame, std::size_t index);

/// Delimiter-separated targets table: header row, first column is the id.
/// delimiter '\0' detects tab vs comma from the header.
std::map<std::string, std::map<std::string, double>> parse_targets_table(std::istream& in, char delimiter = '\0',
                                                                         const std::string& source = "<stream>");

std::vector<MoleculeRecord> convert_xyz(const std::filesystem::path& xyz, const std::filesystem::path& targets,
                                        char delimiter = '\0');

struct RbfParams {
  ad::Index count = 32;
  double min = 0.0;
  double max = 6.0;  // Å
  double gamma = 10.0;  // Å^-2

  std::vector<double> centers() const;
};

/// v_i = exp(-gamma (d - c_i)^2).
Eigen::RowVectorXd rbf_expand(double distance, const std::vector<double>& centers, double gamma);

enum class EdgeFeatureMode {
  automatic,  // bond one-hot when bonds are given, otherwise RBF of the distance
  bond,
  rbf,
  none,
};

struct GraphOptions {
  double cutoff = 5.0;  // Å, used when edges come from distances
  EdgeFeatureMode edge_features = EdgeFeatureMode::automatic;
  RbfParams rbf;
};

constexpr ad::Index bond_feature_width = 4;

/// Edges are the given bonds (both directions, one-hot order features) or,
/// without bonds, every pair closer than the cutoff (RBF distance features).
MolecularGraph build_graph(const MoleculeRecord& record, const GraphOptions& options);

/// Edge feature width the options produce for this dataset; every record must agree.
ad::Index edge_width_for(const std::vector<MoleculeRecord>& records, const GraphOptions& options);

/// Engineered distance descriptor: mean RBF expansion over all ordered atom
/// pairs closer than the cutoff (zero when there are none).
Eigen::RowVectorXd distance_descriptor(const Coords<double>& coords, double cutoff, const RbfParams& rbf);

double radius_of_gyration(const Coords<double>& coords);

/// Per-task z-score statistics from a training split.
struct Normalizer {
  std::vector<std::string> tasks;
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd stddev;

  Eigen::RowVectorXd apply(const Eigen::RowVectorXd& raw) const;
  Eigen::RowVectorXd invert(const Eigen::RowVectorXd& normalized) const;
};

/// Task names shared by every record (sorted); TaskMismatch when they differ.
std::vector<std::string> task_names(const std::vector<MoleculeRecord>& records);
Eigen::RowVectorXd target_vector(const MoleculeRecord& record, const std::vector<std::string>& tasks);

Normalizer normalize_targets(const std::vector<MoleculeRecord>& records, const std::vector<std::size_t>& train_indices,
                             const std::vector<std::string>& tasks);

enum class SplitMode { kfold, holdout };

struct SplitSpec {
  SplitMode mode = SplitMode::kfold;
  std::size_t k_folds = 5;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  /// Fold held out for validation when training a single kfold model.
  std::size_t fold = 0;

  void validate() const;
};

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle, then k disjoint test folds (kfold) or one train/test pair (holdout).
std::vector<Fold> split(std::size_t record_count, const SplitSpec& spec);

struct SyntheticOptions {
  std::size_t min_atoms = 4;
  std::size_t max_atoms = 12;
  std::vector<int> elements{1, 6, 7, 8};
  double min_scale = 0.6;
  double max_scale = 1.8;
};

/// Random anisotropic clouds labelled with their radius of gyration ("rg").
std::vector<MoleculeRecord> synthetic_dataset(std::size_t count, std::uint64_t seed,
                                              const SyntheticOptions& options = {});

}  // namespace rotenc
