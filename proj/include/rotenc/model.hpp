#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rotenc/autodiff.hpp"
#include "rotenc/data.hpp"
#include "rotenc/encoder.hpp"
#include "rotenc/gnn.hpp"
#include "rotenc/state.hpp"

namespace rotenc {

enum class Objective {
  loss_of_mean,  // loss of the view-averaged prediction (default)
  mean_of_loss,  // mean over views of the per-view loss
};

struct ModelConfig {
  EncoderConfig encoder;
  GnnConfig gnn;
  GraphOptions graph;
  /// Rotation-sampling 3D encoder path; off gives u = g.
  bool use_3d = true;
  /// Appends the RBF distance descriptor (width graph.rbf.count) to u.
  bool engineered_features = false;
  ad::Index head_hidden = 256;
  ad::Activation head_activation = ad::Activation::relu;
  /// Weight of the l1 penalty on u.
  double lambda = 1e-4;
  Objective objective = Objective::loss_of_mean;

  ad::Index descriptor_width() const { return engineered_features ? graph.rbf.count : 0; }
  ad::Index fused_width() const {
    return gnn.output_width + (use_3d ? encoder.fingerprint_width() : 0) + descriptor_width();
  }
  void validate() const;
};

enum class Ablation { none, no_3d, no_pointnet, no_features };

Ablation parse_ablation(const std::string& name);
std::string to_string(Ablation ablation);
/// no_3d drops the encoder path, no_pointnet pools raw view inputs, no_features
/// removes the engineered descriptor and edge features.
ModelConfig apply_ablation(ModelConfig config, Ablation ablation);

/// u = [g || p]; g first.
ad::Value fuse(const std::vector<ad::Value>& parts);

/// Two-layer perceptron: hidden width from the weights, activation, linear output.
ad::Value head_forward(const ad::Value& fused, const ModelState& state, ad::Activation activation);

struct LossParts {
  ad::Value total;
  ad::Value mse;
  ad::Value l1;  // mean over rows of ||u||_1
};

/// MSE(prediction, target) + lambda * mean_rows ||u||_1.
LossParts total_loss(const ad::Value& prediction, const ad::Value& target, const ad::Value& fused, double lambda);

/// A record turned into model inputs.
struct Sample {
  std::string id;
  MolecularGraph graph;
  Coords<double> coords;  // centered; canonically aligned when the mode asks for it
  std::vector<ad::Index> atoms;
  Eigen::RowVectorXd descriptor;
};

/// Optional hooks into one forward pass, used for input gradients.
struct ForwardTaps {
  /// When non-empty, used as the encoder coordinate inputs (one per molecule).
  std::vector<ad::Value> coords;
  ad::Value gnn_initial_states;
  std::vector<ad::Value> encoder_embeddings;
};

struct ForwardOutput {
  ad::Value prediction;  // M x T
  ad::Value fused;       // M x d_u (view-averaged fingerprint)
  /// Rows the training loss is computed on: equal to prediction/fused for
  /// loss_of_mean, one row per (molecule, view) for mean_of_loss.
  ad::Value loss_prediction;
  ad::Value loss_fused;
  std::vector<ad::Index> loss_row_molecule;
};

class Model {
 public:
  Model(ModelConfig config, Vocabulary vocabulary, std::vector<std::string> tasks, ad::Index edge_width,
        std::uint64_t init_seed, std::uint64_t inference_seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocabulary_; }
  const std::vector<std::string>& tasks() const { return tasks_; }
  ad::Index edge_width() const { return edge_width_; }
  std::uint64_t inference_seed() const { return inference_seed_; }
  /// Changes the number of views; parameters do not depend on it.
  void set_view_count(std::size_t k);
  ModelState& state() { return state_; }
  const ModelState& state() const { return state_; }

  /// Target statistics; predictions are de-normalized with it.
  Normalizer normalizer;

  /// Alignment used on training inputs: only pre aligns during training.
  AlignMode training_alignment() const;
  AlignMode inference_alignment() const { return config_.encoder.align_mode; }

  Sample prepare(const MoleculeRecord& record, AlignMode alignment) const;
  /// Same k views for every molecule, fixed by the inference seed.
  std::vector<Rotationd> inference_views() const;
  std::vector<Rotationd> training_views(std::uint64_t seed) const;

  ForwardOutput forward(const std::vector<const Sample*>& batch, const std::vector<std::vector<Rotationd>>& views,
                        bool training, ForwardTaps* taps = nullptr) const;

  /// Outputs in normalized target units (M x T). Rows do not depend on the
  /// batch composition, so threads > 1 gives identical results.
  Eigen::MatrixXd predict_normalized(const std::vector<MoleculeRecord>& records,
                                     std::optional<AlignMode> alignment = std::nullopt, std::size_t threads = 1) const;
  /// Outputs in the original target units.
  Eigen::MatrixXd predict(const std::vector<MoleculeRecord>& records, std::optional<AlignMode> alignment = std::nullopt,
                          std::size_t threads = 1) const;

 private:
  ModelConfig config_;
  Vocabulary vocabulary_;
  std::vector<std::string> tasks_;
  ad::Index edge_width_;
  std::uint64_t inference_seed_;
  ModelState state_;
};

struct InvarianceReport {
  double mean_dev = 0.0;
  double max_dev = 0.0;
  std::size_t n_molecules = 0;
  std::size_t n_rotations = 0;
  AlignMode align_mode = AlignMode::none;
  std::vector<double> per_molecule;
};

/// Per molecule: max over rotations and tasks of |y(X R^T) - y(X)| in
/// normalized units; the report holds the mean and max over molecules.
InvarianceReport measure_invariance(const Model& model, const std::vector<MoleculeRecord>& molecules,
                                    std::size_t n_rotations, std::uint64_t seed,
                                    std::optional<AlignMode> alignment = std::nullopt, std::size_t threads = 1);
InvarianceReport measure_invariance(const Model& model, const std::vector<MoleculeRecord>& molecules,
                                    const std::vector<Rotationd>& rotations,
                                    std::optional<AlignMode> alignment = std::nullopt, std::size_t threads = 1);

struct AtomImportance {
  /// Norm of the per-atom input gradient (coordinates, encoder embedding,
  /// graph node embedding), scaled so the maximum is 1.
  Eigen::VectorXd scores;
  /// Unscaled norm of the coordinate part alone.
  Eigen::VectorXd coordinate_gradient;
  /// d y_task / d coords, |V| x 3.
  Eigen::MatrixXd coordinate_jacobian;
};

AtomImportance atom_importance(const Model& model, const MoleculeRecord& molecule, std::size_t task_index);

}  // namespace rotenc
