#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rotenc/autodiff.hpp"
#include "rotenc/config.hpp"
#include "rotenc/data.hpp"
#include "rotenc/model.hpp"

namespace rotenc {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay: theta <- theta (1 - lr wd), then the
/// bias-corrected Adam update. Parameters are visited in name order.
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  /// Throws StaleGradient when a parameter received no gradient since its last reset.
  void step(ad::ParameterStore& store);
  std::size_t steps() const { return steps_; }

 private:
  AdamWOptions options_;
  std::size_t steps_ = 0;
  std::map<std::string, std::pair<ad::Tensor, ad::Tensor>> moments_;
};

struct Metrics {
  std::vector<std::string> tasks;
  Eigen::VectorXd mae;
  Eigen::VectorXd rmse;
  Eigen::VectorXd r2;
};

/// Per-task MAE, RMSE and R^2 of row-aligned prediction and target matrices.
Metrics compute_metrics(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets,
                        const std::vector<std::string>& tasks);

struct EpochRecord {
  std::size_t epoch = 0;
  /// Means over the epoch's batches (training mode, normalized units).
  double train_loss = 0.0;
  double train_mse = 0.0;
  double train_l1 = 0.0;
  /// MSE of inference-mode predictions on the training split (normalized units).
  double train_eval_mse = 0.0;
  double val_mse = 0.0;
  Metrics val_metrics;  // original units
  bool best = false;
};

struct TrainOptions {
  /// Worker threads for evaluation passes; training itself is single-threaded.
  std::size_t threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Model model;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  /// Inference-mode training-split MSE before the first update.
  double initial_train_mse = 0.0;
  Fold fold;
};

/// Trains on the fold the config's split selects.
TrainResult train(const TrainConfig& config, const std::vector<MoleculeRecord>& dataset,
                  const TrainOptions& options = {});
TrainResult train(const TrainConfig& config, const std::vector<MoleculeRecord>& dataset, const Fold& fold,
                  const TrainOptions& options = {});

/// Metrics in original units; TaskMismatch when a record lacks a model task.
Metrics evaluate(const Model& model, const std::vector<MoleculeRecord>& records, std::size_t threads = 1);

struct CrossValidationResult {
  std::vector<Metrics> folds;
  Metrics mean;
};

CrossValidationResult cross_validate(const TrainConfig& config, const std::vector<MoleculeRecord>& dataset,
                                     const TrainOptions& options = {});

/// Model, vocabulary and edge width for a dataset, before any training.
Model build_model(const TrainConfig& config, const std::vector<MoleculeRecord>& dataset);

std::vector<MoleculeRecord> select(const std::vector<MoleculeRecord>& records, const std::vector<std::size_t>& indices);

}  // namespace rotenc
