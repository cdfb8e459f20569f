#include "rotenc/trainer.hpp"

#include <cmath>
#include <numeric>
#include <set>

namespace rotenc {

namespace {

std::vector<std::string> resolve_tasks(const TrainConfig& config, const std::vector<MoleculeRecord>& dataset) {
  if (config.tasks.empty()) return task_names(dataset);
  std::vector<std::string> tasks = config.tasks;
  std::set<std::string> seen;
  for (const std::string& t : tasks) {
    if (!seen.insert(t).second) throw Error(ErrorCode::InvalidConfig, "task " + t + " listed twice");
  }
  for (const MoleculeRecord& r : dataset) {
    for (const std::string& t : tasks) {
      if (r.targets.count(t) == 0) throw Error(ErrorCode::TaskMismatch, "record " + r.id + " lacks task " + t);
    }
  }
  return tasks;
}

Eigen::MatrixXd target_matrix(const std::vector<MoleculeRecord>& records, const std::vector<std::string>& tasks) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t i = 0; i < records.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = target_vector(records[i], tasks);
  return y;
}

double mean_squared(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace

void AdamW::step(ad::ParameterStore& store) {
  for (const auto& [name, p] : store) {
    if (!p.has_grad()) throw Error(ErrorCode::StaleGradient, "parameter " + name + " has no gradient for this step");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (const auto& [name, p] : store) {
    ad::Tensor& theta = p.data_mut();
    const ad::Tensor& g = p.grad();
    auto [it, inserted] = moments_.try_emplace(name);
    auto& [m, v] = it->second;
    if (inserted) {
      m = ad::Tensor::Zero(theta.rows(), theta.cols());
      v = ad::Tensor::Zero(theta.rows(), theta.cols());
    }
    theta *= 1.0 - options_.lr * options_.weight_decay;
    m = options_.beta1 * m + (1.0 - options_.beta1) * g;
    v = options_.beta2 * v + (1.0 - options_.beta2) * g.cwiseAbs2();
    const ad::Tensor m_hat = m / correction1;
    const ad::Tensor v_hat = v / correction2;
    theta.array() -= options_.lr * m_hat.array() / (v_hat.array().sqrt() + options_.eps);
  }
}

Metrics compute_metrics(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets,
                        const std::vector<std::string>& tasks) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols() ||
      predictions.cols() != static_cast<Eigen::Index>(tasks.size())) {
    throw Error(ErrorCode::ShapeError, "metrics: prediction and target shapes differ");
  }
  if (predictions.rows() == 0) throw Error(ErrorCode::NoData, "metrics of an empty set");
  Metrics m;
  m.tasks = tasks;
  const auto t = predictions.cols();
  const double n = static_cast<double>(predictions.rows());
  m.mae.resize(t);
  m.rmse.resize(t);
  m.r2.resize(t);
  for (Eigen::Index c = 0; c < t; ++c) {
    const Eigen::VectorXd err = predictions.col(c) - targets.col(c);
    m.mae(c) = err.cwiseAbs().sum() / n;
    const double ss_res = err.squaredNorm();
    m.rmse(c) = std::sqrt(ss_res / n);
    const double mean = targets.col(c).mean();
    const double ss_tot = (targets.col(c).array() - mean).square().sum();
    m.r2(c) = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  }
  return m;
}

std::vector<MoleculeRecord> select(const std::vector<MoleculeRecord>& records, const std::vector<std::size_t>& indices) {
  std::vector<MoleculeRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(records.at(i));
  return out;
}

Model build_model(const TrainConfig& config, const std::vector<MoleculeRecord>& dataset) {
  config.validate();
  if (dataset.empty()) throw Error(ErrorCode::NoData, "dataset is empty");
  std::vector<int> elements;
  for (const MoleculeRecord& r : dataset) elements.insert(elements.end(), r.atomic_numbers.begin(), r.atomic_numbers.end());
  return Model(config.model, Vocabulary(std::move(elements)), resolve_tasks(config, dataset),
               edge_width_for(dataset, config.model.graph), derive_seed(config.seed, {0x1417}), config.inference_seed);
}

TrainResult train(const TrainConfig& config, const std::vector<MoleculeRecord>& dataset, const TrainOptions& options) {
  config.validate();
  const std::vector<Fold> folds = split(dataset.size(), config.split);
  const std::size_t chosen = config.split.mode == SplitMode::kfold ? config.split.fold : 0;
  return train(config, dataset, folds.at(chosen), options);
}

TrainResult train(const TrainConfig& config, const std::vector<MoleculeRecord>& dataset, const Fold& fold,
                  const TrainOptions& options) {
  if (fold.train.empty() || fold.test.empty()) throw Error(ErrorCode::InvalidSplit, "training and validation sets must be non-empty");
  Model model = build_model(config, dataset);
  const std::vector<std::string>& tasks = model.tasks();
  model.normalizer = normalize_targets(dataset, fold.train, tasks);

  const std::vector<MoleculeRecord> train_records = select(dataset, fold.train);
  const std::vector<MoleculeRecord> val_records = select(dataset, fold.test);
  const Eigen::MatrixXd train_targets = target_matrix(train_records, tasks);
  const Eigen::MatrixXd val_targets = target_matrix(val_records, tasks);
  Eigen::MatrixXd train_norm(train_targets.rows(), train_targets.cols());
  for (Eigen::Index i = 0; i < train_targets.rows(); ++i) train_norm.row(i) = model.normalizer.apply(train_targets.row(i));
  Eigen::MatrixXd val_norm(val_targets.rows(), val_targets.cols());
  for (Eigen::Index i = 0; i < val_targets.rows(); ++i) val_norm.row(i) = model.normalizer.apply(val_targets.row(i));

  std::vector<Sample> samples;
  samples.reserve(train_records.size());
  for (const MoleculeRecord& r : train_records) samples.push_back(model.prepare(r, model.training_alignment()));

  TrainResult result{model, {}, 0, 0.0, fold};
  result.initial_train_mse = mean_squared(model.predict_normalized(train_records, std::nullopt, options.threads), train_norm);

  AdamW optimizer({config.lr, config.beta1, config.beta2, config.eps, config.weight_decay});
  NamedTensors best_state = model.state().snapshot();
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(samples.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, {0x5e9, epoch}));
    shuffle_rng.shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const Sample*> batch;
      std::vector<std::vector<Rotationd>> views;
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(&samples[order[i]]);
        if (model.config().use_3d) {
          views.push_back(model.training_views(derive_seed(config.seed, {0x71e5, epoch, fold.train[order[i]]})));
        }
      }
      const ForwardOutput out = model.forward(batch, views, true);
      ad::Tensor target(out.loss_prediction.rows(), out.loss_prediction.cols());
      for (std::size_t r = 0; r < out.loss_row_molecule.size(); ++r) {
        const std::size_t local = static_cast<std::size_t>(out.loss_row_molecule[r]);
        target.row(static_cast<Eigen::Index>(r)) = train_norm.row(static_cast<Eigen::Index>(order[begin + local]));
      }
      const LossParts loss = total_loss(out.loss_prediction, ad::Value::constant(std::move(target)), out.loss_fused,
                                        model.config().lambda);
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::Diverged, "loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                                             std::to_string(batches + 1));
      }
      model.state().parameters.zero_grad();
      ad::backward(loss.total);
      optimizer.step(model.state().parameters);
      rec.train_loss += value;
      rec.train_mse += loss.mse.item();
      rec.train_l1 += loss.l1.item();
      ++batches;
    }
    model.state().parameters.zero_grad();
    rec.train_loss /= static_cast<double>(batches);
    rec.train_mse /= static_cast<double>(batches);
    rec.train_l1 /= static_cast<double>(batches);

    rec.train_eval_mse = mean_squared(model.predict_normalized(train_records, std::nullopt, options.threads), train_norm);
    const Eigen::MatrixXd val_pred = model.predict_normalized(val_records, std::nullopt, options.threads);
    rec.val_mse = mean_squared(val_pred, val_norm);
    Eigen::MatrixXd val_denorm(val_pred.rows(), val_pred.cols());
    for (Eigen::Index i = 0; i < val_pred.rows(); ++i) val_denorm.row(i) = model.normalizer.invert(val_pred.row(i));
    rec.val_metrics = compute_metrics(val_denorm, val_targets, tasks);
    if (!std::isfinite(rec.val_mse)) {
      throw Error(ErrorCode::Diverged, "validation predictions became non-finite at epoch " + std::to_string(epoch));
    }
    if (rec.val_mse < best_val) {
      best_val = rec.val_mse;
      best_state = model.state().snapshot();
      result.best_epoch = epoch;
      rec.best = true;
    }
    if (options.on_epoch) options.on_epoch(rec);
    result.history.push_back(std::move(rec));
  }
  model.state().restore(best_state);
  result.model = std::move(model);
  return result;
}

Metrics evaluate(const Model& model, const std::vector<MoleculeRecord>& records, std::size_t threads) {
  if (records.empty()) throw Error(ErrorCode::NoData, "no records to evaluate");
  const Eigen::MatrixXd targets = target_matrix(records, model.tasks());
  return compute_metrics(model.predict(records, std::nullopt, threads), targets, model.tasks());
}

CrossValidationResult cross_validate(const TrainConfig& config, const std::vector<MoleculeRecord>& dataset,
                                     const TrainOptions& options) {
  if (config.split.mode != SplitMode::kfold) throw Error(ErrorCode::InvalidSplit, "cross-validation needs a kfold split");
  const std::vector<Fold> folds = split(dataset.size(), config.split);
  CrossValidationResult out;
  for (const Fold& fold : folds) {
    const TrainResult r = train(config, dataset, fold, options);
    out.folds.push_back(evaluate(r.model, select(dataset, fold.test), options.threads));
  }
  out.mean = out.folds.front();
  for (std::size_t f = 1; f < out.folds.size(); ++f) {
    out.mean.mae += out.folds[f].mae;
    out.mean.rmse += out.folds[f].rmse;
    out.mean.r2 += out.folds[f].r2;
  }
  const double k = static_cast<double>(out.folds.size());
  out.mean.mae /= k;
  out.mean.rmse /= k;
  out.mean.r2 /= k;
  return out;
}

}  // namespace rotenc
