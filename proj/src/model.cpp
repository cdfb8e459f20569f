#include "rotenc/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace rotenc {

namespace {

constexpr std::size_t kPredictChunk = 64;

template <typename Fn>
void parallel_chunks(std::size_t chunks, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, chunks));
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t c = t; c < chunks; c += threads) fn(c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

MoleculeRecord rotated_record(const MoleculeRecord& record, const Rotationd& rotation) {
  MoleculeRecord out = record;
  out.coords = rotate(record.coords, rotation);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (use_3d) encoder.validate();
  gnn.validate();
  if (head_hidden < 1) throw Error(ErrorCode::InvalidConfig, "head_hidden must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidConfig, "lambda must be finite and >= 0");
  if (!(graph.cutoff > 0.0)) throw Error(ErrorCode::InvalidConfig, "graph cutoff must be positive");
  if (graph.rbf.count < 1 || !(graph.rbf.gamma > 0.0) || !(graph.rbf.max > graph.rbf.min)) {
    throw Error(ErrorCode::InvalidConfig, "invalid RBF parameters");
  }
}

Ablation parse_ablation(const std::string& name) {
  if (name == "none") return Ablation::none;
  if (name == "no-3d") return Ablation::no_3d;
  if (name == "no-pointnet") return Ablation::no_pointnet;
  if (name == "no-features") return Ablation::no_features;
  throw Error(ErrorCode::InvalidConfig, "unknown ablation '" + name + "' (none, no-3d, no-pointnet, no-features)");
}

std::string to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::none: return "none";
    case Ablation::no_3d: return "no-3d";
    case Ablation::no_pointnet: return "no-pointnet";
    case Ablation::no_features: return "no-features";
  }
  return "none";
}

ModelConfig apply_ablation(ModelConfig config, Ablation ablation) {
  switch (ablation) {
    case Ablation::none: break;
    case Ablation::no_3d: config.use_3d = false; break;
    case Ablation::no_pointnet: config.encoder.use_pointwise = false; break;
    case Ablation::no_features:
      config.engineered_features = false;
      config.graph.edge_features = EdgeFeatureMode::none;
      break;
  }
  return config;
}

ad::Value fuse(const std::vector<ad::Value>& parts) { return ad::concat_cols(parts); }

ad::Value head_forward(const ad::Value& fused, const ModelState& state, ad::Activation activation) {
  ad::Value hidden = ad::add_row(ad::matmul(fused, state.param("head.w1")), state.param("head.b1"));
  hidden = ad::activate(hidden, activation);
  return ad::add_row(ad::matmul(hidden, state.param("head.w2")), state.param("head.b2"));
}

LossParts total_loss(const ad::Value& prediction, const ad::Value& target, const ad::Value& fused, double lambda) {
  if (prediction.rows() != fused.rows()) {
    throw Error(ErrorCode::ShapeError, "loss: " + std::to_string(prediction.rows()) + " predictions but " +
                                           std::to_string(fused.rows()) + " fused rows");
  }
  LossParts parts;
  parts.mse = ad::mse(prediction, target);
  parts.l1 = ad::scale(ad::l1_norm(fused), 1.0 / static_cast<double>(fused.rows()));
  parts.total = lambda == 0.0 ? parts.mse : ad::add(parts.mse, ad::scale(parts.l1, lambda));
  return parts;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config, Vocabulary vocabulary, std::vector<std::string> tasks, ad::Index edge_width,
             std::uint64_t init_seed, std::uint64_t inference_seed)
    : config_(std::move(config)),
      vocabulary_(std::move(vocabulary)),
      tasks_(std::move(tasks)),
      edge_width_(edge_width),
      inference_seed_(inference_seed) {
  config_.validate();
  if (vocabulary_.size() == 0) throw Error(ErrorCode::InvalidConfig, "model vocabulary is empty");
  if (tasks_.empty()) throw Error(ErrorCode::InvalidConfig, "model needs at least one task");
  Rng rng(init_seed);
  init_gnn_parameters(config_.gnn, vocabulary_.size(), edge_width_, state_, rng);
  if (config_.use_3d) init_encoder_parameters(config_.encoder, vocabulary_.size(), state_, rng);
  const ad::Index d_u = config_.fused_width();
  const ad::Index hidden = config_.head_hidden;
  auto& p = state_.parameters;
  p.add("head.w1", random_normal(d_u, hidden, std::sqrt(2.0 / static_cast<double>(d_u)), rng));
  p.add("head.b1", ad::Tensor::Zero(1, hidden));
  p.add("head.w2", random_normal(hidden, static_cast<ad::Index>(tasks_.size()),
                                 std::sqrt(1.0 / static_cast<double>(hidden)), rng));
  p.add("head.b2", ad::Tensor::Zero(1, static_cast<ad::Index>(tasks_.size())));
  normalizer.tasks = tasks_;
  normalizer.mean = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(tasks_.size()));
  normalizer.stddev = Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(tasks_.size()));
}

void Model::set_view_count(std::size_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "view count k must be at least 1");
  config_.encoder.k = k;
}

AlignMode Model::training_alignment() const {
  return config_.encoder.align_mode == AlignMode::pre ? AlignMode::pre : AlignMode::none;
}

Sample Model::prepare(const MoleculeRecord& record, AlignMode alignment) const {
  validate(record);
  Sample s;
  s.id = record.id;
  s.atoms = vocabulary_.indices_of(record.atomic_numbers);
  s.graph = build_graph(record, config_.graph);
  if (s.graph.edge_width() != edge_width_ && !s.graph.edges.empty()) {
    throw Error(ErrorCode::InvalidInput, "record " + record.id + " yields edge features of width " +
                                             std::to_string(s.graph.edge_width()) + ", model expects " +
                                             std::to_string(edge_width_));
  }
  if (s.graph.edges.empty()) s.graph.edge_features.resize(0, edge_width_);
  s.coords = config_.use_3d ? prepare_coordinates(record.cloud(), alignment)
                            : prepare_coordinates(record.cloud(), AlignMode::none);
  if (config_.engineered_features) s.descriptor = distance_descriptor(record.coords, config_.graph.cutoff, config_.graph.rbf);
  return s;
}

std::vector<Rotationd> Model::inference_views() const { return training_views(inference_seed_); }

std::vector<Rotationd> Model::training_views(std::uint64_t seed) const {
  return sample_rotations<double>({config_.encoder.k, seed, config_.encoder.sampling});
}

ForwardOutput Model::forward(const std::vector<const Sample*>& batch, const std::vector<std::vector<Rotationd>>& views,
                             bool training, ForwardTaps* taps) const {
  if (batch.empty()) throw Error(ErrorCode::NoData, "forward pass on an empty batch");
  const auto m = static_cast<ad::Index>(batch.size());

  std::vector<const MolecularGraph*> graphs;
  for (const Sample* s : batch) graphs.push_back(&s->graph);
  const GraphBatch graph_batch = GraphBatch::build(graphs, vocabulary_, edge_width_);
  const ad::Value g = gnn_forward(graph_batch, config_.gnn, state_, taps ? &taps->gnn_initial_states : nullptr);

  ad::Value descriptor;
  if (config_.engineered_features) {
    ad::Tensor d(m, config_.descriptor_width());
    for (ad::Index i = 0; i < m; ++i) d.row(i) = batch[static_cast<std::size_t>(i)]->descriptor;
    descriptor = ad::Value::constant(std::move(d));
  }

  ForwardOutput out;
  if (!config_.use_3d) {
    out.fused = descriptor.defined() ? fuse({g, descriptor}) : fuse({g});
    out.prediction = head_forward(out.fused, state_, config_.head_activation);
    out.loss_prediction = out.prediction;
    out.loss_fused = out.fused;
    for (ad::Index i = 0; i < m; ++i) out.loss_row_molecule.push_back(i);
    return out;
  }

  if (views.size() != batch.size()) {
    throw Error(ErrorCode::InvalidInput, "forward: " + std::to_string(views.size()) + " view sets for " +
                                             std::to_string(batch.size()) + " molecules");
  }
  std::vector<EncoderInput> inputs(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    inputs[i].coords = taps && !taps->coords.empty() ? taps->coords.at(i) : ad::Value::constant(batch[i]->coords);
    inputs[i].atoms = batch[i]->atoms;
    inputs[i].views = views[i];
  }
  const EncoderOutput enc = encode_batch(inputs, state_, config_.encoder, training);
  if (taps) taps->encoder_embeddings = enc.embeddings;

  std::vector<ad::Value> parts{g, enc.fingerprints};
  if (descriptor.defined()) parts.push_back(descriptor);
  out.fused = fuse(parts);

  if (config_.objective == Objective::loss_of_mean) {
    out.prediction = head_forward(out.fused, state_, config_.head_activation);
    out.loss_prediction = out.prediction;
    out.loss_fused = out.fused;
    for (ad::Index i = 0; i < m; ++i) out.loss_row_molecule.push_back(i);
    return out;
  }

  std::vector<ad::Value> view_parts{ad::gather_rows(g, enc.view_molecule), enc.view_fingerprints};
  if (descriptor.defined()) view_parts.push_back(ad::gather_rows(descriptor, enc.view_molecule));
  out.loss_fused = fuse(view_parts);
  out.loss_prediction = head_forward(out.loss_fused, state_, config_.head_activation);
  out.loss_row_molecule = enc.view_molecule;
  out.prediction = ad::segment_mean(out.loss_prediction, enc.view_molecule, m);
  return out;
}

Eigen::MatrixXd Model::predict_normalized(const std::vector<MoleculeRecord>& records, std::optional<AlignMode> alignment,
                                          std::size_t threads) const {
  if (records.empty()) throw Error(ErrorCode::NoData, "no records to predict");
  const AlignMode mode = alignment.value_or(inference_alignment());
  const std::vector<Rotationd> views = inference_views();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(tasks_.size()));
  const std::size_t chunks = (records.size() + kPredictChunk - 1) / kPredictChunk;
  parallel_chunks(chunks, threads, [&](std::size_t c) {
    ad::NoGradGuard no_grad;
    const std::size_t begin = c * kPredictChunk;
    const std::size_t end = std::min(records.size(), begin + kPredictChunk);
    std::vector<Sample> samples;
    samples.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) samples.push_back(prepare(records[i], mode));
    std::vector<const Sample*> batch;
    for (const Sample& s : samples) batch.push_back(&s);
    const std::vector<std::vector<Rotationd>> batch_views(batch.size(), views);
    const ForwardOutput f = forward(batch, batch_views, false);
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = f.prediction.data();
  });
  return out;
}

Eigen::MatrixXd Model::predict(const std::vector<MoleculeRecord>& records, std::optional<AlignMode> alignment,
                               std::size_t threads) const {
  Eigen::MatrixXd normalized = predict_normalized(records, alignment, threads);
  for (Eigen::Index i = 0; i < normalized.rows(); ++i) normalized.row(i) = normalizer.invert(normalized.row(i));
  return normalized;
}

// ---------------------------------------------------------------------------

InvarianceReport measure_invariance(const Model& model, const std::vector<MoleculeRecord>& molecules,
                                    std::size_t n_rotations, std::uint64_t seed, std::optional<AlignMode> alignment,
                                    std::size_t threads) {
  if (n_rotations < 2) throw Error(ErrorCode::InvalidInput, "invariance needs at least 2 rotations");
  return measure_invariance(model, molecules, sample_rotations<double>({n_rotations, seed, SamplingMode::haar_random}),
                            alignment, threads);
}

InvarianceReport measure_invariance(const Model& model, const std::vector<MoleculeRecord>& molecules,
                                    const std::vector<Rotationd>& rotations, std::optional<AlignMode> alignment,
                                    std::size_t threads) {
  if (molecules.empty()) throw Error(ErrorCode::NoData, "no molecules to measure");
  if (rotations.empty()) throw Error(ErrorCode::InvalidInput, "no rotations to measure");
  InvarianceReport report;
  report.align_mode = alignment.value_or(model.inference_alignment());
  report.n_molecules = molecules.size();
  report.n_rotations = rotations.size();
  report.per_molecule.assign(molecules.size(), 0.0);

  const Eigen::MatrixXd base = model.predict_normalized(molecules, report.align_mode, threads);
  std::vector<MoleculeRecord> rotated(molecules.size());
  for (const Rotationd& r : rotations) {
    for (std::size_t i = 0; i < molecules.size(); ++i) rotated[i] = rotated_record(molecules[i], r);
    const Eigen::MatrixXd y = model.predict_normalized(rotated, report.align_mode, threads);
    for (std::size_t i = 0; i < molecules.size(); ++i) {
      const double dev = (y.row(static_cast<Eigen::Index>(i)) - base.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff();
      report.per_molecule[i] = std::max(report.per_molecule[i], dev);
    }
  }
  report.mean_dev = order_independent_sum(report.per_molecule) / static_cast<double>(molecules.size());
  report.max_dev = *std::max_element(report.per_molecule.begin(), report.per_molecule.end());
  return report;
}

AtomImportance atom_importance(const Model& model, const MoleculeRecord& molecule, std::size_t task_index) {
  if (task_index >= model.tasks().size()) {
    throw Error(ErrorCode::InvalidInput, "task index " + std::to_string(task_index) + " out of range (" +
                                             std::to_string(model.tasks().size()) + " tasks)");
  }
  const Sample sample = model.prepare(molecule, model.inference_alignment());
  const auto n = static_cast<Eigen::Index>(sample.atoms.size());

  ForwardTaps taps;
  ad::Value coords;
  if (model.config().use_3d) {
    coords = ad::Value::parameter(sample.coords);
    taps.coords.push_back(coords);
  }
  ad::Tensor select = ad::Tensor::Zero(static_cast<Eigen::Index>(model.tasks().size()), 1);
  select(static_cast<Eigen::Index>(task_index), 0) = 1.0;

  AtomImportance out;
  out.coordinate_jacobian = Eigen::MatrixXd::Zero(n, 3);
  Eigen::VectorXd squared = Eigen::VectorXd::Zero(n);
  {
    const ForwardOutput f = model.forward({&sample}, {model.inference_views()}, false, &taps);
    const ad::Value y = ad::matmul(f.prediction, ad::Value::constant(select));
    ad::backward(y);
    if (coords.defined() && coords.has_grad()) out.coordinate_jacobian = coords.grad();
    squared += out.coordinate_jacobian.rowwise().squaredNorm();
    for (const ad::Value& e : taps.encoder_embeddings) {
      if (e.defined() && e.has_grad()) squared += e.grad().rowwise().squaredNorm();
    }
    const ad::Value& h0 = taps.gnn_initial_states;
    if (h0.defined() && h0.has_grad()) squared += h0.grad().rowwise().squaredNorm();
  }
  for (const auto& [name, v] : model.state().parameters) v.zero_grad();

  out.coordinate_gradient = out.coordinate_jacobian.rowwise().norm();
  out.scores = squared.cwiseSqrt();
  const double top = out.scores.size() > 0 ? out.scores.maxCoeff() : 0.0;
  if (top > 0.0) out.scores /= top;
  return out;
}

}  // namespace rotenc
