#include "rotenc/encoder.hpp"

#include <cmath>
#include <string>

#include "rotenc/alignment.hpp"

namespace rotenc {

namespace {

std::string conv_name(std::size_t l) { return "encoder.conv" + std::to_string(l) + ".weight"; }
std::string bn_name(std::size_t l, const char* what) { return "encoder.bn" + std::to_string(l) + "." + what; }

}  // namespace

void EncoderConfig::validate() const {
  if (use_pointwise && widths.empty()) throw Error(ErrorCode::InvalidConfig, "encoder needs at least one layer");
  for (ad::Index w : widths) {
    if (w < 1) throw Error(ErrorCode::InvalidConfig, "encoder layer widths must be positive");
  }
  if (use_atom_embedding && embed_dim < 1) throw Error(ErrorCode::InvalidConfig, "embed_dim must be positive");
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "view count k must be at least 1");
  if (!(batchnorm.eps > 0.0) || batchnorm.momentum < 0.0 || batchnorm.momentum > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "invalid batch-norm eps or momentum");
  }
}

void init_encoder_parameters(const EncoderConfig& config, std::size_t vocabulary_size, ModelState& state, Rng& rng) {
  config.validate();
  auto& p = state.parameters;
  if (config.use_atom_embedding) {
    p.add("encoder.embedding", random_normal(static_cast<ad::Index>(vocabulary_size), config.embed_dim, 1.0, rng));
  }
  if (!config.use_pointwise) return;
  ad::Index in = config.input_width();
  for (std::size_t l = 0; l < config.widths.size(); ++l) {
    const ad::Index out = config.widths[l];
    p.add(conv_name(l), random_normal(in, out, std::sqrt(2.0 / static_cast<double>(in)), rng));
    p.add(bn_name(l, "gamma"), ad::Tensor::Ones(1, out));
    p.add(bn_name(l, "beta"), ad::Tensor::Zero(1, out));
    state.add_buffer(bn_name(l, "running_mean"), ad::Tensor::Zero(1, out));
    state.add_buffer(bn_name(l, "running_var"), ad::Tensor::Ones(1, out));
    in = out;
  }
}

ad::Value build_view_input(const ad::Value& coords, const Rotationd& rotation, const ad::Value& embeddings,
                           const EncoderConfig& config) {
  if (coords.cols() != 3) throw Error(ErrorCode::ShapeError, "view coordinates must have 3 columns");
  const ad::Value rotated = ad::matmul(coords, ad::Value::constant(rotation.matrix().transpose()));
  if (!config.use_atom_embedding) return rotated;
  if (!embeddings.defined() || embeddings.rows() != coords.rows() || embeddings.cols() != config.embed_dim) {
    throw Error(ErrorCode::ShapeError, "atom embeddings do not match the coordinates");
  }
  return ad::concat_cols({rotated, embeddings});
}

ad::Value pointwise_stack(const ad::Value& features, const ModelState& state, const EncoderConfig& config,
                          bool training) {
  if (features.cols() != config.input_width()) {
    throw Error(ErrorCode::ShapeError, "pointwise input width " + std::to_string(features.cols()) + ", expected " +
                                           std::to_string(config.input_width()));
  }
  ad::Value x = features;
  for (std::size_t l = 0; l < config.widths.size(); ++l) {
    x = ad::matmul(x, state.param(conv_name(l)));
    const ad::Value& gamma = state.param(bn_name(l, "gamma"));
    const ad::Value& beta = state.param(bn_name(l, "beta"));
    const ad::Value& mean = state.buffer(bn_name(l, "running_mean"));
    const ad::Value& var = state.buffer(bn_name(l, "running_var"));
    x = training ? ad::batchnorm_train(x, gamma, beta, mean, var, config.batchnorm)
                 : ad::batchnorm_eval(x, gamma, beta, mean, var, config.batchnorm);
    x = ad::activate(x, config.activation);
  }
  return x;
}

ad::Value pool_view(const ad::Value& features, const std::vector<ad::Index>& segment, ad::Index segments,
                    PoolMode mode) {
  return mode == PoolMode::mean ? ad::segment_mean(features, segment, segments)
                                : ad::segment_max(features, segment, segments);
}

EncoderOutput encode_batch(const std::vector<EncoderInput>& inputs, const ModelState& state,
                           const EncoderConfig& config, bool training) {
  if (inputs.empty()) throw Error(ErrorCode::NoData, "encoder batch is empty");
  EncoderOutput out;
  std::vector<ad::Value> rows;
  std::vector<ad::Index> row_view;
  ad::Index view = 0;
  for (std::size_t m = 0; m < inputs.size(); ++m) {
    const EncoderInput& in = inputs[m];
    if (in.views.empty()) throw Error(ErrorCode::InvalidConfig, "molecule without views");
    if (static_cast<std::size_t>(in.coords.rows()) != in.atoms.size()) {
      throw Error(ErrorCode::ShapeError, "encoder input has " + std::to_string(in.coords.rows()) + " coordinate rows and " +
                                             std::to_string(in.atoms.size()) + " atoms");
    }
    const ad::Value centered = ad::center_rows(in.coords);
    ad::Value embeddings;
    if (config.use_atom_embedding) embeddings = ad::gather_rows(state.param("encoder.embedding"), in.atoms);
    out.embeddings.push_back(embeddings);
    for (const Rotationd& r : in.views) {
      rows.push_back(build_view_input(centered, r, embeddings, config));
      row_view.insert(row_view.end(), in.atoms.size(), view);
      out.view_molecule.push_back(static_cast<ad::Index>(m));
      ++view;
    }
  }
  ad::Value features = ad::concat_rows(rows);
  if (config.use_pointwise) features = pointwise_stack(features, state, config, training);
  out.view_fingerprints = pool_view(features, row_view, view, config.pool);
  out.fingerprints = ad::segment_mean(out.view_fingerprints, out.view_molecule, static_cast<ad::Index>(inputs.size()));
  return out;
}

Coords<double> prepare_coordinates(const PointCloudd& cloud, AlignMode mode) {
  validate(cloud);
  if (mode == AlignMode::none) return center_cloud(cloud).cloud.coords;
  const AlignmentResult<double> aligned = canonical_align(cloud);
  if (aligned.degenerate) {
    throw Error(ErrorCode::DegenerateCloud, "cloud has no unique canonical pose (eigenvalues " +
                                                std::to_string(aligned.eigenvalues(0)) + ", " +
                                                std::to_string(aligned.eigenvalues(1)) + ", " +
                                                std::to_string(aligned.eigenvalues(2)) + ")");
  }
  return aligned.aligned.coords;
}

Eigen::RowVectorXd encode(const PointCloudd& cloud, const Vocabulary& vocabulary, const ModelState& state,
                          const EncoderConfig& config, std::uint64_t view_seed) {
  config.validate();
  ad::NoGradGuard no_grad;
  EncoderInput input;
  input.coords = ad::Value::constant(prepare_coordinates(cloud, config.align_mode));
  input.atoms = vocabulary.indices_of(cloud.atomic_numbers);
  input.views = sample_rotations<double>({config.k, view_seed, config.sampling});
  return encode_batch({input}, state, config, false).fingerprints.data().row(0);
}

}  // namespace rotenc
