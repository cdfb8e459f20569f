#pragma once

#include <cstdint>
#include <vector>

#include "rotenc/autodiff.hpp"
#include "rotenc/geometry.hpp"
#include "rotenc/state.hpp"

namespace rotenc {

enum class PoolMode { mean, max };
enum class AlignMode { none, pre, post };

struct EncoderConfig {
  /// Output width of each pointwise layer; the last one is the fingerprint width.
  std::vector<ad::Index> widths{64, 128, 128};
  PoolMode pool = PoolMode::mean;
  bool use_atom_embedding = true;
  ad::Index embed_dim = 32;
  /// Views per molecule.
  std::size_t k = 16;
  SamplingMode sampling = SamplingMode::haar_random;
  AlignMode align_mode = AlignMode::none;
  /// When false the pointwise stack is skipped and views are pooled directly.
  bool use_pointwise = true;
  ad::Activation activation = ad::Activation::relu;
  ad::BatchNormOptions batchnorm;

  ad::Index input_width() const { return 3 + (use_atom_embedding ? embed_dim : 0); }
  ad::Index fingerprint_width() const { return use_pointwise ? widths.back() : input_width(); }
  void validate() const;
};

void init_encoder_parameters(const EncoderConfig& config, std::size_t vocabulary_size, ModelState& state, Rng& rng);

/// [X R^T || Emb(z)] for one view. `coords` must already be centered;
/// `embeddings` is ignored when the config has no atom embedding.
ad::Value build_view_input(const ad::Value& coords, const Rotationd& rotation, const ad::Value& embeddings,
                           const EncoderConfig& config);

/// Repeated per-row affine map, batch norm, activation. Rows never mix
/// except through the batch statistics in training mode.
ad::Value pointwise_stack(const ad::Value& features, const ModelState& state, const EncoderConfig& config,
                          bool training);

/// Column mean or max over the rows of each segment.
ad::Value pool_view(const ad::Value& features, const std::vector<ad::Index>& segment, ad::Index segments,
                    PoolMode mode);

/// Inputs of one molecule for a batched encoder pass.
struct EncoderInput {
  ad::Value coords;  // |V| x 3, translated arbitrarily; centered inside the pass
  std::vector<ad::Index> atoms;  // vocabulary indices
  std::vector<Rotationd> views;
};

struct EncoderOutput {
  /// One fingerprint per (molecule, view); row m * k + j for view j of molecule m
  /// when every molecule has k views.
  ad::Value view_fingerprints;
  std::vector<ad::Index> view_molecule;
  /// View-averaged fingerprint per molecule.
  ad::Value fingerprints;
  /// Gathered embedding rows per molecule (undefined without atom embeddings).
  std::vector<ad::Value> embeddings;
};

/// All views of all molecules go through one stacked pointwise pass.
EncoderOutput encode_batch(const std::vector<EncoderInput>& inputs, const ModelState& state,
                           const EncoderConfig& config, bool training);

/// Inference fingerprint of a single cloud: centering, optional canonical
/// alignment, then the average over the config's seeded views.
Eigen::RowVectorXd encode(const PointCloudd& cloud, const Vocabulary& vocabulary, const ModelState& state,
                          const EncoderConfig& config, std::uint64_t view_seed);

/// Centered (and, for `mode` pre or post, canonically aligned) coordinates.
/// Alignment of a degenerate cloud throws DegenerateCloud.
Coords<double> prepare_coordinates(const PointCloudd& cloud, AlignMode mode);

}  // namespace rotenc
