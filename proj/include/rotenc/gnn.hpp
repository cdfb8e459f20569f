#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rotenc/autodiff.hpp"
#include "rotenc/state.hpp"

namespace rotenc {

/// Molecule as a graph: one node per atom, directed edges stored in both
/// directions, one feature row per directed edge.
struct MolecularGraph {
  std::vector<int> atomic_numbers;
  std::vector<std::pair<ad::Index, ad::Index>> edges;  // (source, destination)
  ad::Tensor edge_features;                            // |E| x d_e
  std::vector<double> targets;

  ad::Index node_count() const { return static_cast<ad::Index>(atomic_numbers.size()); }
  ad::Index edge_width() const { return edge_features.cols(); }
};

void validate(const MolecularGraph& graph);

enum class ReadoutMode { sum, mean };

struct GnnConfig {
  ad::Index layers = 3;
  ad::Index hidden = 32;
  ad::Index message_width = 32;
  ReadoutMode readout = ReadoutMode::sum;
  /// Width g is projected to before fusion.
  ad::Index output_width = 128;
  ad::Activation activation = ad::Activation::relu;

  void validate() const;
};

/// Disjoint union of several graphs, ready for one batched pass.
struct GraphBatch {
  std::vector<ad::Index> node_atoms;  // vocabulary indices
  std::vector<ad::Index> node_graph;  // owning graph of each node
  std::vector<ad::Index> source;
  std::vector<ad::Index> destination;
  ad::Tensor edge_features;
  ad::Index graph_count = 0;
  ad::Index edge_width = 0;

  static GraphBatch build(const std::vector<const MolecularGraph*>& graphs, const Vocabulary& vocabulary,
                          ad::Index edge_width);
  ad::Index node_count() const { return static_cast<ad::Index>(node_atoms.size()); }
};

void init_gnn_parameters(const GnnConfig& config, std::size_t vocabulary_size, ad::Index edge_width,
                         ModelState& state, Rng& rng);

/// One round of neighbor aggregation and node update:
///   m_v = sum over edges (w -> v) of M(h_v, h_w, e_vw)   (M: one-hidden-layer perceptron)
///   h_v' = act(W [h_v || m_v] + b)
/// Nodes with no incoming edges receive m_v = 0.
ad::Value message_pass(const ad::Value& h, const GraphBatch& batch, const ad::Value& edge_features,
                       const ModelState& state, ad::Index layer, const GnnConfig& config);

/// Column-wise sum or mean of node states per graph.
ad::Value readout(const ad::Value& h, const std::vector<ad::Index>& node_graph, ad::Index graphs, ReadoutMode mode);

/// Embedding lookup, `layers` rounds of message passing, readout, projection
/// to `output_width`. If `initial_states` is non-null it receives h^0.
ad::Value gnn_forward(const GraphBatch& batch, const GnnConfig& config, const ModelState& state,
                      ad::Value* initial_states = nullptr);

}  // namespace rotenc
