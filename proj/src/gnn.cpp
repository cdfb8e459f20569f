#include "rotenc/gnn.hpp"

#include <cmath>

namespace rotenc {

namespace {

std::string layer_name(ad::Index layer, const char* part) {
  return "gnn.layer" + std::to_string(layer) + "." + part;
}

}  // namespace

void validate(const MolecularGraph& graph) {
  const ad::Index n = graph.node_count();
  if (n < 1) throw Error(ErrorCode::EmptyMolecule, "graph has no nodes");
  for (const auto& [u, v] : graph.edges) {
    if (u < 0 || u >= n || v < 0 || v >= n) {
      throw Error(ErrorCode::InvalidInput, "edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                               ") references a node outside [0, " + std::to_string(n) + ")");
    }
    if (u == v) throw Error(ErrorCode::InvalidInput, "self-loop on node " + std::to_string(u));
  }
  if (graph.edge_features.rows() != static_cast<ad::Index>(graph.edges.size())) {
    throw Error(ErrorCode::ShapeError, "edge feature rows " + std::to_string(graph.edge_features.rows()) +
                                           " != edge count " + std::to_string(graph.edges.size()));
  }
}

void GnnConfig::validate() const {
  if (layers < 1) throw Error(ErrorCode::InvalidConfig, "gnn.layers must be at least 1");
  if (hidden < 1 || message_width < 1 || output_width < 1) {
    throw Error(ErrorCode::InvalidConfig, "gnn widths must be positive");
  }
}

GraphBatch GraphBatch::build(const std::vector<const MolecularGraph*>& graphs, const Vocabulary& vocabulary,
                             ad::Index edge_width) {
  GraphBatch batch;
  batch.graph_count = static_cast<ad::Index>(graphs.size());
  batch.edge_width = edge_width;
  ad::Index edges = 0;
  for (const MolecularGraph* g : graphs) edges += static_cast<ad::Index>(g->edges.size());
  batch.edge_features.resize(edges, edge_width);

  ad::Index node_offset = 0;
  ad::Index edge_offset = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const MolecularGraph& g = *graphs[gi];
    validate(g);
    if (g.edge_width() != edge_width && !g.edges.empty()) {
      throw Error(ErrorCode::ShapeError, "graph edge width " + std::to_string(g.edge_width()) + " != model edge width " +
                                             std::to_string(edge_width));
    }
    for (int z : g.atomic_numbers) {
      batch.node_atoms.push_back(vocabulary.index_of(z));
      batch.node_graph.push_back(static_cast<ad::Index>(gi));
    }
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      batch.source.push_back(g.edges[e].first + node_offset);
      batch.destination.push_back(g.edges[e].second + node_offset);
    }
    if (!g.edges.empty() && edge_width > 0) {
      batch.edge_features.middleRows(edge_offset, static_cast<ad::Index>(g.edges.size())) = g.edge_features;
    }
    node_offset += g.node_count();
    edge_offset += static_cast<ad::Index>(g.edges.size());
  }
  return batch;
}

void init_gnn_parameters(const GnnConfig& config, std::size_t vocabulary_size, ad::Index edge_width,
                         ModelState& state, Rng& rng) {
  config.validate();
  auto& p = state.parameters;
  const ad::Index d = config.hidden;
  p.add("gnn.embedding", random_normal(static_cast<ad::Index>(vocabulary_size), d, 1.0, rng));
  for (ad::Index l = 0; l < config.layers; ++l) {
    const ad::Index in = 2 * d + edge_width;
    p.add(layer_name(l, "message.w1"), random_normal(in, config.message_width, std::sqrt(2.0 / in), rng));
    p.add(layer_name(l, "message.b1"), ad::Tensor::Zero(1, config.message_width));
    // Zero so that summed messages start at 0 and node states keep unit scale
    // regardless of degree; gradients reach it through the hidden activations.
    p.add(layer_name(l, "message.w2"), ad::Tensor::Zero(config.message_width, config.message_width));
    p.add(layer_name(l, "message.b2"), ad::Tensor::Zero(1, config.message_width));
    const ad::Index upd = d + config.message_width;
    p.add(layer_name(l, "update.w"), random_normal(upd, d, std::sqrt(2.0 / upd), rng));
    p.add(layer_name(l, "update.b"), ad::Tensor::Zero(1, d));
  }
  p.add("gnn.readout.w", random_normal(d, config.output_width, std::sqrt(1.0 / d), rng));
  p.add("gnn.readout.b", ad::Tensor::Zero(1, config.output_width));
}

ad::Value message_pass(const ad::Value& h, const GraphBatch& batch, const ad::Value& edge_features,
                       const ModelState& state, ad::Index layer, const GnnConfig& config) {
  if (h.cols() != config.hidden || h.rows() != batch.node_count()) {
    throw Error(ErrorCode::ShapeError, "message_pass: node states (" + std::to_string(h.rows()) + "x" +
                                           std::to_string(h.cols()) + ") do not match " +
                                           std::to_string(batch.node_count()) + " nodes of width " +
                                           std::to_string(config.hidden));
  }
  std::vector<ad::Value> parts{ad::gather_rows(h, batch.destination), ad::gather_rows(h, batch.source)};
  if (edge_features.cols() > 0) parts.push_back(edge_features);
  const ad::Value inputs = ad::concat_cols(parts);

  ad::Value hidden = ad::add_row(ad::matmul(inputs, state.param(layer_name(layer, "message.w1"))),
                                 state.param(layer_name(layer, "message.b1")));
  hidden = ad::activate(hidden, config.activation);
  const ad::Value messages = ad::add_row(ad::matmul(hidden, state.param(layer_name(layer, "message.w2"))),
                                         state.param(layer_name(layer, "message.b2")));
  const ad::Value aggregated = ad::segment_sum(messages, batch.destination, batch.node_count());

  const ad::Value update = ad::add_row(ad::matmul(ad::concat_cols({h, aggregated}), state.param(layer_name(layer, "update.w"))),
                                       state.param(layer_name(layer, "update.b")));
  return ad::activate(update, config.activation);
}

ad::Value readout(const ad::Value& h, const std::vector<ad::Index>& node_graph, ad::Index graphs, ReadoutMode mode) {
  return mode == ReadoutMode::sum ? ad::segment_sum(h, node_graph, graphs) : ad::segment_mean(h, node_graph, graphs);
}

ad::Value gnn_forward(const GraphBatch& batch, const GnnConfig& config, const ModelState& state,
                      ad::Value* initial_states) {
  ad::Value h = ad::gather_rows(state.param("gnn.embedding"), batch.node_atoms);
  if (initial_states != nullptr) *initial_states = h;
  const ad::Value edges = ad::Value::constant(batch.edge_features);
  for (ad::Index l = 0; l < config.layers; ++l) h = message_pass(h, batch, edges, state, l, config);
  const ad::Value g = readout(h, batch.node_graph, batch.graph_count, config.readout);
  return ad::add_row(ad::matmul(g, state.param("gnn.readout.w")), state.param("gnn.readout.b"));
}

}  // namespace rotenc
