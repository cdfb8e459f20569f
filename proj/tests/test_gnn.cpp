#include <gtest/gtest.h>

#include "rotenc/gnn.hpp"
#include "support.hpp"

using namespace rotenc;
using ad::Tensor;
using ad::Value;

namespace {

struct Fixture {
  GnnConfig config;
  Vocabulary vocab{{1, 6, 8}};
  ModelState state;
  ad::Index edge_width = 2;

  Fixture() {
    config.layers = 2;
    config.hidden = 6;
    config.message_width = 5;
    config.output_width = 7;
    Rng rng(1);
    init_gnn_parameters(config, vocab.size(), edge_width, state, rng);
    // Non-zero message output weights so messages matter.
    for (ad::Index l = 0; l < config.layers; ++l) {
      state.param("gnn.layer" + std::to_string(l) + ".message.w2").data_mut() = random_normal(5, 5, 0.5, rng);
    }
  }
};

MolecularGraph chain(std::vector<int> z, Eigen::Index edge_width, std::uint64_t seed) {
  MolecularGraph g;
  g.atomic_numbers = std::move(z);
  Rng rng(seed);
  for (ad::Index i = 0; i + 1 < g.node_count(); ++i) {
    g.edges.emplace_back(i, i + 1);
    g.edges.emplace_back(i + 1, i);
  }
  g.edge_features = random_normal(static_cast<ad::Index>(g.edges.size()), edge_width, 1.0, rng);
  return g;
}

MolecularGraph relabel(const MolecularGraph& g, const std::vector<Eigen::Index>& perm) {
  // perm[new] = old
  std::vector<ad::Index> inverse(perm.size());
  MolecularGraph out = g;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.atomic_numbers[i] = g.atomic_numbers[static_cast<std::size_t>(perm[i])];
    inverse[static_cast<std::size_t>(perm[i])] = static_cast<ad::Index>(i);
  }
  for (auto& e : out.edges) e = {inverse[static_cast<std::size_t>(e.first)], inverse[static_cast<std::size_t>(e.second)]};
  return out;
}

}  // namespace

TEST(MessagePass, NoEdgesMeansStateOnlyUpdate) {
  Fixture f;
  MolecularGraph g;
  g.atomic_numbers = {1, 6, 8};
  g.edge_features = Tensor(0, f.edge_width);
  const GraphBatch batch = GraphBatch::build({&g}, f.vocab, f.edge_width);
  Rng rng(2);
  const Tensor h = random_normal(3, 6, 1.0, rng);
  const Tensor out = message_pass(Value::constant(h), batch, Value::constant(batch.edge_features), f.state, 0, f.config)
                         .data();
  const Tensor w = f.state.param("gnn.layer0.update.w").data();
  const Tensor b = f.state.param("gnn.layer0.update.b").data();
  const Tensor expected = ((h * w.topRows(6)).rowwise() + b.row(0)).cwiseMax(0.0);
  EXPECT_LE((out - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MessagePass, PermutationEquivariantExact) {
  Fixture f;
  const MolecularGraph g = chain({1, 6, 8, 6, 1}, f.edge_width, 3);
  const auto perm = testing_support::random_permutation(5, 4);
  const MolecularGraph pg = relabel(g, perm);
  const GraphBatch a = GraphBatch::build({&g}, f.vocab, f.edge_width);
  const GraphBatch b = GraphBatch::build({&pg}, f.vocab, f.edge_width);
  Rng rng(5);
  const Tensor h = random_normal(5, 6, 1.0, rng);
  Tensor ph(5, 6);
  for (Eigen::Index i = 0; i < 5; ++i) ph.row(i) = h.row(perm[static_cast<std::size_t>(i)]);
  const Tensor ha = message_pass(Value::constant(h), a, Value::constant(a.edge_features), f.state, 0, f.config).data();
  const Tensor hb = message_pass(Value::constant(ph), b, Value::constant(b.edge_features), f.state, 0, f.config).data();
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_TRUE(testing_support::bitwise_equal(hb.row(i), ha.row(perm[static_cast<std::size_t>(i)])));
  }
  EXPECT_TRUE(testing_support::bitwise_equal(gnn_forward(a, f.config, f.state).data(),
                                             gnn_forward(b, f.config, f.state).data()));
}

TEST(MessagePass, SymmetricNodesGetIdenticalStates) {
  Fixture f;
  // Two H atoms bonded to one O with identical edge features.
  MolecularGraph g;
  g.atomic_numbers = {8, 1, 1};
  g.edges = {{0, 1}, {1, 0}, {0, 2}, {2, 0}};
  g.edge_features = Tensor(4, 2);
  g.edge_features << 1, 0, 0.5, 0.2, 1, 0, 0.5, 0.2;
  const GraphBatch batch = GraphBatch::build({&g}, f.vocab, f.edge_width);
  Value h0;
  gnn_forward(batch, f.config, f.state, &h0);
  const Tensor h1 = message_pass(h0, batch, Value::constant(batch.edge_features), f.state, 0, f.config).data();
  EXPECT_EQ(h1.row(1), h1.row(2));
}

TEST(MessagePass, WidthMismatch) {
  Fixture f;
  const MolecularGraph g = chain({1, 6}, f.edge_width, 1);
  const GraphBatch batch = GraphBatch::build({&g}, f.vocab, f.edge_width);
  EXPECT_THROW(message_pass(Value::constant(Tensor::Zero(2, 3)), batch, Value::constant(batch.edge_features), f.state,
                            0, f.config),
               Error);
  EXPECT_THROW(GraphBatch::build({&g}, f.vocab, 3), Error);
}

TEST(Readout, Examples) {
  Tensor h(2, 2);
  h << 1, 0, 0, 1;
  EXPECT_EQ(readout(Value::constant(h), {0, 0}, 1, ReadoutMode::sum).data(), Tensor::Ones(1, 2));
  EXPECT_EQ(readout(Value::constant(h), {0, 0}, 1, ReadoutMode::mean).data(), Tensor::Constant(1, 2, 0.5));
  EXPECT_EQ(readout(Value::constant(h.topRows(1)), {0}, 1, ReadoutMode::sum).data(), h.topRows(1));
}

TEST(GnnForward, BatchedGraphsMatchSeparatePasses) {
  Fixture f;
  const MolecularGraph a = chain({1, 6, 8}, f.edge_width, 1);
  const MolecularGraph b = chain({6, 6, 6, 8}, f.edge_width, 2);
  const Tensor both = gnn_forward(GraphBatch::build({&a, &b}, f.vocab, f.edge_width), f.config, f.state).data();
  const Tensor ga = gnn_forward(GraphBatch::build({&a}, f.vocab, f.edge_width), f.config, f.state).data();
  const Tensor gb = gnn_forward(GraphBatch::build({&b}, f.vocab, f.edge_width), f.config, f.state).data();
  EXPECT_TRUE(testing_support::bitwise_equal(both.row(0), ga));
  EXPECT_TRUE(testing_support::bitwise_equal(both.row(1), gb));
  EXPECT_EQ(both.cols(), f.config.output_width);
}

TEST(GnnForward, GradientCheck) {
  Fixture f;
  f.config.activation = ad::Activation::silu;
  const MolecularGraph a = chain({1, 6, 8, 6}, f.edge_width, 1);
  const GraphBatch batch = GraphBatch::build({&a}, f.vocab, f.edge_width);
  const auto r = ad::gradient_check([&] { return ad::mean(ad::silu(gnn_forward(batch, f.config, f.state))); },
                                    f.state.parameters, 1e-6, 60, 2);
  EXPECT_GT(r.probes, 30u);
  EXPECT_LE(r.max_rel_err, 1e-5);
}

TEST(Graph, ValidationRejectsBadEdges) {
  MolecularGraph g;
  g.atomic_numbers = {1, 1};
  g.edges = {{0, 2}};
  g.edge_features = Tensor::Zero(1, 0);
  EXPECT_THROW(validate(g), Error);
  g.edges = {{1, 1}};
  EXPECT_THROW(validate(g), Error);
  MolecularGraph empty;
  try {
    validate(empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyMolecule);
  }
}
