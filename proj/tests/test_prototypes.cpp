#include <gtest/gtest.h>

#include "gotham/prototypes.hpp"
#include "gotham/sampler.hpp"
#include "gotham/trainer.hpp"
#include "helpers.hpp"

using namespace gotham;

namespace {

Model model_for(const DatasetBundle& b, std::vector<int> widths, std::uint64_t seed = 2, bool semantic = true) {
  ModelSpec s;
  s.feature_dim = b.feature_dim();
  s.csd_dim = semantic ? b.csd.dim() : 0;
  s.gnn_widths = std::move(widths);
  s.mlp_hidden = {6};
  s.seed = seed;
  return init_model(s);
}

}  // namespace

TEST(PrototypeSeen, SingletonIsEmbedding) {
  const auto b = testutil::sbm_stream(1, 3, 3, 0, 0, 5, 8, 4);
  const auto g = graph_at(b, 0);
  const Model m = model_for(b, {5, 3});
  const std::vector<NodeId> one{6};
  const auto p = prototype_seen(m.gnn, g, one, 0);
  EXPECT_EQ(p.vector.transpose(), gnn_forward(m.gnn, g, one));
  EXPECT_EQ(p.support_size, 1u);
  EXPECT_EQ(p.kind, PrototypeKind::seen);
  EXPECT_THROW(prototype_seen(m.gnn, g, std::vector<NodeId>{}, 0), ValidationError);
}

TEST(PrototypeSeen, OppositeEmbeddingsCancel) {
  // Linear one-layer GNN on two isolated nodes with features x and -x.
  Matrix x(2, 2);
  x << 1.5, -0.5, -1.5, 0.5;
  const auto g = GraphSnapshot::build(2, {}, std::make_shared<const Matrix>(x));
  GnnParams p;
  p.layers.push_back({Matrix::Identity(2, 2), Matrix::Zero(1, 2)});
  const std::vector<NodeId> both{0, 1};
  EXPECT_TRUE(prototype_seen(p, g, both).vector.isZero(0));
}

TEST(PrototypeSeen, EqualsColumnMeanOracle) {
  const auto b = testutil::sbm_stream(3, 3, 3, 0, 0, 5, 10, 4);
  const auto g = graph_at(b, 0);
  const Model m = model_for(b, {6, 4});
  const std::vector<NodeId> sup{1, 4, 9, 13, 27};
  const Matrix e = gnn_forward(m.gnn, g, g.nodes());
  RowVector mean = RowVector::Zero(e.cols());
  for (NodeId v : sup) mean += e.row(v);
  mean /= 5.0;
  EXPECT_LE((prototype_seen(m.gnn, g, sup).vector.transpose() - mean).norm(), 1e-12);
}

TEST(PrototypeSeen, PermutationInvariantAndLinearInScale) {
  const auto b = testutil::sbm_stream(4, 3, 3, 0, 0, 5, 10, 4);
  const auto g = graph_at(b, 0);
  Model m = model_for(b, {4});  // single linear layer
  m.gnn.layers[0].bias.setZero();
  const std::vector<NodeId> s1{2, 8, 15, 21}, s2{21, 2, 15, 8};
  const Vector p1 = prototype_seen(m.gnn, g, s1).vector;
  EXPECT_LE((p1 - prototype_seen(m.gnn, g, s2).vector).norm(), 1e-12);
  Model scaled = m;
  scaled.gnn.layers[0].weight *= 3.0;
  EXPECT_LE((prototype_seen(scaled.gnn, g, s1).vector - 3.0 * p1).norm(), 1e-12);
}

TEST(PrototypeMerged, Arithmetic) {
  Prototype seen;
  seen.class_id = 4;
  seen.vector = Vector::Unit(2, 0);
  seen.support_size = 3;
  const auto m = prototype_merged(seen, Vector::Unit(2, 1));
  EXPECT_EQ(m.vector, Vector::Constant(2, 0.5));
  EXPECT_EQ(m.kind, PrototypeKind::merged);
  EXPECT_EQ(prototype_merged(seen, seen.vector).vector, seen.vector);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int i = 0; i < 20; ++i) {
    Vector a(5), c(5);
    for (int j = 0; j < 5; ++j) a(j) = n(rng), c(j) = n(rng);
    seen.vector = a;
    const Vector got = prototype_merged(seen, c).vector;
    EXPECT_EQ(got, ((a + c) / 2).eval());
    EXPECT_NEAR((got - a).norm(), (got - c).norm(), 1e-12);
  }
}

TEST(PrototypeUnseen, LinearLayerZeroAndExplicitGraphOracle) {
  GnnParams p;
  p.slope = 1.0;
  p.layers.push_back({testutil::random_matrix(3, 2, 1), Matrix::Zero(1, 2)});
  Vector csd(3);
  csd << 0.3, -1.0, 2.0;
  const auto u = prototype_unseen(p, csd, 9);
  EXPECT_LE((u.vector.transpose() - csd.transpose() * p.layers[0].weight).norm(), 1e-12);
  EXPECT_EQ(u.kind, PrototypeKind::unseen_semantic);
  EXPECT_EQ(u.support_size, 0u);
  EXPECT_TRUE(prototype_unseen(p, Vector::Zero(3), 9).vector.isZero(0));

  ModelSpec s;
  s.feature_dim = 3;
  s.gnn_widths = {5, 4};
  s.slope = 0.2;
  const Model m = init_model(s);
  const Vector r = testutil::random_matrix(3, 1, 7).col(0);
  const auto lone = GraphSnapshot::build(1, {}, std::make_shared<const Matrix>(r.transpose()));
  const Matrix want = gnn_forward(m.gnn, lone, std::vector<NodeId>{0});
  EXPECT_LE((prototype_unseen(m.gnn, r).vector.transpose() - want).norm(), 1e-12);
}

TEST(PrototypeUnseen, ProjectionWhenDimensionsDiffer) {
  ModelSpec s;
  s.feature_dim = 4;
  s.csd_dim = 6;
  s.gnn_widths = {3};
  s.mlp_hidden = {5};
  const Model m = init_model(s);
  ASSERT_EQ(m.csd_projection.rows(), 6);
  ASSERT_EQ(m.csd_projection.cols(), 4);
  const Vector a = testutil::random_matrix(6, 1, 3).col(0);
  const RowVector projected = project_csd(m, a);
  EXPECT_LE((projected - a.transpose() * m.csd_projection).norm(), 1e-12);
  const auto p = prototype_unseen(m.gnn, a, 0, m.csd_projection);
  EXPECT_EQ(p.vector.size(), 3);
}

TEST(PrototypeSet, ModesKindsAndCounts) {
  const auto b = testutil::sbm_stream(5, 6, 2, 1, 1, 4, 10, 4);
  const auto split = make_label_split(b, 5, 3);
  const Model m = model_for(b, {6, 4});

  const auto g0 = graph_at(b, 0);
  const auto ep0 = support_episode(b, g0, split, 0, {2, 3}, 1);
  const auto plain = build_prototype_set(m, b, g0, ep0, PrototypeMode::gfscil_plain);
  ASSERT_EQ(plain.size(), 2u);
  for (const auto& [c, p] : plain) EXPECT_EQ(p.kind, PrototypeKind::seen);
  const auto sem = build_prototype_set(m, b, g0, ep0, PrototypeMode::gfscil_semantic);
  for (const auto& [c, p] : sem) {
    EXPECT_EQ(p.kind, PrototypeKind::merged);
    const Vector enc = mlp_forward(m.mlp, csd_rows(b, {c})).row(0).transpose();
    EXPECT_LE((p.vector - (plain.at(c).vector + enc) / 2).norm(), 1e-12);
  }

  for (std::size_t t = 1; t <= 2; ++t) {
    const auto g = graph_at(b, t);
    const auto ep = support_episode(b, g, split, t, {2, 3}, 1);
    const auto gcl = build_prototype_set(m, b, g, ep, PrototypeMode::gcl);
    EXPECT_EQ(gcl.size(), b.schedule.seen_classes_at(t).size() + b.schedule.unseen_classes_at(t).size());
    std::size_t unseen = 0;
    for (const auto& [c, p] : gcl) {
      EXPECT_TRUE(p.vector.allFinite());
      if (p.kind == PrototypeKind::unseen_semantic) {
        ++unseen;
        EXPECT_TRUE(b.schedule.is_zero_shot(c));
        EXPECT_EQ(p.support_size, 0u);
        EXPECT_LE((p.vector - prototype_unseen(m.gnn, b.csd.at(c), c, m.csd_projection).vector).norm(), 1e-12);
      } else {
        EXPECT_EQ(p.kind, PrototypeKind::merged);
      }
    }
    EXPECT_EQ(unseen, b.schedule.unseen_classes_at(t).size());
  }
}

TEST(PrototypeSet, MlpUnseenEncoderAndMissingCsd) {
  auto b = testutil::sbm_stream(6, 4, 2, 1, 1, 4, 10, 4);
  const auto split = make_label_split(b, 5, 3);
  const Model m = model_for(b, {6, 4});
  const auto g = graph_at(b, 1);
  const auto ep = support_episode(b, g, split, 1, {2, 3}, 1);
  const auto set = build_prototype_set(m, b, g, ep, PrototypeMode::gcl, UnseenEncoder::mlp);
  const Vector enc = mlp_forward(m.mlp, csd_rows(b, {3})).row(0).transpose();
  EXPECT_LE((set.at(3).vector - enc).norm(), 1e-12);
  b.csd.vectors.erase(3);
  EXPECT_THROW(build_prototype_set(m, b, g, ep, PrototypeMode::gcl), ValidationError);
}

TEST(PrototypeSet, TapeAndPlainRoutesAgree) {
  const auto b = testutil::sbm_stream(7, 5, 3, 1, 1, 4, 10, 4);
  const auto split = make_label_split(b, 5, 3);
  const Model m = model_for(b, {6, 4});
  const auto g = graph_at(b, 1);
  const auto ep = sample_episode(b, g, split, 1, EpisodeConfig{}, 9);
  ad::Tape tape;
  const auto bound = bind(tape, m, false);
  const auto batch = record_prototypes(tape, bound, m, b, g, ep, PrototypeMode::gcl);
  const auto set = build_prototype_set(m, b, g, ep, PrototypeMode::gcl);
  ASSERT_EQ(batch.classes.size(), set.size());
  for (std::size_t i = 0; i < batch.classes.size(); ++i) {
    const auto& p = set.at(batch.classes[i]);
    EXPECT_LE((batch.prototypes.value().row(i) - p.vector.transpose()).norm(), 1e-12);
    EXPECT_EQ(batch.kinds[i], p.kind);
    EXPECT_EQ(batch.support_sizes[i], p.support_size);
  }
  std::size_t rows = 0;
  for (const auto& [c, ext] : ep.extended_support) rows += ext.size();
  EXPECT_EQ(static_cast<std::size_t>(batch.support_embeddings.rows()), rows);
  EXPECT_EQ(batch.owner.size(), rows);
}

TEST(PrototypeSet, TsvExport) {
  testutil::TempDir d;
  PrototypeSet s;
  Prototype p;
  p.class_id = 2;
  p.vector = Vector(3);
  p.vector << 0.1, 0.2, 0.3;
  p.kind = PrototypeKind::unseen_semantic;
  s[2] = p;
  write_prototypes_tsv(s, d / "p.tsv");
  EXPECT_EQ(testutil::read_file(d / "p.tsv"), "class_id\tkind\tvector\n2\tunseen_semantic\t0.1 0.2 0.3\n");
}
