#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "bsms/error.hpp"
#include "bsms/heat1d.hpp"
#include "bsms/hierarchy.hpp"
#include "bsms/mesh_io.hpp"
#include "bsms/model.hpp"
#include "gradcheck.hpp"
#include "properties.hpp"
#include "test_util.hpp"

using namespace bsms;
using namespace bsms::testing;

namespace {

ModelConfig small_config(int depth, bool contact, bool world) {
  ModelConfig c;
  c.latent = 4;
  c.hidden = 5;
  c.depth = depth;
  c.dim = 2;
  c.node_types = 2;
  c.inputs = {{"u", 2}, {"x", 2}};
  c.outputs = {{"u", 2}};
  c.edge_sets = {EdgeSetSpec{true, world}};
  if (contact) c.edge_sets.push_back(EdgeSetSpec{false, true});
  if (world) c.world_position_field = "x";
  c.task = TaskMode::Delta;
  return c;
}

struct Instance {
  ModelConfig cfg;
  std::shared_ptr<const Hierarchy> h;
  std::shared_ptr<ModelGraph> graph;
  ModelInput input;
};

Instance make_setup(Rng& rng, const Mesh& mesh, const ModelConfig& cfg, const std::vector<Edge>& contact_edges = {}) {
  Instance s;
  s.cfg = cfg;
  HierarchyOptions o;
  o.depth = cfg.depth;
  std::optional<Adjacency> contact;
  if (cfg.edge_sets.size() > 1) contact = build_adjacency(mesh.size(), contact_edges);
  s.h = std::make_shared<Hierarchy>(build_hierarchy(mesh_to_graph(mesh), mesh.positions, contact, o));
  s.graph = std::make_shared<ModelGraph>(s.h, cfg);
  s.input.features = random_matrix(rng, mesh.size(), cfg.input_width());
  if (cfg.uses_world_positions()) s.input.world_positions = mesh.positions + random_matrix(rng, mesh.size(), cfg.dim, 0.1);
  return s;
}

void randomize(BsmsParams& p, Rng& rng, double scale = 0.5) {
  p.for_each([&](const std::string&, Matrix& m) { m = random_matrix(rng, m.rows(), m.cols(), scale); });
}

double model_gradcheck(const BsmsParams& params, const Instance& s, const Matrix& target, std::string* where) {
  return bsms::testing::model_gradcheck(params, *s.graph, s.input, s.cfg, target, where);
}

Matrix permute_rows(const Matrix& m, const std::vector<Index>& pi) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(pi[i]) = m.row(i);
  return out;
}

}  // namespace

TEST(Config, JsonRoundTripAndUnknownKeys) {
  const auto c = small_config(3, true, true);
  const auto back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  auto j = c.to_json();
  j["bogus"] = 1;
  EXPECT_THROW(ModelConfig::from_json(j), Error);
}

TEST(Config, Validation) {
  auto c = small_config(2, false, false);
  EXPECT_NO_THROW(c.validate());
  c.outputs = {{"p", 1}};  // delta needs the output among the inputs
  EXPECT_THROW(c.validate(), Error);
  c = small_config(2, false, false);
  c.edge_sets[0].world = true;
  c.world_position_field.clear();
  EXPECT_THROW(c.validate(), Error);
  c = small_config(0, false, false);
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_task_mode("steady"), TaskMode::Steady);
  EXPECT_THROW(parse_task_mode("later"), Error);
}

TEST(Config, Widths) {
  const auto c = small_config(2, true, true);
  EXPECT_EQ(c.input_width(), 2 + 4);
  EXPECT_EQ(c.output_width(), 2);
  EXPECT_EQ(c.edge_feature_width(0), 6);
  EXPECT_EQ(c.edge_feature_width(1), 3);
  EXPECT_EQ(c.mp_block_count(), 3);
}

TEST(Encode, HeatInputWidthIsOneHotPlusBoundaryValue) {
  const auto c = heat1d::model_config(3, 8, 8);
  EXPECT_EQ(c.node_types, 3);
  EXPECT_EQ(c.input_width(), 3 + 1);
  EXPECT_EQ(c.output_width(), 1);
}

TEST(Encode, ZeroEncoderWithoutResidualGivesZeroLatents) {
  auto c = small_config(1, false, false);
  c.residual = false;
  BsmsParams p = init_model(c, 1);
  p.encoder.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  Rng rng(1);
  c.layernorm = false;
  p.encoder.layernorm = false;
  const Matrix v = encode(p.encoder, random_matrix(rng, 5, c.input_width()), c);
  EXPECT_EQ(v, Matrix::Zero(5, c.latent));
  EXPECT_THROW(encode(p.encoder, Matrix::Zero(5, 3), c), Error);
}

TEST(Encode, RowPermutationCommutes) {
  const auto c = small_config(1, false, false);
  const BsmsParams p = init_model(c, 2);
  Rng rng(2);
  const Matrix x = random_matrix(rng, 7, c.input_width());
  const auto pi = random_permutation(rng, 7);
  EXPECT_EQ(encode(p.encoder, permute_rows(x, pi), c), permute_rows(encode(p.encoder, x, c), pi));
}

TEST(MessagePass, NoEdgesIsNodeUpdateOnZeroAggregate) {
  const auto c = small_config(1, false, false);
  const BsmsParams p = init_model(c, 3);
  Rng rng(3);
  const Matrix v = random_matrix(rng, 4, c.latent);
  EdgeList empty;
  empty.material_offsets.resize(0, c.dim + 1);
  const Matrix out = message_pass(p.blocks[0], {&empty}, {Matrix(0, c.edge_feature_width(0))}, v);
  Matrix node_in = Matrix::Zero(4, 2 * c.latent);
  node_in.leftCols(c.latent) = v;
  EXPECT_EQ(out, v + mlp_apply(p.blocks[0].node, node_in));
}

TEST(MessagePass, SymmetricEdgeSymmetricOutputs) {
  ModelConfig c = small_config(1, false, false);
  c.edge_sets = {EdgeSetSpec{false, false}};
  const BsmsParams p = init_model(c, 4);
  EdgeList e;
  e.receivers = {0, 1};
  e.senders = {1, 0};
  Rng rng(4);
  const Matrix row = random_matrix(rng, 1, c.latent);
  Matrix v(2, c.latent);
  v << row, row;
  const Matrix out = message_pass(p.blocks[0], {&e}, {Matrix(2, 0)}, v);
  EXPECT_EQ(out.row(0), out.row(1));
  EXPECT_THROW(message_pass(p.blocks[0], {&e, &e}, {Matrix(2, 0), Matrix(2, 0)}, v), Error);
}

TEST(Decode, ZeroDecoderAndWidthCheck) {
  auto c = small_config(1, false, false);
  BsmsParams p = init_model(c, 5);
  p.decoder.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  Rng rng(5);
  EXPECT_EQ(decode(p.decoder, random_matrix(rng, 3, c.latent), c), Matrix::Zero(3, 2));
  EXPECT_FALSE(p.decoder.layernorm);
  c.outputs = {{"u", 3}};
  EXPECT_THROW(decode(p.decoder, random_matrix(rng, 3, c.latent), c), Error);
}

TEST(Decode, LatentPassthrough) {
  auto c = small_config(1, false, false);
  c.latent = 2;  // equals the output width: identity residual
  BsmsParams p = init_model(c, 6);
  EXPECT_EQ(p.decoder.residual, Residual::Identity);
  p.decoder.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  Rng rng(6);
  const Matrix v = random_matrix(rng, 3, 2);
  EXPECT_EQ(decode(p.decoder, v, c), v);
}

TEST(Forward, BlockCountIsTwoDepthMinusOne) {
  Rng rng(7);
  const Mesh mesh = path_mesh(rng, 20);
  for (int d = 1; d <= 4; ++d) {
    auto c = small_config(d, false, false);
    Instance s = make_setup(rng, mesh, c);
    ForwardTape tape;
    model_forward(init_model(c, 7), *s.graph, s.input, c, &tape);
    EXPECT_EQ(tape.mp_blocks_run, 2 * d - 1);
    EXPECT_EQ(block_name(0, d), d == 1 ? "bottom" : "down_0");
    EXPECT_EQ(block_name(d - 1, d), "bottom");
    EXPECT_EQ(block_name(2 * d - 2, d), d == 1 ? "bottom" : "up_0");
  }
}

TEST(Forward, DepthOneZeroBlocksIsEncoderDecoder) {
  Rng rng(8);
  auto c = small_config(1, false, false);
  Instance s = make_setup(rng, triangulation_mesh(rng, 12), c);
  BsmsParams p = init_model(c, 8);
  randomize(p, rng);
  for (auto& e : p.blocks[0].edge) e.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  p.blocks[0].node.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  const Matrix want = decode(p.decoder, encode(p.encoder, s.input.features, c), c);
  EXPECT_EQ(model_forward(p, *s.graph, s.input, c), want);
}

TEST(Forward, ZeroBlocksDepthTwoIsSkipPlusRoundTrip) {
  Rng rng(9);
  auto c = small_config(2, false, false);
  Instance s = make_setup(rng, grid_mesh(rng, 4, 4), c);
  BsmsParams p = init_model(c, 9);
  randomize(p, rng);
  for (auto& b : p.blocks) {
    for (auto& e : b.edge) e.for_each([](const std::string&, Matrix& m) { m.setZero(); });
    b.node.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  }
  const Eigen::MatrixXd C = s.h->transitions[0].table.to_dense();
  const Eigen::MatrixXd v = encode(p.encoder, s.input.features, c);
  const Matrix v1 = v + C * (C.transpose() * v);
  EXPECT_LT((model_forward(p, *s.graph, s.input, c) - decode(p.decoder, v1, c)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, Errors) {
  Rng rng(10);
  auto c = small_config(2, false, false);
  Instance s = make_setup(rng, path_mesh(rng, 8), c);
  const BsmsParams p = init_model(c, 10);
  ModelInput bad = s.input;
  bad.features = Matrix::Zero(5, c.input_width());
  EXPECT_THROW(model_forward(p, *s.graph, bad, c), Error);
  auto c3 = small_config(3, false, false);
  EXPECT_THROW(ModelGraph(s.h, c3), Error);
  EXPECT_THROW(model_forward(init_model(c3, 1), *s.graph, s.input, c), Error);
}

TEST(Properties, TranslationInvariance) {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    const Mesh mesh = random_mesh(rng, uniform_int(rng, 6, 40));
    auto c = small_config(3, true, true);
    const std::vector<Edge> ce{{0, mesh.size() - 1}, {1, mesh.size() / 2}};
    Instance a = make_setup(rng, mesh, c, ce);
    BsmsParams p = init_model(c, 11 + t);
    randomize(p, rng);

    Mesh shifted = mesh;
    RowVector shift(2);
    shift << uniform_real(rng, -5, 5), uniform_real(rng, -5, 5);
    shifted.positions.rowwise() += shift;
    Instance b = make_setup(rng, shifted, c, ce);
    b.input.features = a.input.features;
    b.input.world_positions = a.input.world_positions.rowwise() + shift;
    const Matrix qa = model_forward(p, *a.graph, a.input, c);
    const Matrix qb = model_forward(p, *b.graph, b.input, c);
    EXPECT_LT((qa - qb).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Properties, PermutationEquivariance) {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const Index n = uniform_int(rng, 3, 30);
    const auto edges = random_connected_edges(rng, n, uniform_int(rng, 0, n));
    std::vector<Edge> ce{{uniform_int(rng, 0, n - 1), uniform_int(rng, 0, n - 1)}};
    const Matrix pos = random_matrix(rng, n, 2, 3.0);
    auto c = small_config(3, true, true);
    HierarchyOptions o;
    o.depth = 3;
    const auto adj = build_adjacency(n, edges);
    const auto contact = build_adjacency(n, ce);
    auto h1 = std::make_shared<Hierarchy>(build_hierarchy(adj, pos, contact, o));

    // Relabel level 0 by pi and every coarse level by the induced sorted order.
    const auto pi = random_permutation(rng, n);
    std::vector<Edge> pe, pce;
    for (const auto& [a, b] : edges) pe.emplace_back(pi[a], pi[b]);
    for (const auto& [a, b] : ce) pce.emplace_back(pi[a], pi[b]);
    std::vector<std::vector<Index>> seeds;
    std::vector<Index> sigma = pi;
    for (int l = 0; l + 1 < h1->depth(); ++l) {
      std::vector<Index> s;
      for (Index x : h1->plans[l].seeds) s.push_back(sigma[x]);
      std::sort(s.begin(), s.end());
      seeds.push_back(s);
      const auto& pooled = h1->plans[l].pooled;
      std::vector<Index> images;
      for (Index x : pooled) images.push_back(sigma[x]);
      std::vector<Index> sorted = images;
      std::sort(sorted.begin(), sorted.end());
      std::vector<Index> next(pooled.size());
      for (std::size_t k = 0; k < pooled.size(); ++k) {
        next[k] = static_cast<Index>(std::lower_bound(sorted.begin(), sorted.end(), images[k]) - sorted.begin());
      }
      sigma = next;
    }
    auto h2 = std::make_shared<Hierarchy>(build_with_seeds(build_adjacency(n, pe), permute_rows(pos, pi),
                                                           build_adjacency(n, pce), seeds, Parity::Even));
    ASSERT_EQ(h2->level_sizes(), h1->level_sizes());

    BsmsParams p = init_model(c, 100 + t);
    randomize(p, rng);
    ModelInput in1{random_matrix(rng, n, c.input_width()), pos + random_matrix(rng, n, 2, 0.2)};
    ModelInput in2{permute_rows(in1.features, pi), permute_rows(in1.world_positions, pi)};
    const Matrix q1 = model_forward(p, ModelGraph(h1, c), in1, c);
    const Matrix q2 = model_forward(p, ModelGraph(h2, c), in2, c);
    EXPECT_LT((permute_rows(q1, pi) - q2).cwiseAbs().maxCoeff(), 1e-10) << "trial " << t;
  }
}

TEST(Backward, EndToEndFiniteDifferences) {
  Rng rng(13);
  for (auto mode : {TransitionMode::Weighted, TransitionMode::GraphConv, TransitionMode::None}) {
    auto c = small_config(2, true, true);
    c.transition = mode;
    const Mesh mesh = triangulation_mesh(rng, 11);
    Instance s = make_setup(rng, mesh, c, {{0, 10}, {3, 7}});
    BsmsParams p = init_model(c, 13);
    randomize(p, rng);
    const Matrix target = random_matrix(rng, mesh.size(), c.output_width());
    std::string where;
    EXPECT_LT(model_gradcheck(p, s, target, &where), 1e-4) << to_string(mode) << " worst at " << where;
  }
}

TEST(Backward, NoSkipNoLayerNorm) {
  Rng rng(14);
  auto c = small_config(2, false, false);
  c.skip_connections = false;
  c.layernorm = false;
  Instance s = make_setup(rng, grid_mesh(rng, 3, 4), c);
  BsmsParams p = init_model(c, 14);
  randomize(p, rng);
  std::string where;
  EXPECT_LT(model_gradcheck(p, s, random_matrix(rng, 12, 2), &where), 1e-4) << where;
}

TEST(Checkpoint, RoundTripAndValidation) {
  auto c = small_config(3, true, true);
  const BsmsParams p = init_model(c, 15);
  const auto j = params_to_json(p);
  const BsmsParams back = params_from_json(j, c);
  std::vector<Matrix> a, b;
  p.for_each([&](const std::string&, const Matrix& m) { a.push_back(m); });
  back.for_each([&](const std::string&, const Matrix& m) { b.push_back(m); });
  EXPECT_EQ(a, b);
  EXPECT_EQ(params_to_json(back), j);
  EXPECT_TRUE(j["tensors"].contains("blocks.bottom.node.w1"));
  EXPECT_TRUE(j["tensors"].contains("blocks.up_0.edge1.w1"));

  auto extra = j;
  extra["tensors"]["stray"] = j["tensors"]["decoder.b3"];
  EXPECT_THROW(params_from_json(extra, c), Error);
  auto c2 = c;
  c2.latent = 5;
  EXPECT_THROW(params_from_json(j, c2), Error);
}

TEST(Init, SeededAndDistinctPerMlp) {
  auto c = small_config(2, false, false);
  const BsmsParams a = init_model(c, 16), b = init_model(c, 16), d = init_model(c, 17);
  EXPECT_EQ(params_to_json(a), params_to_json(b));
  EXPECT_NE(params_to_json(a), params_to_json(d));
  EXPECT_NE(a.blocks[0].node.w1, a.blocks[2].node.w1);
}
