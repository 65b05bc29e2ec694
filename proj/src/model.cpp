#include "bsms/model.hpp"

#include <set>

#include "bsms/error.hpp"

namespace bsms {

using nlohmann::json;

TaskMode parse_task_mode(const std::string& s) {
  if (s == "steady") return TaskMode::Steady;
  if (s == "delta") return TaskMode::Delta;
  if (s == "next") return TaskMode::Next;
  throw invalid_argument("unknown task mode '" + s + "' (expected steady|delta|next)");
}

std::string to_string(TaskMode m) {
  switch (m) {
    case TaskMode::Steady:
      return "steady";
    case TaskMode::Delta:
      return "delta";
    case TaskMode::Next:
      return "next";
  }
  return "delta";
}

// ---------------------------------------------------------------------------
// ModelConfig

int ModelConfig::field_width() const {
  int w = 0;
  for (const auto& b : inputs) w += b.width;
  return w;
}

int ModelConfig::input_width() const { return node_types + field_width(); }

int ModelConfig::output_width() const {
  int w = 0;
  for (const auto& b : outputs) w += b.width;
  return w;
}

int ModelConfig::edge_feature_width(int set) const {
  const auto& spec = edge_sets.at(static_cast<std::size_t>(set));
  return (spec.material ? dim + 1 : 0) + (spec.world ? dim + 1 : 0);
}

bool ModelConfig::uses_world_positions() const {
  for (const auto& s : edge_sets) {
    if (s.world) return true;
  }
  return false;
}

void ModelConfig::validate() const {
  if (latent < 1 || hidden < 1) throw invalid_argument("model config: latent and hidden widths must be positive");
  if (depth < 1) throw invalid_argument("model config: depth must be at least 1");
  if (dim < 1 || dim > 3) throw invalid_argument("model config: dim must be 1, 2 or 3");
  if (node_types < 0) throw invalid_argument("model config: node_types must be non-negative");
  if (edge_sets.empty() || edge_sets.size() > 2) {
    throw invalid_argument("model config: need 1 (mesh) or 2 (mesh + contact) edge sets");
  }
  if (input_width() < 1) throw invalid_argument("model config: encoder has no inputs");
  if (outputs.empty() || output_width() < 1) throw invalid_argument("model config: no output fields bound");
  for (const auto& b : inputs) {
    if (b.name.empty() || b.width < 1) throw invalid_argument("model config: bad input binding '" + b.name + "'");
  }
  for (const auto& b : outputs) {
    if (b.name.empty() || b.width < 1) throw invalid_argument("model config: bad output binding '" + b.name + "'");
  }
  if (task == TaskMode::Delta || task == TaskMode::Next) {
    // Rollout derives the next input from the output.
    for (const auto& o : outputs) {
      bool found = false;
      for (const auto& i : inputs) found = found || (i == o);
      if (!found) {
        throw invalid_argument("model config: output field '" + o.name +
                               "' must also be an input of the same width for delta/next tasks");
      }
    }
  }
  if (uses_world_positions() && world_position_field.empty()) {
    throw invalid_argument("model config: world offsets requested but world_position_field is empty");
  }
}

namespace {

json bindings_to_json(const std::vector<FieldBinding>& bs) {
  json out = json::array();
  for (const auto& b : bs) out.push_back({{"name", b.name}, {"width", b.width}});
  return out;
}

std::vector<FieldBinding> bindings_from_json(const json& j) {
  std::vector<FieldBinding> out;
  for (const auto& b : j) out.push_back({b.at("name").get<std::string>(), b.value("width", 1)});
  return out;
}

}  // namespace

json ModelConfig::to_json() const {
  json sets = json::array();
  for (const auto& s : edge_sets) sets.push_back({{"material", s.material}, {"world", s.world}});
  return {{"latent", latent},
          {"hidden", hidden},
          {"depth", depth},
          {"dim", dim},
          {"node_types", node_types},
          {"inputs", bindings_to_json(inputs)},
          {"outputs", bindings_to_json(outputs)},
          {"edge_sets", sets},
          {"world_position_field", world_position_field},
          {"transition", to_string(transition)},
          {"task", to_string(task)},
          {"skip_connections", skip_connections},
          {"residual", residual},
          {"layernorm", layernorm}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  static const std::set<std::string> known = {"latent",    "hidden",     "depth",          "dim",
                                              "node_types", "inputs",    "outputs",        "edge_sets",
                                              "world_position_field",    "transition",     "task",
                                              "skip_connections",        "residual",       "layernorm"};
  if (!j.is_object()) throw invalid_argument("model config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw invalid_argument("model config: unknown key '" + key + "'");
  }
  ModelConfig c;
  try {
    c.latent = j.value("latent", c.latent);
    c.hidden = j.value("hidden", c.hidden);
    c.depth = j.value("depth", c.depth);
    c.dim = j.value("dim", c.dim);
    c.node_types = j.value("node_types", c.node_types);
    if (j.contains("inputs")) c.inputs = bindings_from_json(j.at("inputs"));
    if (j.contains("outputs")) c.outputs = bindings_from_json(j.at("outputs"));
    if (j.contains("edge_sets")) {
      c.edge_sets.clear();
      for (const auto& s : j.at("edge_sets")) c.edge_sets.push_back({s.value("material", true), s.value("world", false)});
    }
    c.world_position_field = j.value("world_position_field", std::string());
    c.transition = parse_transition_mode(j.value("transition", std::string("weighted")));
    c.task = parse_task_mode(j.value("task", std::string("delta")));
    c.skip_connections = j.value("skip_connections", c.skip_connections);
    c.residual = j.value("residual", c.residual);
    c.layernorm = j.value("layernorm", c.layernorm);
  } catch (const json::exception& e) {
    throw invalid_argument(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

void BsmsParams::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
  const int depth = (static_cast<int>(blocks.size()) + 1) / 2;
  encoder.for_each([&](const std::string& n, Matrix& m) { fn("encoder." + n, m); });
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string prefix = "blocks." + block_name(static_cast<int>(b), depth) + ".";
    for (std::size_t s = 0; s < blocks[b].edge.size(); ++s) {
      blocks[b].edge[s].for_each([&](const std::string& n, Matrix& m) { fn(prefix + "edge" + std::to_string(s) + "." + n, m); });
    }
    blocks[b].node.for_each([&](const std::string& n, Matrix& m) { fn(prefix + "node." + n, m); });
  }
  decoder.for_each([&](const std::string& n, Matrix& m) { fn("decoder." + n, m); });
}

void BsmsParams::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<BsmsParams*>(this)->for_each([&](const std::string& n, Matrix& m) { fn(n, m); });
}

BsmsParams BsmsParams::zeros_like() const {
  BsmsParams z = *this;
  z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

std::size_t BsmsParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

std::string block_name(int block, int depth) {
  if (block < depth - 1) return "down_" + std::to_string(block);
  if (block == depth - 1) return "bottom";
  return "up_" + std::to_string(2 * depth - 2 - block);
}

namespace {

// splitmix64: decorrelates per-MLP seeds derived from one model seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

MlpShape shape_of(int in, int hidden, int out, bool layernorm, bool residual) {
  return {in, hidden, out, layernorm, MlpShape::residual_for(in, out, residual)};
}

}  // namespace

BsmsParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::uint64_t k = 0;
  BsmsParams p;
  const int L = cfg.latent;
  const int S = static_cast<int>(cfg.edge_sets.size());
  p.encoder = init_params(shape_of(cfg.input_width(), cfg.hidden, L, cfg.layernorm, cfg.residual), mix_seed(seed, k++));
  for (int b = 0; b < cfg.mp_block_count(); ++b) {
    MpBlockParams block;
    for (int s = 0; s < S; ++s) {
      const int in = cfg.edge_feature_width(s) + 2 * L;
      block.edge.push_back(init_params(shape_of(in, cfg.hidden, L, cfg.layernorm, cfg.residual), mix_seed(seed, k++)));
    }
    block.node = init_params(shape_of(L * (1 + S), cfg.hidden, L, cfg.layernorm, cfg.residual), mix_seed(seed, k++));
    p.blocks.push_back(std::move(block));
  }
  // The nodal decoder carries no LayerNorm.
  p.decoder = init_params(shape_of(L, cfg.hidden, cfg.output_width(), false, cfg.residual), mix_seed(seed, k++));
  return p;
}

// ---------------------------------------------------------------------------
// Graph preparation

namespace {

EdgeList directed_edges(const Adjacency* adj, const Matrix& positions, bool with_material) {
  EdgeList list;
  if (adj) {
    list.receivers.reserve(static_cast<std::size_t>(adj->directed_edge_count()));
    list.senders.reserve(static_cast<std::size_t>(adj->directed_edge_count()));
    for (Index i = 0; i < adj->size(); ++i) {
      for (Index j : adj->neighbors(i)) {
        list.receivers.push_back(i);
        list.senders.push_back(j);
      }
    }
  }
  if (with_material) {
    const auto dim = positions.cols();
    list.material_offsets.resize(static_cast<Eigen::Index>(list.size()), dim + 1);
    for (std::size_t e = 0; e < list.size(); ++e) {
      const auto r = static_cast<Eigen::Index>(e);
      list.material_offsets.row(r).head(dim) = positions.row(list.receivers[e]) - positions.row(list.senders[e]);
      list.material_offsets(r, dim) = list.material_offsets.row(r).head(dim).norm();
    }
  }
  return list;
}

}  // namespace

ModelGraph::ModelGraph(std::shared_ptr<const Hierarchy> hierarchy, const ModelConfig& cfg) : hierarchy_(std::move(hierarchy)) {
  if (!hierarchy_) throw invalid_argument("ModelGraph: null hierarchy");
  if (hierarchy_->depth() != cfg.depth) {
    throw invalid_argument("ModelGraph: hierarchy has " + std::to_string(hierarchy_->depth()) +
                           " levels, model depth is " + std::to_string(cfg.depth));
  }
  if (hierarchy_->levels.front().positions.cols() != cfg.dim) {
    throw invalid_argument("ModelGraph: hierarchy positions have dimension " +
                           std::to_string(hierarchy_->levels.front().positions.cols()) + ", model dim is " +
                           std::to_string(cfg.dim));
  }
  for (int l = 0; l < hierarchy_->depth(); ++l) {
    const auto& level = hierarchy_->levels[l];
    std::vector<EdgeList> sets;
    for (std::size_t s = 0; s < cfg.edge_sets.size(); ++s) {
      const Adjacency* adj = s == 0 ? &level.adjacency : (level.contact ? &*level.contact : nullptr);
      sets.push_back(directed_edges(adj, level.positions, cfg.edge_sets[s].material));
    }
    edges_.push_back(std::move(sets));
    origin_.push_back(hierarchy_->origin(l));
  }
}

// ---------------------------------------------------------------------------
// Forward pieces

Matrix encode(const MlpParams& encoder, const Matrix& features, const ModelConfig& cfg, MlpCache* cache) {
  if (features.cols() != cfg.input_width()) {
    throw invalid_argument("encode: input rows have width " + std::to_string(features.cols()) + ", config expects " +
                           std::to_string(cfg.input_width()));
  }
  return mlp_apply(encoder, features, cache);
}

Matrix decode(const MlpParams& decoder, const Matrix& v, const ModelConfig& cfg, MlpCache* cache) {
  if (decoder.output_dim() != cfg.output_width()) {
    throw invalid_argument("decode: decoder emits " + std::to_string(decoder.output_dim()) + " columns, config binds " +
                           std::to_string(cfg.output_width()));
  }
  return mlp_apply(decoder, v, cache);
}

std::vector<Matrix> edge_offsets(const ModelGraph& graph, const ModelConfig& cfg, int level,
                                 const Matrix& world_positions) {
  std::vector<Matrix> out;
  const auto dim = static_cast<Eigen::Index>(cfg.dim);
  for (std::size_t s = 0; s < cfg.edge_sets.size(); ++s) {
    const auto& spec = cfg.edge_sets[s];
    const auto& list = graph.edges(level, static_cast<int>(s));
    const auto rows = static_cast<Eigen::Index>(list.size());
    Matrix off(rows, cfg.edge_feature_width(static_cast<int>(s)));
    Eigen::Index col = 0;
    if (spec.material) {
      off.leftCols(dim + 1) = list.material_offsets;
      col += dim + 1;
    }
    if (spec.world) {
      if (world_positions.rows() != graph.size() || world_positions.cols() != dim) {
        throw invalid_argument("edge_offsets: world positions must be " + std::to_string(graph.size()) + "x" +
                               std::to_string(cfg.dim));
      }
      const auto& origin = graph.origin(level);
      for (Eigen::Index e = 0; e < rows; ++e) {
        const auto d = (world_positions.row(origin[list.receivers[e]]) - world_positions.row(origin[list.senders[e]])).eval();
        off.block(e, col, 1, dim) = d;
        off(e, col + dim) = d.norm();
      }
    }
    out.push_back(std::move(off));
  }
  return out;
}

Matrix message_pass(const MpBlockParams& block, const std::vector<const EdgeList*>& edge_sets,
                    const std::vector<Matrix>& offsets, const Matrix& v, MpCache* cache) {
  if (edge_sets.size() != block.edge.size() || offsets.size() != block.edge.size()) {
    throw invalid_argument("message_pass: block has " + std::to_string(block.edge.size()) + " edge MLPs, got " +
                           std::to_string(edge_sets.size()) + " edge sets");
  }
  const auto n = v.rows();
  const auto L = v.cols();
  const auto S = static_cast<Eigen::Index>(edge_sets.size());
  Matrix node_in(n, L * (1 + S));
  node_in.leftCols(L) = v;
  if (cache) cache->edge.resize(edge_sets.size());

  for (Eigen::Index s = 0; s < S; ++s) {
    const auto& list = *edge_sets[s];
    const auto& off = offsets[s];
    const auto E = static_cast<Eigen::Index>(list.size());
    const auto ow = off.cols();
    if (off.rows() != E) throw invalid_argument("message_pass: offsets/edge count mismatch");
    Matrix edge_in(E, ow + 2 * L);
    for (Eigen::Index e = 0; e < E; ++e) {
      edge_in.row(e).head(ow) = off.row(e);
      edge_in.row(e).segment(ow, L) = v.row(list.receivers[e]);
      edge_in.row(e).segment(ow + L, L) = v.row(list.senders[e]);
    }
    const Matrix flow = mlp_apply(block.edge[s], edge_in, cache ? &cache->edge[s] : nullptr);
    // Receivers ascending, senders ascending within: a fixed summation order.
    auto agg = node_in.middleCols(L * (1 + s), L);
    agg.setZero();
    for (Eigen::Index e = 0; e < E; ++e) agg.row(list.receivers[e]) += flow.row(e);
  }
  return v + mlp_apply(block.node, node_in, cache ? &cache->node : nullptr);
}

namespace {

Matrix message_pass_backward(const MpBlockParams& block, const std::vector<const EdgeList*>& edge_sets,
                             const MpCache& cache, const Matrix& grad_out, MpBlockParams& grads) {
  const auto L = grad_out.cols();
  Matrix dv = grad_out;
  const Matrix dnode_in = mlp_grad(block.node, cache.node, grad_out, grads.node);
  dv += dnode_in.leftCols(L);
  for (std::size_t s = 0; s < edge_sets.size(); ++s) {
    const auto& list = *edge_sets[s];
    const auto E = static_cast<Eigen::Index>(list.size());
    const auto dagg = dnode_in.middleCols(L * (1 + static_cast<Eigen::Index>(s)), L);
    Matrix dflow(E, L);
    for (Eigen::Index e = 0; e < E; ++e) dflow.row(e) = dagg.row(list.receivers[e]);
    const Matrix dedge_in = mlp_grad(block.edge[s], cache.edge[s], dflow, grads.edge[s]);
    const auto ow = dedge_in.cols() - 2 * L;
    for (Eigen::Index e = 0; e < E; ++e) {
      dv.row(list.receivers[e]) += dedge_in.row(e).segment(ow, L);
      dv.row(list.senders[e]) += dedge_in.row(e).segment(ow + L, L);
    }
  }
  return dv;
}

std::vector<const EdgeList*> level_edges(const ModelGraph& graph, int level, std::size_t sets) {
  std::vector<const EdgeList*> out;
  for (std::size_t s = 0; s < sets; ++s) out.push_back(&graph.edges(level, static_cast<int>(s)));
  return out;
}

void check_params(const BsmsParams& params, const ModelConfig& cfg) {
  if (static_cast<int>(params.blocks.size()) != cfg.mp_block_count()) {
    throw invalid_argument("model: parameters hold " + std::to_string(params.blocks.size()) + " MP blocks, depth " +
                           std::to_string(cfg.depth) + " needs " + std::to_string(cfg.mp_block_count()));
  }
}

}  // namespace

Matrix model_forward(const BsmsParams& params, const ModelGraph& graph, const ModelInput& input,
                     const ModelConfig& cfg, ForwardTape* tape) {
  check_params(params, cfg);
  const int d = cfg.depth;
  if (graph.hierarchy().depth() != d) throw invalid_argument("model_forward: hierarchy depth differs from config depth");
  if (input.features.rows() != graph.size()) {
    throw invalid_argument("model_forward: " + std::to_string(input.features.rows()) + " input rows for " +
                           std::to_string(graph.size()) + " nodes");
  }
  const auto& h = graph.hierarchy();
  if (tape) {
    tape->blocks.assign(static_cast<std::size_t>(cfg.mp_block_count()), {});
    tape->mp_blocks_run = 0;
  }
  std::vector<std::vector<Matrix>> offsets(static_cast<std::size_t>(d));
  for (int l = 0; l < d; ++l) offsets[l] = edge_offsets(graph, cfg, l, input.world_positions);

  auto run_block = [&](int b, int level, const Matrix& v) {
    if (tape) ++tape->mp_blocks_run;
    return message_pass(params.blocks[b], level_edges(graph, level, cfg.edge_sets.size()), offsets[level], v,
                        tape ? &tape->blocks[b] : nullptr);
  };

  Matrix v = encode(params.encoder, input.features, cfg, tape ? &tape->encoder : nullptr);
  std::vector<Matrix> skips(static_cast<std::size_t>(d > 1 ? d - 1 : 0));
  for (int l = 0; l + 1 < d; ++l) {
    v = run_block(l, l, v);
    skips[l] = v;
    v = downsample(v, h.transitions[l], cfg.transition);
  }
  v = run_block(d - 1, d - 1, v);
  for (int l = d - 2; l >= 0; --l) {
    Matrix up = upsample(v, h.transitions[l], cfg.transition);
    v = cfg.skip_connections ? Matrix(skips[l] + up) : up;
    v = run_block(2 * d - 2 - l, l, v);
  }
  return decode(params.decoder, v, cfg, tape ? &tape->decoder : nullptr);
}

void model_backward(const BsmsParams& params, const ModelGraph& graph, const ModelInput& input,
                    const ModelConfig& cfg, const ForwardTape& tape, const Matrix& grad_output, BsmsParams& grads) {
  (void)input;
  check_params(params, cfg);
  const int d = cfg.depth;
  const auto& h = graph.hierarchy();
  const auto sets = cfg.edge_sets.size();

  Matrix dv = mlp_grad(params.decoder, tape.decoder, grad_output, grads.decoder);
  std::vector<Matrix> dskips(static_cast<std::size_t>(d > 1 ? d - 1 : 0));
  for (int l = 0; l + 1 < d; ++l) {
    const int b = 2 * d - 2 - l;
    dv = message_pass_backward(params.blocks[b], level_edges(graph, l, sets), tape.blocks[b], dv, grads.blocks[b]);
    if (cfg.skip_connections) dskips[l] = dv;
    dv = upsample_adjoint(dv, h.transitions[l], cfg.transition);
  }
  dv = message_pass_backward(params.blocks[d - 1], level_edges(graph, d - 1, sets), tape.blocks[d - 1], dv,
                             grads.blocks[d - 1]);
  for (int l = d - 2; l >= 0; --l) {
    dv = downsample_adjoint(dv, h.transitions[l], cfg.transition);
    if (cfg.skip_connections) dv += dskips[l];
    dv = message_pass_backward(params.blocks[l], level_edges(graph, l, sets), tape.blocks[l], dv, grads.blocks[l]);
  }
  mlp_grad(params.encoder, tape.encoder, dv, grads.encoder);
}

// ---------------------------------------------------------------------------
// Checkpoints

json params_to_json(const BsmsParams& params) {
  json tensors = json::object();
  params.for_each([&](const std::string& name, const Matrix& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    tensors[name] = {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
  });
  return {{"format", "bsms-params-v1"}, {"layout", "row-major"}, {"tensors", std::move(tensors)}};
}

BsmsParams params_from_json(const json& j, const ModelConfig& cfg) {
  BsmsParams p = init_model(cfg, 0);
  const auto& tensors = j.at("tensors");
  std::size_t used = 0;
  p.for_each([&](const std::string& name, Matrix& m) {
    if (!tensors.contains(name)) throw invalid_argument("checkpoint: missing tensor '" + name + "'");
    const auto& t = tensors.at(name);
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
      throw invalid_argument("checkpoint: tensor '" + name + "' has a shape that does not match the config");
    }
    const auto data = t.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != m.size()) throw invalid_argument("checkpoint: tensor '" + name + "' is truncated");
    std::copy(data.begin(), data.end(), m.data());
    ++used;
  });
  if (used != tensors.size()) throw invalid_argument("checkpoint: contains tensors the config does not use");
  return p;
}

}  // namespace bsms
