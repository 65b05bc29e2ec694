#pragma once

// Encode-process-decode network over a bi-stride hierarchy: one message
// passing block per level visit on a fine -> coarse -> fine V-cycle, with
// non-parametric transitions between levels.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsms/hierarchy.hpp"
#include "bsms/nn.hpp"
#include "bsms/transition.hpp"
#include "bsms/types.hpp"

namespace bsms {

/// How a target relates to the input state.
enum class TaskMode {
  Steady,  // target is the output field at the same step
  Delta,   // target is next - current; rollout integrates (first order)
  Next,    // target is the output field at the next step
};

TaskMode parse_task_mode(const std::string& s);
std::string to_string(TaskMode m);

struct FieldBinding {
  std::string name;
  int width = 1;

  bool operator==(const FieldBinding&) const = default;
};

/// Offset features prepended to the sender/receiver latents of one edge set.
struct EdgeSetSpec {
  bool material = true;  // X_i - X_j and |X_i - X_j| from rest positions
  bool world = false;    // x_i - x_j and |x_i - x_j| from the world-position field

  bool operator==(const EdgeSetSpec&) const = default;
};

struct ModelConfig {
  int latent = 128;
  int hidden = 128;
  int depth = 1;
  int dim = 2;
  int node_types = 1;
  std::vector<FieldBinding> inputs;
  std::vector<FieldBinding> outputs;
  /// Edge set 0 is the mesh adjacency, edge set 1 (if present) the contact one.
  std::vector<EdgeSetSpec> edge_sets{EdgeSetSpec{}};
  std::string world_position_field;
  TransitionMode transition = TransitionMode::Weighted;
  TaskMode task = TaskMode::Delta;
  bool skip_connections = true;
  bool residual = true;
  bool layernorm = true;

  int field_width() const;  // sum of input field widths
  int input_width() const;  // node-type one-hot + field width
  int output_width() const;
  int edge_feature_width(int set) const;
  int mp_block_count() const { return 2 * depth - 1; }
  bool uses_world_positions() const;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct MpBlockParams {
  std::vector<MlpParams> edge;  // one per edge set
  MlpParams node;
};

/// Blocks are ordered by visit: down_0 .. down_{d-2}, bottom, up_{d-2} .. up_0.
struct BsmsParams {
  MlpParams encoder;
  MlpParams decoder;
  std::vector<MpBlockParams> blocks;

  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;
  BsmsParams zeros_like() const;
  std::size_t parameter_count() const;
};

BsmsParams init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Name of block `b` in visit order, e.g. "down_0", "bottom", "up_0".
std::string block_name(int block, int depth);

/// Directed edge list of one edge set at one level, receivers ascending and
/// senders ascending within a receiver.
struct EdgeList {
  std::vector<Index> receivers;
  std::vector<Index> senders;
  Matrix material_offsets;  // E x (dim + 1) when the set uses material offsets

  std::size_t size() const { return receivers.size(); }
};

/// Hierarchy plus the per-level edge lists and cached material offsets the
/// model needs. Immutable once built.
class ModelGraph {
 public:
  ModelGraph(std::shared_ptr<const Hierarchy> hierarchy, const ModelConfig& cfg);

  const Hierarchy& hierarchy() const { return *hierarchy_; }
  std::shared_ptr<const Hierarchy> shared_hierarchy() const { return hierarchy_; }
  const EdgeList& edges(int level, int set) const { return edges_[level][set]; }
  /// For each node of `level`, the finest-level node it descends from.
  const std::vector<Index>& origin(int level) const { return origin_[level]; }
  Index size() const { return hierarchy_->levels.front().size(); }

 private:
  std::shared_ptr<const Hierarchy> hierarchy_;
  std::vector<std::vector<EdgeList>> edges_;
  std::vector<std::vector<Index>> origin_;
};

/// Encoder input rows (already normalized) plus optional world positions.
struct ModelInput {
  Matrix features;         // n x input_width
  Matrix world_positions;  // n x dim, empty unless some edge set uses world offsets
};

struct MpCache {
  std::vector<MlpCache> edge;
  MlpCache node;
};

/// Everything backpropagation needs from a forward pass.
struct ForwardTape {
  MlpCache encoder;
  std::vector<MpCache> blocks;
  MlpCache decoder;
  int mp_blocks_run = 0;
};

/// V = encoder(features)
Matrix encode(const MlpParams& encoder, const Matrix& features, const ModelConfig& cfg, MlpCache* cache = nullptr);

/// One message-passing pass: per-edge MLPs on (offset, v_i, v_j), summed
/// per receiver, then v' = v + f_V(v, sum e^1, ..., sum e^S).
Matrix message_pass(const MpBlockParams& block, const std::vector<const EdgeList*>& edge_sets,
                    const std::vector<Matrix>& offsets, const Matrix& v, MpCache* cache = nullptr);

/// Offsets for every edge set at `level`, per the configured feature spec.
std::vector<Matrix> edge_offsets(const ModelGraph& graph, const ModelConfig& cfg, int level,
                                 const Matrix& world_positions);

/// q = decoder(V) in normalized units.
Matrix decode(const MlpParams& decoder, const Matrix& v, const ModelConfig& cfg, MlpCache* cache = nullptr);

/// Full V-cycle. Returns the normalized prediction, one row per fine node.
Matrix model_forward(const BsmsParams& params, const ModelGraph& graph, const ModelInput& input,
                     const ModelConfig& cfg, ForwardTape* tape = nullptr);

/// Accumulates dL/dparams into `grads` given dL/d(prediction).
void model_backward(const BsmsParams& params, const ModelGraph& graph, const ModelInput& input,
                    const ModelConfig& cfg, const ForwardTape& tape, const Matrix& grad_output, BsmsParams& grads);

/// Checkpoint: config plus every named tensor with its shape.
nlohmann::json params_to_json(const BsmsParams& params);
BsmsParams params_from_json(const nlohmann::json& j, const ModelConfig& cfg);

}  // namespace bsms
