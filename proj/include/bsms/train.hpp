#pragma once

// Supervised single-step training, autoregressive rollout and RMSE metrics.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsms/mesh_io.hpp"
#include "bsms/model.hpp"
#include "bsms/types.hpp"

namespace bsms {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 1;
  double learning_rate = 1e-3;
  double decay = 0.5;
  /// Epochs between decays; 0 means a third of the run.
  int decay_every = 0;
  /// Noise standard deviation per input field, in problem units.
  std::map<std::string, double> noise;
  std::uint64_t seed = 0;

  int decay_interval() const;
  double learning_rate_at(int epoch) const;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Per-column affine standardization.
struct Normalizer {
  RowVector mean;
  RowVector std;

  static constexpr double kStdFloor = 1e-8;

  Matrix normalize(const Matrix& x) const;
  Matrix denormalize(const Matrix& x) const;
  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);
  bool operator==(const Normalizer&) const = default;
};

/// Column statistics over the stacked rows; std floored at kStdFloor.
Normalizer fit_normalizer(const std::vector<const Matrix*>& blocks);

/// One supervised pair on one graph. Field rows are raw (unnormalized)
/// concatenations of the bound inputs in config order.
struct Sample {
  std::shared_ptr<const ModelGraph> graph;
  Matrix one_hot;  // n x node_types
  Matrix fields;   // n x field_width
  Matrix target;   // n x output_width, per task mode
  Matrix world_positions;
};

using Dataset = std::vector<Sample>;

struct Normalizers {
  Normalizer input;
  Normalizer target;

  nlohmann::json to_json() const;
  static Normalizers from_json(const nlohmann::json& j);
};

/// Statistics over every sample's fields and targets.
Normalizers fit_normalizers(const Dataset& data);

/// Node-type one-hot rows; throws on a type outside [0, node_types).
Matrix one_hot_types(const std::vector<int>& node_type, int node_types);

/// Concatenates the bound input (or output) fields of one step.
Matrix gather_fields(const FieldSample& step, const std::vector<FieldBinding>& bindings);

/// Column range of a bound field inside the concatenated row.
std::pair<int, int> field_columns(const std::vector<FieldBinding>& bindings, const std::string& name);

/// Supervised pairs from one trajectory: every step (steady) or every
/// consecutive pair (delta, next).
Dataset make_samples(const Mesh& mesh, const Trajectory& traj, std::shared_ptr<const ModelGraph> graph,
                     const ModelConfig& cfg);

/// Adds N(0, scale^2) to the bound input fields. In delta mode the target
/// is reduced by the noise on output fields so it still points at the true
/// next state.
Sample inject_noise(const Sample& s, const std::map<std::string, double>& scales, const ModelConfig& cfg,
                    std::mt19937_64& rng);

struct AdamState {
  BsmsParams m;
  BsmsParams v;
  long step = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  static AdamState for_params(const BsmsParams& p);
};

void adam_update(BsmsParams& params, const BsmsParams& grads, AdamState& state, double lr);

/// Normalized encoder input for one sample.
ModelInput model_input(const Sample& s, const Normalizers& norm);

/// Mean squared error over nodes and components in normalized units,
/// averaged over the batch, and its gradient.
double batch_loss(const BsmsParams& params, const std::vector<const Sample*>& batch, const Normalizers& norm,
                  const ModelConfig& cfg, BsmsParams* grads);

/// One Adam update on the batch; returns the pre-update loss. Throws a
/// numerical error on a non-finite loss.
double train_step(BsmsParams& params, const std::vector<const Sample*>& batch, const Normalizers& norm,
                  const ModelConfig& cfg, AdamState& adam, double lr);

struct TrainReport {
  std::vector<double> epoch_loss;
};

/// Called after every epoch; returning false stops training early.
using EpochCallback = std::function<bool(int epoch, double loss, double lr)>;

/// Shuffled mini-batch training with fresh noise every epoch. Fully
/// determined by (params, data, configs).
TrainReport train(BsmsParams& params, const Dataset& data, const Normalizers& norm, const ModelConfig& cfg,
                  const TrainConfig& tcfg, const EpochCallback& on_epoch = {});

/// Raw output rows from raw input field rows.
using StepFunction = std::function<Matrix(const Matrix& fields, int step)>;

/// Model step for a fixed graph and node types, denormalized.
StepFunction model_step(const BsmsParams& params, std::shared_ptr<const ModelGraph> graph, Matrix one_hot,
                        const Matrix& rest_positions, const Normalizers& norm, const ModelConfig& cfg);

/// p0 -> q1 -> p1 -> ... Outputs one row block per step: the predicted
/// output fields (state after integration for delta mode).
std::vector<Matrix> rollout(const StepFunction& step, const Matrix& initial_fields, const ModelConfig& cfg, int steps);

struct Metrics {
  double rmse_1 = 0.0;
  double rmse_50 = 0.0;
  double rmse_all = 0.0;
  int horizon_50 = 0;  // steps actually used for rmse_50
  int steps = 0;
  std::vector<double> per_step;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// RMSE over nodes, components and the first k steps (k = 1, 50, all).
Metrics eval_metrics(const std::vector<Matrix>& predicted, const std::vector<Matrix>& truth);

/// Everything needed to reload a trained model.
struct Checkpoint {
  ModelConfig model;
  Normalizers norm;
  BsmsParams params;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace bsms
