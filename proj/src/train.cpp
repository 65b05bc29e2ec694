#include "bsms/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "bsms/error.hpp"

namespace bsms {

using nlohmann::json;

namespace {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json row_to_json(const RowVector& r) { return std::vector<double>(r.data(), r.data() + r.size()); }

RowVector row_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  RowVector r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r[static_cast<Eigen::Index>(i)] = v[i];
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainConfig

int TrainConfig::decay_interval() const {
  if (decay_every > 0) return decay_every;
  return std::max(1, (epochs + 2) / 3);
}

double TrainConfig::learning_rate_at(int epoch) const {
  return learning_rate * std::pow(decay, static_cast<double>(epoch / decay_interval()));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw invalid_argument("train config: epochs must be positive");
  if (batch_size < 1) throw invalid_argument("train config: batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw invalid_argument("train config: learning_rate must be positive");
  }
  if (!(decay > 0.0) || decay > 1.0) throw invalid_argument("train config: decay must lie in (0, 1]");
  if (decay_every < 0) throw invalid_argument("train config: decay_every must be non-negative");
  for (const auto& [name, scale] : noise) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) {
      throw invalid_argument("train config: noise scale for '" + name + "' must be non-negative");
    }
  }
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},           {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"decay", decay},             {"decay_every", decay_every}, {"noise", noise},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const std::set<std::string> known = {"epochs", "batch_size", "learning_rate", "decay",
                                              "decay_every", "noise", "seed"};
  if (!j.is_object()) throw invalid_argument("train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw invalid_argument("train config: unknown key '" + key + "'");
  }
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.decay = j.value("decay", c.decay);
    c.decay_every = j.value("decay_every", c.decay_every);
    if (j.contains("noise")) c.noise = j.at("noise").get<std::map<std::string, double>>();
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw invalid_argument(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Normalization

Matrix Normalizer::normalize(const Matrix& x) const {
  if (x.cols() != mean.size()) throw invalid_argument("normalize: width mismatch");
  return ((x.rowwise() - mean).array().rowwise() / std.array()).matrix();
}

Matrix Normalizer::denormalize(const Matrix& x) const {
  if (x.cols() != mean.size()) throw invalid_argument("denormalize: width mismatch");
  return ((x.array().rowwise() * std.array()).rowwise() + mean.array()).matrix();
}

json Normalizer::to_json() const { return {{"mean", row_to_json(mean)}, {"std", row_to_json(std)}}; }

Normalizer Normalizer::from_json(const json& j) {
  Normalizer n{row_from_json(j.at("mean")), row_from_json(j.at("std"))};
  if (n.mean.size() != n.std.size()) throw invalid_argument("normalizer: mean/std width mismatch");
  if ((n.std.array() <= 0.0).any()) throw invalid_argument("normalizer: std must be positive");
  return n;
}

Normalizer fit_normalizer(const std::vector<const Matrix*>& blocks) {
  if (blocks.empty()) throw invalid_argument("fit_normalizer: empty dataset");
  const auto cols = blocks.front()->cols();
  Eigen::Index rows = 0;
  RowVector sum = RowVector::Zero(cols);
  for (const Matrix* b : blocks) {
    if (b->cols() != cols) throw invalid_argument("fit_normalizer: inconsistent widths");
    rows += b->rows();
    sum += b->colwise().sum();
  }
  if (rows == 0) throw invalid_argument("fit_normalizer: empty dataset");
  Normalizer n;
  n.mean = sum / static_cast<double>(rows);
  RowVector sq = RowVector::Zero(cols);
  for (const Matrix* b : blocks) sq += (b->rowwise() - n.mean).array().square().matrix().colwise().sum();
  n.std = (sq / static_cast<double>(rows)).array().sqrt().max(Normalizer::kStdFloor).matrix();
  if (!n.mean.allFinite() || !n.std.allFinite()) throw numerical_error("fit_normalizer: non-finite statistics");
  return n;
}

json Normalizers::to_json() const { return {{"input", input.to_json()}, {"target", target.to_json()}}; }

Normalizers Normalizers::from_json(const json& j) {
  return {Normalizer::from_json(j.at("input")), Normalizer::from_json(j.at("target"))};
}

Normalizers fit_normalizers(const Dataset& data) {
  std::vector<const Matrix*> in, out;
  for (const auto& s : data) {
    in.push_back(&s.fields);
    out.push_back(&s.target);
  }
  return {fit_normalizer(in), fit_normalizer(out)};
}

// ---------------------------------------------------------------------------
// Samples

Matrix one_hot_types(const std::vector<int>& node_type, int node_types) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(node_type.size()), node_types);
  for (std::size_t i = 0; i < node_type.size(); ++i) {
    const int t = node_type[i];
    if (t < 0 || t >= node_types) {
      throw invalid_argument("node " + std::to_string(i) + " has type " + std::to_string(t) + ", config allows " +
                             std::to_string(node_types));
    }
    m(static_cast<Eigen::Index>(i), t) = 1.0;
  }
  return m;
}

Matrix gather_fields(const FieldSample& step, const std::vector<FieldBinding>& bindings) {
  Eigen::Index rows = -1;
  int width = 0;
  for (const auto& b : bindings) width += b.width;
  Matrix out;
  int col = 0;
  for (const auto& b : bindings) {
    const Matrix& f = step.field(b.name);
    if (f.cols() != b.width) {
      throw invalid_argument("field '" + b.name + "' has " + std::to_string(f.cols()) + " components, config binds " +
                             std::to_string(b.width));
    }
    if (rows < 0) {
      rows = f.rows();
      out.resize(rows, width);
    } else if (f.rows() != rows) {
      throw invalid_argument("field '" + b.name + "' has a different node count");
    }
    out.middleCols(col, b.width) = f;
    col += b.width;
  }
  return out;
}

std::pair<int, int> field_columns(const std::vector<FieldBinding>& bindings, const std::string& name) {
  int col = 0;
  for (const auto& b : bindings) {
    if (b.name == name) return {col, b.width};
    col += b.width;
  }
  throw invalid_argument("field '" + name + "' is not bound");
}

Dataset make_samples(const Mesh& mesh, const Trajectory& traj, std::shared_ptr<const ModelGraph> graph,
                     const ModelConfig& cfg) {
  traj.validate();
  if (traj.node_count() != mesh.size()) {
    throw invalid_argument("trajectory has " + std::to_string(traj.node_count()) + " nodes, mesh has " +
                           std::to_string(mesh.size()));
  }
  if (graph->size() != mesh.size()) throw invalid_argument("graph and mesh node counts differ");
  const bool steady = cfg.task == TaskMode::Steady;
  if (!steady && traj.size() < 2) throw invalid_argument("delta/next tasks need at least 2 trajectory steps");

  std::vector<int> types = mesh.node_type;
  if (types.empty()) types.assign(static_cast<std::size_t>(mesh.size()), 0);
  const Matrix one_hot = one_hot_types(types, cfg.node_types);

  Dataset data;
  const std::size_t count = steady ? traj.size() : traj.size() - 1;
  for (std::size_t t = 0; t < count; ++t) {
    Sample s;
    s.graph = graph;
    s.one_hot = one_hot;
    s.fields = gather_fields(traj.steps[t], cfg.inputs);
    switch (cfg.task) {
      case TaskMode::Steady:
        s.target = gather_fields(traj.steps[t], cfg.outputs);
        break;
      case TaskMode::Delta:
        s.target = gather_fields(traj.steps[t + 1], cfg.outputs) - gather_fields(traj.steps[t], cfg.outputs);
        break;
      case TaskMode::Next:
        s.target = gather_fields(traj.steps[t + 1], cfg.outputs);
        break;
    }
    if (cfg.uses_world_positions()) s.world_positions = traj.steps[t].field(cfg.world_position_field);
    data.push_back(std::move(s));
  }
  return data;
}

Sample inject_noise(const Sample& s, const std::map<std::string, double>& scales, const ModelConfig& cfg,
                    std::mt19937_64& rng) {
  Sample out = s;
  for (const auto& [name, scale] : scales) {
    const auto [col, width] = field_columns(cfg.inputs, name);
    if (scale == 0.0) continue;
    std::normal_distribution<double> normal(0.0, scale);
    Matrix noise(s.fields.rows(), width);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
    out.fields.middleCols(col, width) += noise;
    if (cfg.task == TaskMode::Delta) {
      int ocol = 0;
      for (const auto& b : cfg.outputs) {
        if (b.name == name) out.target.middleCols(ocol, width) -= noise;
        ocol += b.width;
      }
    }
    if (!cfg.world_position_field.empty() && name == cfg.world_position_field && out.world_positions.size() > 0) {
      out.world_positions += noise;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

AdamState AdamState::for_params(const BsmsParams& p) { return {p.zeros_like(), p.zeros_like(), 0}; }

void adam_update(BsmsParams& params, const BsmsParams& grads, AdamState& state, double lr) {
  ++state.step;
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
  std::vector<const Matrix*> g;
  grads.for_each([&](const std::string&, const Matrix& m) { g.push_back(&m); });
  std::vector<Matrix*> m1, m2;
  state.m.for_each([&](const std::string&, Matrix& m) { m1.push_back(&m); });
  state.v.for_each([&](const std::string&, Matrix& m) { m2.push_back(&m); });
  std::size_t k = 0;
  params.for_each([&](const std::string&, Matrix& p) {
    Matrix& m = *m1[k];
    Matrix& v = *m2[k];
    const Matrix& gk = *g[k];
    m = AdamState::kBeta1 * m + (1.0 - AdamState::kBeta1) * gk;
    v = AdamState::kBeta2 * v + (1.0 - AdamState::kBeta2) * gk.cwiseProduct(gk);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + AdamState::kEps);
    ++k;
  });
}

ModelInput model_input(const Sample& s, const Normalizers& norm) {
  ModelInput in;
  in.features.resize(s.one_hot.rows(), s.one_hot.cols() + s.fields.cols());
  in.features.leftCols(s.one_hot.cols()) = s.one_hot;
  in.features.rightCols(s.fields.cols()) = norm.input.normalize(s.fields);
  in.world_positions = s.world_positions;
  return in;
}

double batch_loss(const BsmsParams& params, const std::vector<const Sample*>& batch, const Normalizers& norm,
                  const ModelConfig& cfg, BsmsParams* grads) {
  if (batch.empty()) throw invalid_argument("batch_loss: empty batch");
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const Sample* s : batch) {
    const ModelInput in = model_input(*s, norm);
    ForwardTape tape;
    const Matrix pred = model_forward(params, *s->graph, in, cfg, grads ? &tape : nullptr);
    const Matrix diff = pred - norm.target.normalize(s->target);
    const double count = static_cast<double>(diff.size());
    total += diff.squaredNorm() / count * inv_b;
    if (grads) model_backward(params, *s->graph, in, cfg, tape, (2.0 * inv_b / count) * diff, *grads);
  }
  return total;
}

double train_step(BsmsParams& params, const std::vector<const Sample*>& batch, const Normalizers& norm,
                  const ModelConfig& cfg, AdamState& adam, double lr) {
  BsmsParams grads = params.zeros_like();
  const double loss = batch_loss(params, batch, norm, cfg, &grads);
  if (!std::isfinite(loss)) {
    throw numerical_error("train_step: non-finite loss after " + std::to_string(adam.step) + " updates (lr " +
                          format_double(lr) + ")");
  }
  adam_update(params, grads, adam, lr);
  return loss;
}

TrainReport train(BsmsParams& params, const Dataset& data, const Normalizers& norm, const ModelConfig& cfg,
                  const TrainConfig& tcfg, const EpochCallback& on_epoch) {
  tcfg.validate();
  if (data.empty()) throw invalid_argument("train: empty dataset");
  for (const auto& [name, _] : tcfg.noise) field_columns(cfg.inputs, name);

  std::mt19937_64 rng(tcfg.seed);
  AdamState adam = AdamState::for_params(params);
  std::vector<std::size_t> order(data.size());
  TrainReport report;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double lr = tcfg.learning_rate_at(epoch);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
      std::vector<Sample> noisy;
      noisy.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k) noisy.push_back(inject_noise(data[order[k]], tcfg.noise, cfg, rng));
      std::vector<const Sample*> batch;
      for (const auto& s : noisy) batch.push_back(&s);
      const double loss = train_step(params, batch, norm, cfg, adam, lr);
      epoch_loss += loss * static_cast<double>(stop - start);
    }
    epoch_loss /= static_cast<double>(data.size());
    report.epoch_loss.push_back(epoch_loss);
    if (on_epoch && !on_epoch(epoch, epoch_loss, lr)) break;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rollout

StepFunction model_step(const BsmsParams& params, std::shared_ptr<const ModelGraph> graph, Matrix one_hot,
                        const Matrix& rest_positions, const Normalizers& norm, const ModelConfig& cfg) {
  bool world_from_fields = false;
  if (cfg.uses_world_positions()) {
    for (const auto& b : cfg.inputs) world_from_fields = world_from_fields || b.name == cfg.world_position_field;
  }
  return [&params, graph, one_hot = std::move(one_hot), rest = rest_positions, &norm, cfg,
          world_from_fields](const Matrix& fields, int) {
    Sample s;
    s.graph = graph;
    s.one_hot = one_hot;
    s.fields = fields;
    if (cfg.uses_world_positions()) {
      if (world_from_fields) {
        const auto [col, width] = field_columns(cfg.inputs, cfg.world_position_field);
        s.world_positions = fields.middleCols(col, width);
      } else {
        s.world_positions = rest;
      }
    }
    return norm.target.denormalize(model_forward(params, *graph, model_input(s, norm), cfg));
  };
}

std::vector<Matrix> rollout(const StepFunction& step, const Matrix& initial_fields, const ModelConfig& cfg, int steps) {
  if (steps < 0) throw invalid_argument("rollout: negative step count");
  std::vector<Matrix> out;
  Matrix fields = initial_fields;
  for (int k = 0; k < steps; ++k) {
    const Matrix q = step(fields, k);
    if (!q.allFinite()) throw numerical_error("rollout: non-finite prediction at step " + std::to_string(k + 1));
    if (q.cols() != cfg.output_width() || q.rows() != fields.rows()) {
      throw invalid_argument("rollout: step function returned a block of the wrong shape");
    }
    if (cfg.task == TaskMode::Steady) {
      out.push_back(q);
      continue;
    }
    Matrix state(q.rows(), q.cols());
    int ocol = 0;
    for (const auto& b : cfg.outputs) {
      const auto [col, width] = field_columns(cfg.inputs, b.name);
      const auto pred = q.middleCols(ocol, width);
      if (cfg.task == TaskMode::Delta) {
        state.middleCols(ocol, width) = fields.middleCols(col, width) + pred;
      } else {
        state.middleCols(ocol, width) = pred;
      }
      fields.middleCols(col, width) = state.middleCols(ocol, width);
      ocol += width;
    }
    out.push_back(std::move(state));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

Metrics eval_metrics(const std::vector<Matrix>& predicted, const std::vector<Matrix>& truth) {
  if (predicted.empty()) throw invalid_argument("eval_metrics: empty prediction");
  if (truth.size() < predicted.size()) {
    throw invalid_argument("eval_metrics: truth has " + std::to_string(truth.size()) + " steps, prediction has " +
                           std::to_string(predicted.size()));
  }
  Metrics m;
  m.steps = static_cast<int>(predicted.size());
  m.horizon_50 = std::min(50, m.steps);
  double sse = 0.0;
  double count = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const Matrix& p = predicted[k];
    const Matrix& t = truth[k];
    if (p.rows() != t.rows() || p.cols() != t.cols()) {
      throw invalid_argument("eval_metrics: shape mismatch at step " + std::to_string(k + 1));
    }
    const double e = (p - t).squaredNorm();
    const double c = static_cast<double>(p.size());
    m.per_step.push_back(c > 0 ? std::sqrt(e / c) : 0.0);
    sse += e;
    count += c;
    const double running = count > 0 ? std::sqrt(sse / count) : 0.0;
    if (k == 0) m.rmse_1 = running;
    if (static_cast<int>(k) + 1 == m.horizon_50) m.rmse_50 = running;
  }
  m.rmse_all = count > 0 ? std::sqrt(sse / count) : 0.0;
  return m;
}

json Metrics::to_json() const {
  return {{"rmse_1", rmse_1},         {"rmse_50", rmse_50}, {"rmse_all", rmse_all},
          {"horizon_50", horizon_50}, {"rmse_50_clamped", horizon_50 < 50},
          {"steps", steps},           {"per_step", per_step}};
}

std::string Metrics::to_csv() const {
  std::ostringstream os;
  os << "metric,value\n";
  os << "rmse_1," << format_double(rmse_1) << "\n";
  os << "rmse_50," << format_double(rmse_50) << "\n";
  os << "rmse_all," << format_double(rmse_all) << "\n";
  os << "horizon_50," << horizon_50 << "\n";
  for (std::size_t k = 0; k < per_step.size(); ++k) os << "step_" << k + 1 << "," << format_double(per_step[k]) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints

json checkpoint_to_json(const Checkpoint& c) {
  return {{"model", c.model.to_json()}, {"normalizers", c.norm.to_json()}, {"params", params_to_json(c.params)}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    Checkpoint c;
    c.model = ModelConfig::from_json(j.at("model"));
    c.norm = Normalizers::from_json(j.at("normalizers"));
    c.params = params_from_json(j.at("params"), c.model);
    if (c.norm.input.mean.size() != c.model.field_width() || c.norm.target.mean.size() != c.model.output_width()) {
      throw invalid_argument("checkpoint: normalizer widths do not match the model config");
    }
    return c;
  } catch (const json::exception& e) {
    throw invalid_argument(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace bsms
