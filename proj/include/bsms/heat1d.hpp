#pragma once

// Steady 1-D heat conduction on sticks: one end held at a fixed temperature,
// the other at a fixed flux. Provides the analytic data, a proximity-based
// coarsening for comparison, and the end-to-end two-variant experiment.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsms/graph.hpp"
#include "bsms/hierarchy.hpp"
#include "bsms/mesh_io.hpp"
#include "bsms/model.hpp"
#include "bsms/types.hpp"

namespace bsms::heat1d {

enum class Orientation {
  LeftFixed,   // temperature held at x = 0, flux at x = L
  RightFixed,  // mirrored
};

/// Node types in the one-hot encoding.
inline constexpr int kInterior = 0;
inline constexpr int kFixedEnd = 1;
inline constexpr int kFluxEnd = 2;
inline constexpr int kNodeTypes = 3;

struct StickConfig {
  int nodes = 17;
  double length = 1.0;
  double t0 = 0.0;
  double q = 1.0;
  Orientation orientation = Orientation::LeftFixed;
  /// Distance between the two sticks of the test layout.
  double gap = 0.0125;

  double spacing() const { return length / (nodes - 1); }
  void validate() const;
};

/// T(s) = T0 + q s, with s measured from the fixed-temperature end.
std::vector<double> analytic_steady_state(const StickConfig& cfg);

/// A named mesh with a one-step trajectory holding "bc" (T0 on the fixed
/// end, q on the flux end, 0 elsewhere) and "temperature".
struct Case {
  std::string name;
  Mesh mesh;
  Trajectory trajectory;
};

/// Training set: the stick in both orientations.
std::vector<Case> gen_train(const StickConfig& cfg);

/// Test set: two sticks head to tail, separated by cfg.gap, in every
/// orientation pair ("AA", "AB", "BA", "BB"; A = left-fixed).
std::vector<Case> gen_test(const StickConfig& cfg);

/// True when the two sticks meet at equal end temperatures.
bool symmetric_pair(const std::string& name);

/// Every node pair within distance r, minus `exclude` edges and self pairs.
Adjacency proximity_edges(const Matrix& positions, double r, const Adjacency* exclude = nullptr);

/// Spatial coarsening: level l+1 keeps, for each lattice point of spacing
/// h 2^(l+1), the nearest level-l node; coarse edges join nodes within
/// 1.5 lattice spacings.
Hierarchy build_proximity_hierarchy(const Adjacency& adj, const Matrix& positions, int depth, double h);

/// Per level, the number of undirected edges joining different connected
/// components of the finest graph.
std::vector<Index> cross_cluster_edges(const Hierarchy& h);

/// Model configuration used for both variants.
ModelConfig model_config(int depth, int latent, int hidden);

struct DemoConfig {
  StickConfig stick;
  int depth = 5;
  int latent = 32;
  int hidden = 32;
  int max_epochs = 4000;
  int check_every = 25;
  /// Stop once the training RMSE is at most this fraction of the range.
  double target_rmse = 0.005;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct CaseResult {
  std::string name;
  bool symmetric = false;
  double rmse = 0.0;            // fraction of the truth range
  double boundary_error = 0.0;  // max abs error on the 4 gap-adjacent nodes, fraction of range
  std::vector<Index> level_sizes;
  std::vector<Index> cross_edges;
  std::vector<double> prediction;
  std::vector<double> truth;
};

struct VariantResult {
  std::string name;  // "bistride" or "proximity"
  int epochs = 0;
  double train_rmse = 0.0;  // fraction of range
  std::vector<double> loss;
  std::vector<CaseResult> cases;

  const CaseResult& find(const std::string& name) const;
};

struct DemoReport {
  DemoConfig config;
  std::vector<VariantResult> variants;

  nlohmann::json to_json() const;
  std::string to_csv() const;
  std::string comparison_table() const;
  std::string to_svg() const;
};

using Logger = std::function<void(const nlohmann::json& record)>;

/// Trains the bi-stride and proximity variants from the same initial
/// weights to the same training target and evaluates both on every test
/// layout. Deterministic given the config.
DemoReport run_demo(const DemoConfig& cfg, const Logger& log = {});

}  // namespace bsms::heat1d
