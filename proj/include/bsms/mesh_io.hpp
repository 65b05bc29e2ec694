#pragma once

// JSON readers and writers for meshes, trajectories and hierarchies, plus
// the mesh-to-graph conversion that defines the finest level.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsms/graph.hpp"
#include "bsms/hierarchy.hpp"
#include "bsms/types.hpp"

namespace bsms {

struct Mesh {
  Matrix positions;                       // n x dim, dim in {1, 2, 3}
  std::vector<std::vector<Index>> cells;  // segments, triangles or tetrahedra
  std::vector<int> node_type;

  Index size() const { return static_cast<Index>(positions.rows()); }
  int dim() const { return static_cast<int>(positions.cols()); }

  /// Throws with the offending node or cell index.
  void validate() const;

  bool operator==(const Mesh& other) const;
};

/// One time step: named per-node field arrays (n x components each).
struct FieldSample {
  std::map<std::string, Matrix> fields;

  const Matrix& field(const std::string& name) const;
};

struct Trajectory {
  double dt = 1.0;
  std::vector<FieldSample> steps;

  std::size_t size() const { return steps.size(); }
  /// Node count shared by every field of every step (0 when empty).
  Index node_count() const;
  void validate() const;
};

Mesh mesh_from_json(const nlohmann::json& j);
nlohmann::json mesh_to_json(const Mesh& mesh);
Mesh load_mesh(const std::filesystem::path& path);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);

/// Union of all element edges, deduplicated.
Adjacency mesh_to_graph(const Mesh& mesh);

Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json trajectory_to_json(const Trajectory& t);
/// Accepts a single JSON document or newline-delimited JSON where each
/// line is {"dt":..., "fields":{...}} holding a slice of steps.
Trajectory load_trajectory(const std::filesystem::path& path);
void save_trajectory(const Trajectory& t, const std::filesystem::path& path);

nlohmann::json hierarchy_to_json(const Hierarchy& h);
Hierarchy hierarchy_from_json(const nlohmann::json& j);
void export_hierarchy(const Hierarchy& h, const std::filesystem::path& path);
Hierarchy import_hierarchy(const std::filesystem::path& path);

/// Edge list file: {"edges": [[i, j], ...]}, used for contact adjacencies.
std::vector<Edge> load_edge_list(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Canonical serialization: sorted keys, shortest round-trip doubles.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& what);

}  // namespace bsms
