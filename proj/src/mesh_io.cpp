#include "bsms/mesh_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "bsms/error.hpp"

namespace bsms {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Generic helpers

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path.string() + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw invalid_argument("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
  out << j.dump() << '\n';
  if (!out) throw io_error("failed writing '" + path.string() + "'");
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(std::move(r));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw invalid_argument(what + ": expected an array of rows");
  if (j.empty()) return Matrix(0, 0);
  const auto width = j.front().is_array() ? j.front().size() : 1;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& row = j[i];
    if (row.is_number()) {
      if (width != 1) throw invalid_argument(what + ": row " + std::to_string(i) + " has inconsistent width");
      m(static_cast<Eigen::Index>(i), 0) = row.get<double>();
      continue;
    }
    if (!row.is_array() || row.size() != width) {
      throw invalid_argument(what + ": row " + std::to_string(i) + " has inconsistent width");
    }
    for (std::size_t k = 0; k < width; ++k) {
      if (!row[k].is_number()) throw invalid_argument(what + ": row " + std::to_string(i) + " has a non-numeric entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k].get<double>();
    }
  }
  return m;
}

namespace {

std::vector<Edge> edges_from_json(const json& j, const std::string& what) {
  std::vector<Edge> out;
  if (!j.is_array()) throw invalid_argument(what + ": expected an array of [i, j] pairs");
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw invalid_argument(what + ": every edge must be an [i, j] pair");
    out.emplace_back(e[0].get<Index>(), e[1].get<Index>());
  }
  return out;
}

json edges_to_json(const std::vector<Edge>& edges) {
  json out = json::array();
  for (const auto& [a, b] : edges) out.push_back(json::array({a, b}));
  return out;
}

const json& require(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw invalid_argument(what + ": missing key '" + key + "'");
  return j.at(key);
}

}  // namespace

// ---------------------------------------------------------------------------
// Mesh

void Mesh::validate() const {
  if (positions.rows() == 0) throw invalid_argument("mesh: no nodes");
  if (positions.cols() < 1 || positions.cols() > 3) throw invalid_argument("mesh: dimension must be 1, 2 or 3");
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    if (!positions.row(i).allFinite()) throw invalid_argument("mesh: node " + std::to_string(i) + " has a non-finite position");
  }
  if (!node_type.empty() && static_cast<Index>(node_type.size()) != size()) {
    throw invalid_argument("mesh: node_type has " + std::to_string(node_type.size()) + " entries for " +
                           std::to_string(size()) + " nodes");
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::set<Index> distinct;
    for (Index v : cells[c]) {
      if (v < 0 || v >= size()) {
        throw invalid_argument("mesh: cell " + std::to_string(c) + " references node " + std::to_string(v) +
                               " outside [0, " + std::to_string(size()) + ")");
      }
      distinct.insert(v);
    }
    if (distinct.size() < 2) throw invalid_argument("mesh: cell " + std::to_string(c) + " has fewer than 2 distinct nodes");
  }
}

bool Mesh::operator==(const Mesh& other) const {
  return positions.rows() == other.positions.rows() && positions.cols() == other.positions.cols() &&
         positions == other.positions && cells == other.cells && node_type == other.node_type;
}

Mesh mesh_from_json(const json& j) {
  Mesh mesh;
  const auto dim = require(j, "dim", "mesh").get<int>();
  mesh.positions = matrix_from_json(require(j, "positions", "mesh"), "mesh positions");
  if (mesh.positions.rows() > 0 && mesh.positions.cols() != dim) {
    throw invalid_argument("mesh: positions have " + std::to_string(mesh.positions.cols()) + " components, dim is " +
                           std::to_string(dim));
  }
  if (mesh.positions.rows() == 0) mesh.positions.resize(0, dim);
  for (const auto& cell : require(j, "cells", "mesh")) {
    if (!cell.is_array()) throw invalid_argument("mesh: every cell must be an index array");
    mesh.cells.push_back(cell.get<std::vector<Index>>());
  }
  if (j.contains("node_type")) {
    mesh.node_type = j.at("node_type").get<std::vector<int>>();
  } else {
    mesh.node_type.assign(static_cast<std::size_t>(mesh.positions.rows()), 0);
  }
  mesh.validate();
  return mesh;
}

json mesh_to_json(const Mesh& mesh) {
  json j;
  j["dim"] = mesh.dim();
  j["positions"] = matrix_to_json(mesh.positions);
  j["cells"] = mesh.cells;
  j["node_type"] = mesh.node_type;
  return j;
}

Mesh load_mesh(const std::filesystem::path& path) {
  try {
    return mesh_from_json(read_json_file(path));
  } catch (const json::exception& e) {
    throw invalid_argument("'" + path.string() + "': " + e.what());
  }
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) { write_json_file(mesh_to_json(mesh), path); }

Adjacency mesh_to_graph(const Mesh& mesh) {
  std::vector<Edge> edges;
  for (const auto& cell : mesh.cells) {
    // Segments, triangles and tetrahedra are complete graphs on their nodes.
    for (std::size_t a = 0; a < cell.size(); ++a) {
      for (std::size_t b = a + 1; b < cell.size(); ++b) edges.emplace_back(cell[a], cell[b]);
    }
  }
  return build_adjacency(mesh.size(), edges);
}

// ---------------------------------------------------------------------------
// Trajectory

const Matrix& FieldSample::field(const std::string& name) const {
  auto it = fields.find(name);
  if (it == fields.end()) throw invalid_argument("sample has no field '" + name + "'");
  return it->second;
}

Index Trajectory::node_count() const {
  if (steps.empty() || steps.front().fields.empty()) return 0;
  return static_cast<Index>(steps.front().fields.begin()->second.rows());
}

void Trajectory::validate() const {
  const Index n = node_count();
  const auto& first = steps.empty() ? FieldSample{} : steps.front();
  for (std::size_t s = 0; s < steps.size(); ++s) {
    if (steps[s].fields.size() != first.fields.size()) {
      throw invalid_argument("trajectory: step " + std::to_string(s) + " has a different field set");
    }
    for (const auto& [name, m] : steps[s].fields) {
      auto it = first.fields.find(name);
      if (it == first.fields.end()) throw invalid_argument("trajectory: step " + std::to_string(s) + " adds field '" + name + "'");
      if (m.rows() != n) throw invalid_argument("trajectory: field '" + name + "' has inconsistent node count at step " + std::to_string(s));
      if (m.cols() != it->second.cols()) {
        throw invalid_argument("trajectory: field '" + name + "' changes width at step " + std::to_string(s));
      }
    }
  }
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  t.dt = require(j, "dt", "trajectory").get<double>();
  const auto& fields = require(j, "fields", "trajectory");
  if (!fields.is_object()) throw invalid_argument("trajectory: 'fields' must be an object");
  std::size_t steps = 0;
  bool first = true;
  for (const auto& [name, arr] : fields.items()) {
    if (!arr.is_array()) throw invalid_argument("trajectory: field '" + name + "' must be [steps][nodes][components]");
    if (first) {
      steps = arr.size();
      t.steps.resize(steps);
      first = false;
    } else if (arr.size() != steps) {
      throw invalid_argument("trajectory: field '" + name + "' has " + std::to_string(arr.size()) + " steps, expected " +
                             std::to_string(steps));
    }
    for (std::size_t s = 0; s < steps; ++s) {
      t.steps[s].fields[name] = matrix_from_json(arr[s], "trajectory field '" + name + "'");
    }
  }
  t.validate();
  return t;
}

json trajectory_to_json(const Trajectory& t) {
  json j;
  j["dt"] = t.dt;
  json fields = json::object();
  if (!t.steps.empty()) {
    for (const auto& [name, _] : t.steps.front().fields) {
      json arr = json::array();
      for (const auto& step : t.steps) arr.push_back(matrix_to_json(step.field(name)));
      fields[name] = std::move(arr);
    }
  }
  j["fields"] = std::move(fields);
  return j;
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path.string() + "' for reading");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    if (path.extension() != ".ndjson" && path.extension() != ".jsonl") return trajectory_from_json(json::parse(text));
    Trajectory out;
    bool first = true;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto part = trajectory_from_json(json::parse(line));
      if (first) {
        out.dt = part.dt;
        first = false;
      }
      for (auto& s : part.steps) out.steps.push_back(std::move(s));
    }
    out.validate();
    return out;
  } catch (const json::exception& e) {
    throw invalid_argument("'" + path.string() + "': " + e.what());
  }
}

void save_trajectory(const Trajectory& t, const std::filesystem::path& path) {
  write_json_file(trajectory_to_json(t), path);
}

std::vector<Edge> load_edge_list(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  try {
    return edges_from_json(require(j, "edges", "edge list"), "edge list");
  } catch (const json::exception& e) {
    throw invalid_argument("'" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Hierarchy

json hierarchy_to_json(const Hierarchy& h) {
  json levels = json::array();
  for (int l = 0; l < h.depth(); ++l) {
    const auto& level = h.levels[l];
    json lj;
    lj["edges"] = edges_to_json(level.adjacency.edges());
    if (level.contact) lj["contact_edges"] = edges_to_json(level.contact->edges());
    lj["weights"] = level.weights;
    lj["positions"] = matrix_to_json(level.positions);
    if (l + 1 < h.depth()) {
      const auto& plan = h.plans[l];
      const auto& table = h.transitions[l].table;
      lj["pooled"] = plan.pooled;
      lj["seeds"] = plan.seeds;
      lj["parity"] = to_string(plan.parity);
      json rows = json::array(), cols = json::array(), vals = json::array();
      for (Index i = 0; i < table.rows; ++i) {
        for (auto k = table.row_ptr[i]; k < table.row_ptr[i + 1]; ++k) {
          rows.push_back(i);
          cols.push_back(table.col_idx[k]);
          vals.push_back(table.vals[k]);
        }
      }
      lj["transition"] = {{"rows", rows}, {"cols", cols}, {"vals", vals}};
    }
    levels.push_back(std::move(lj));
  }
  return {{"levels", levels}};
}

Hierarchy hierarchy_from_json(const json& j) {
  const auto& levels = require(j, "levels", "hierarchy");
  if (!levels.is_array() || levels.empty()) throw invalid_argument("hierarchy: 'levels' must be a non-empty array");
  Hierarchy h;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& lj = levels[l];
    const std::string what = "hierarchy level " + std::to_string(l);
    HierarchyLevel level;
    level.weights = require(lj, "weights", what).get<std::vector<double>>();
    const auto n = static_cast<Index>(level.weights.size());
    level.adjacency = build_adjacency(std::max<Index>(n, 1), edges_from_json(require(lj, "edges", what), what));
    if (n == 0) throw invalid_argument(what + ": empty level");
    if (lj.contains("contact_edges")) level.contact = build_adjacency(n, edges_from_json(lj.at("contact_edges"), what));
    level.positions = matrix_from_json(require(lj, "positions", what), what + " positions");
    if (level.positions.rows() != n) throw invalid_argument(what + ": positions/weights length mismatch");

    const bool last = l + 1 == levels.size();
    if (!last) {
      PoolingPlan plan;
      plan.pooled = require(lj, "pooled", what).get<std::vector<Index>>();
      plan.seeds = lj.value("seeds", std::vector<Index>{});
      plan.parity = parse_parity(lj.value("parity", std::string("even")));
      const auto& tj = require(lj, "transition", what);
      const auto rows = require(tj, "rows", what).get<std::vector<Index>>();
      const auto cols = require(tj, "cols", what).get<std::vector<Index>>();
      const auto vals = require(tj, "vals", what).get<std::vector<double>>();
      if (rows.size() != cols.size() || rows.size() != vals.size()) throw invalid_argument(what + ": ragged transition triplets");
      ContributionTable table;
      table.rows = n;
      table.cols = static_cast<Index>(plan.pooled.size());
      table.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0 || rows[k] >= n || cols[k] < 0 || cols[k] >= table.cols) {
          throw invalid_argument(what + ": transition triplet " + std::to_string(k) + " out of range");
        }
        if (k > 0 && (rows[k] < rows[k - 1] || (rows[k] == rows[k - 1] && cols[k] <= cols[k - 1]))) {
          throw invalid_argument(what + ": transition triplets must be sorted by (row, col)");
        }
        ++table.row_ptr[rows[k] + 1];
      }
      for (Index i = 0; i < n; ++i) table.row_ptr[i + 1] += table.row_ptr[i];
      table.col_idx = cols;
      table.vals = vals;
      h.transitions.push_back(Transition{std::move(table), plan.pooled, normalized_convolution(level.adjacency)});
      h.plans.push_back(std::move(plan));
    }
    h.levels.push_back(std::move(level));
  }
  for (std::size_t l = 0; l + 1 < h.levels.size(); ++l) {
    if (static_cast<Index>(h.plans[l].pooled.size()) != h.levels[l + 1].size()) {
      throw invalid_argument("hierarchy level " + std::to_string(l) + ": pooled count differs from next level size");
    }
  }
  return h;
}

void export_hierarchy(const Hierarchy& h, const std::filesystem::path& path) { write_json_file(hierarchy_to_json(h), path); }

Hierarchy import_hierarchy(const std::filesystem::path& path) {
  try {
    return hierarchy_from_json(read_json_file(path));
  } catch (const json::exception& e) {
    throw invalid_argument("'" + path.string() + "': " + e.what());
  }
}

}  // namespace bsms
