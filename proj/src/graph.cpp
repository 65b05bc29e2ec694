#include "bsms/graph.hpp"

#include <algorithm>
#include <string>

#include "bsms/error.hpp"

namespace bsms {

SparseBool SparseBool::empty(Index rows, Index cols) {
  SparseBool m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
  return m;
}

SparseBool SparseBool::identity(Index n) {
  SparseBool m;
  m.rows = n;
  m.cols = n;
  m.row_ptr.resize(static_cast<std::size_t>(n) + 1);
  m.col_idx.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    m.row_ptr[i] = i;
    m.col_idx[i] = i;
  }
  m.row_ptr[n] = n;
  return m;
}

bool SparseBool::contains(Index i, Index j) const {
  const auto r = row(i);
  return std::binary_search(r.begin(), r.end(), j);
}

std::vector<Edge> SparseBool::entries() const {
  std::vector<Edge> out;
  out.reserve(col_idx.size());
  for (Index i = 0; i < rows; ++i) {
    for (Index j : row(i)) out.emplace_back(i, j);
  }
  return out;
}

Adjacency::Adjacency(SparseBool structure) : m_(std::move(structure)) {
  if (m_.rows != m_.cols) {
    throw invalid_argument("adjacency must be square, got " + std::to_string(m_.rows) + "x" +
                           std::to_string(m_.cols));
  }
  for (Index i = 0; i < m_.rows; ++i) {
    const auto r = m_.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const Index j = r[k];
      if (j < 0 || j >= m_.cols) throw invalid_argument("adjacency column out of range in row " + std::to_string(i));
      if (k > 0 && r[k - 1] >= j) throw invalid_argument("adjacency row " + std::to_string(i) + " is not strictly increasing");
      if (j == i) throw invalid_argument("adjacency stores diagonal entry at node " + std::to_string(i));
      if (!m_.contains(j, i)) {
        throw invalid_argument("adjacency is not symmetric: (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

std::vector<Edge> Adjacency::edges() const {
  std::vector<Edge> out;
  out.reserve(static_cast<std::size_t>(edge_count()));
  for (Index i = 0; i < size(); ++i) {
    for (Index j : neighbors(i)) {
      if (i < j) out.emplace_back(i, j);
    }
  }
  return out;
}

namespace {

// Assembles CSR from per-row sorted, deduplicated column lists.
SparseBool from_rows(Index rows, Index cols, const std::vector<std::vector<Index>>& lists) {
  SparseBool m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.resize(static_cast<std::size_t>(rows) + 1);
  m.row_ptr[0] = 0;
  std::size_t total = 0;
  for (const auto& l : lists) total += l.size();
  m.col_idx.reserve(total);
  for (Index i = 0; i < rows; ++i) {
    m.col_idx.insert(m.col_idx.end(), lists[i].begin(), lists[i].end());
    m.row_ptr[i + 1] = static_cast<std::int64_t>(m.col_idx.size());
  }
  return m;
}

}  // namespace

Adjacency build_adjacency(Index n, std::span<const Edge> edges) {
  if (n <= 0) throw invalid_argument("build_adjacency: node count must be positive");
  std::vector<std::vector<Index>> lists(static_cast<std::size_t>(n));
  for (const auto& [a, b] : edges) {
    if (a < 0 || a >= n || b < 0 || b >= n) {
      throw invalid_argument("build_adjacency: edge (" + std::to_string(a) + "," + std::to_string(b) +
                             ") has index out of range for n=" + std::to_string(n));
    }
    if (a == b) continue;
    lists[a].push_back(b);
    lists[b].push_back(a);
  }
  for (auto& l : lists) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return Adjacency(from_rows(n, n, lists));
}

DistanceField bfs_distances(const Adjacency& adj, std::span<const Index> seeds) {
  if (seeds.empty()) throw invalid_argument("bfs_distances: seed list is empty");
  const Index n = adj.size();
  DistanceField field;
  field.dist.assign(static_cast<std::size_t>(n), DistanceField::kUnreachable);
  std::vector<Index> frontier;
  frontier.reserve(seeds.size());
  for (Index s : seeds) {
    if (s < 0 || s >= n) throw invalid_argument("bfs_distances: seed " + std::to_string(s) + " out of range");
    if (field.dist[s] != 0) {
      field.dist[s] = 0;
      frontier.push_back(s);
    }
  }
  std::vector<Index> next;
  for (std::int32_t depth = 1; !frontier.empty(); ++depth) {
    next.clear();
    for (Index u : frontier) {
      for (Index v : adj.neighbors(u)) {
        if (field.dist[v] == DistanceField::kUnreachable) {
          field.dist[v] = depth;
          next.push_back(v);
        }
      }
    }
    frontier.swap(next);
  }
  return field;
}

SparseBool bool_product(const SparseBool& a, const SparseBool& b, ProductOptions options) {
  if (a.cols != b.rows) {
    throw invalid_argument("bool_product: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                           std::to_string(b.rows) + ")");
  }
  if (options.left_self_loops && a.rows != a.cols) throw invalid_argument("bool_product: left self-loops need a square operand");
  if (options.right_self_loops && b.rows != b.cols) throw invalid_argument("bool_product: right self-loops need a square operand");

  SparseBool out;
  out.rows = a.rows;
  out.cols = b.cols;
  out.row_ptr.resize(static_cast<std::size_t>(a.rows) + 1);
  out.row_ptr[0] = 0;

  // Row-stamped marker: marker[j] == i means column j already emitted for row i.
  std::vector<Index> marker(static_cast<std::size_t>(b.cols), -1);
  std::vector<Index> scratch;

  auto emit = [&](Index i, Index j) {
    if (marker[j] == i) return;
    marker[j] = i;
    scratch.push_back(j);
  };
  auto expand = [&](Index i, Index k) {
    for (Index j : b.row(k)) emit(i, j);
    if (options.right_self_loops) emit(i, k);
  };

  for (Index i = 0; i < a.rows; ++i) {
    scratch.clear();
    for (Index k : a.row(i)) expand(i, k);
    if (options.left_self_loops) expand(i, i);
    std::sort(scratch.begin(), scratch.end());
    for (Index j : scratch) {
      if (options.drop_diagonal && j == i) continue;
      out.col_idx.push_back(j);
    }
    out.row_ptr[i + 1] = static_cast<std::int64_t>(out.col_idx.size());
  }
  return out;
}

namespace {

// Maps each original index to its position in `list`, or -1.
std::vector<Index> position_map(std::span<const Index> list, Index extent, const char* what) {
  std::vector<Index> pos(static_cast<std::size_t>(extent), -1);
  for (std::size_t k = 0; k < list.size(); ++k) {
    const Index v = list[k];
    if (v < 0 || v >= extent) throw invalid_argument(std::string("stride_submatrix: ") + what + " index out of range");
    if (k > 0 && list[k - 1] >= v) {
      throw invalid_argument(std::string("stride_submatrix: ") + what + " indices must be strictly increasing");
    }
    pos[v] = static_cast<Index>(k);
  }
  return pos;
}

}  // namespace

SparseBool stride_submatrix(const SparseBool& m, std::span<const Index> rows, std::span<const Index> cols) {
  position_map(rows, m.rows, "row");
  const auto col_pos = position_map(cols, m.cols, "column");
  SparseBool out;
  out.rows = static_cast<Index>(rows.size());
  out.cols = static_cast<Index>(cols.size());
  out.row_ptr.resize(rows.size() + 1);
  out.row_ptr[0] = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    // Source rows are sorted and col_pos is monotone, so output stays sorted.
    for (Index j : m.row(rows[r])) {
      if (col_pos[j] >= 0) out.col_idx.push_back(col_pos[j]);
    }
    out.row_ptr[r + 1] = static_cast<std::int64_t>(out.col_idx.size());
  }
  return out;
}

SparseBool without_diagonal(const SparseBool& m) {
  SparseBool out;
  out.rows = m.rows;
  out.cols = m.cols;
  out.row_ptr.resize(static_cast<std::size_t>(m.rows) + 1);
  out.row_ptr[0] = 0;
  out.col_idx.reserve(m.col_idx.size());
  for (Index i = 0; i < m.rows; ++i) {
    for (Index j : m.row(i)) {
      if (j != i) out.col_idx.push_back(j);
    }
    out.row_ptr[i + 1] = static_cast<std::int64_t>(out.col_idx.size());
  }
  return out;
}

}  // namespace bsms
