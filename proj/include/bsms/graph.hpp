#pragma once

// Sparse boolean graph kernels: compressed-row storage, multi-source BFS,
// boolean matrix products and row/column striding.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "bsms/types.hpp"

namespace bsms {

using Edge = std::pair<Index, Index>;

/// Rectangular sparse boolean matrix in compressed-row form. Column indices
/// within a row are strictly increasing.
struct SparseBool {
  Index rows = 0;
  Index cols = 0;
  std::vector<std::int64_t> row_ptr{0};
  std::vector<Index> col_idx;

  static SparseBool empty(Index rows, Index cols);
  static SparseBool identity(Index n);

  std::int64_t nnz() const { return static_cast<std::int64_t>(col_idx.size()); }

  std::span<const Index> row(Index i) const {
    return {col_idx.data() + row_ptr[i], static_cast<std::size_t>(row_ptr[i + 1] - row_ptr[i])};
  }

  bool contains(Index i, Index j) const;

  /// Every stored (row, col) pair in row-major order.
  std::vector<Edge> entries() const;

  bool operator==(const SparseBool&) const = default;
};

/// Symmetric, diagonal-free boolean adjacency over `n` nodes.
class Adjacency {
 public:
  Adjacency() = default;

  /// Validates the adjacency invariants; throws on asymmetry, stored
  /// diagonal entries, unsorted rows or a non-square shape.
  explicit Adjacency(SparseBool structure);

  Index size() const { return m_.rows; }
  std::int64_t directed_edge_count() const { return m_.nnz(); }
  std::int64_t edge_count() const { return m_.nnz() / 2; }

  std::span<const Index> neighbors(Index i) const { return m_.row(i); }
  std::size_t degree(Index i) const { return neighbors(i).size(); }
  bool has_edge(Index i, Index j) const { return m_.contains(i, j); }

  /// Undirected edges (i < j) in ascending order.
  std::vector<Edge> edges() const;

  const SparseBool& matrix() const { return m_; }

  bool operator==(const Adjacency&) const = default;

 private:
  SparseBool m_;
};

/// Builds a symmetric adjacency from an arbitrary edge list. Duplicates and
/// self-loops are dropped; each pair is inserted in both directions.
Adjacency build_adjacency(Index n, std::span<const Edge> edges);

/// Hop counts from a BFS seeded at every index in `seeds` simultaneously.
struct DistanceField {
  static constexpr std::int32_t kUnreachable = std::numeric_limits<std::int32_t>::max();

  std::vector<std::int32_t> dist;

  bool reachable(Index i) const { return dist[i] != kUnreachable; }
};

DistanceField bfs_distances(const Adjacency& adj, std::span<const Index> seeds);

/// Self-loops turn "exactly K hops" into "at most K hops". They are added
/// transiently to the operand(s) and never stored.
struct ProductOptions {
  bool left_self_loops = true;   // use (A + I) in place of A
  bool right_self_loops = true;  // use (B + I) in place of B
  bool drop_diagonal = true;

  static ProductOptions with_self_loops(bool on, bool drop_diagonal = true) {
    return {on, on, drop_diagonal};
  }
};

/// Boolean product of two sparse boolean matrices, row by row. Self-loops
/// require the corresponding operand to be square.
SparseBool bool_product(const SparseBool& a, const SparseBool& b, ProductOptions options = {});

/// Restricts `m` to the given rows and columns (each strictly increasing)
/// and reindexes densely in list order.
SparseBool stride_submatrix(const SparseBool& m, std::span<const Index> rows, std::span<const Index> cols);

/// Drops any stored diagonal entries.
SparseBool without_diagonal(const SparseBool& m);

}  // namespace bsms
