#pragma once

// Bi-stride pooling: per-cluster seeding, pooling every other BFS frontier,
// and the level-wise enhancement of mesh and contact adjacencies.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsms/graph.hpp"
#include "bsms/types.hpp"

namespace bsms {

enum class Parity { Even, Odd };
enum class SeedHeuristic { MinAve, CloseCenter };

Parity parse_parity(const std::string& s);
SeedHeuristic parse_heuristic(const std::string& s);
std::string to_string(Parity p);
std::string to_string(SeedHeuristic h);

/// Nodes of level l that survive into level l + 1.
struct PoolingPlan {
  std::vector<Index> seeds;   // one per cluster, ascending; empty for non-bi-stride plans
  std::vector<Index> pooled;  // strictly increasing
  Parity parity = Parity::Even;

  bool operator==(const PoolingPlan&) const = default;
};

/// Connected components, each sorted, ordered by smallest member.
std::vector<std::vector<Index>> determine_clusters(const Adjacency& adj);

/// Per cluster, the node with the smallest mean hop distance to every node
/// of its cluster (itself included). Ties go to the smallest index.
std::vector<Index> seed_min_ave(const Adjacency& adj);

/// Per cluster, the node closest (Euclidean) to the cluster centroid.
/// `positions` has one row per node. Ties go to the smallest index.
std::vector<Index> seed_close_center(const Adjacency& adj, const Matrix& positions);

std::vector<Index> select_seeds(const Adjacency& adj, const Matrix& positions, SeedHeuristic heuristic);

/// Pools every node whose BFS distance from its cluster's seed has the
/// requested parity. Requires exactly one seed per cluster.
PoolingPlan bistride_pool(const Adjacency& adj, std::span<const Index> seeds, Parity parity);

struct EnhancedLevel {
  Adjacency adjacency;
  std::optional<Adjacency> contact;
};

/// A_{l+1} = [(A+I)^2][I,I] and A^C_{l+1} = [(A+I) A^C (A+I)][I,I], both
/// with the diagonal dropped.
EnhancedLevel enhance_level(const Adjacency& adj, const Adjacency* contact, const PoolingPlan& plan);

/// Rows of `m` listed in `rows`, in order.
Matrix take_rows(const Matrix& m, std::span<const Index> rows);

}  // namespace bsms
