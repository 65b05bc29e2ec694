#pragma once

#include <optional>
#include <vector>

#include "bsms/bistride.hpp"
#include "bsms/graph.hpp"
#include "bsms/transition.hpp"
#include "bsms/types.hpp"

namespace bsms {

struct HierarchyLevel {
  Adjacency adjacency;
  std::optional<Adjacency> contact;
  Matrix positions;             // strided rest positions, one row per node
  std::vector<double> weights;  // all ones at the finest level

  Index size() const { return adjacency.size(); }
};

/// Fine-to-coarse stack of graphs. Level 0 is the input mesh; plans[l] and
/// transitions[l] connect level l to level l + 1.
struct Hierarchy {
  std::vector<HierarchyLevel> levels;
  std::vector<PoolingPlan> plans;
  std::vector<Transition> transitions;

  int depth() const { return static_cast<int>(levels.size()); }
  bool has_contact() const { return !levels.empty() && levels.front().contact.has_value(); }
  std::vector<Index> level_sizes() const;

  /// For each node of `level`, the finest-level node it descends from.
  std::vector<Index> origin(int level) const;

  bool operator==(const Hierarchy& other) const;
};

struct HierarchyOptions {
  int depth = 1;
  SeedHeuristic heuristic = SeedHeuristic::MinAve;
  Parity parity = Parity::Even;
};

/// Single-level hierarchy over the input graph; the starting point for
/// build_hierarchy and for custom coarsening schemes.
Hierarchy make_single_level(Adjacency adj, Matrix positions, std::optional<Adjacency> contact = std::nullopt);

/// Pushes level depth+1 built from `plan` and its enhanced adjacencies,
/// deriving the transition, coarse weights and strided positions.
void append_level(Hierarchy& h, PoolingPlan plan, EnhancedLevel next);

/// Seeds, pools and enhances level by level until `options.depth` levels
/// exist. Deterministic given identical inputs.
Hierarchy build_hierarchy(const Adjacency& adj, const Matrix& positions, const std::optional<Adjacency>& contact,
                          const HierarchyOptions& options);

/// Heuristic default depth, floor(log2 n) - 3 clamped to at least 1.
int suggest_depth(Index n);

}  // namespace bsms
