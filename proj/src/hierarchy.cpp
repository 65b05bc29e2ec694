#include "bsms/hierarchy.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "bsms/error.hpp"

namespace bsms {

std::vector<Index> Hierarchy::level_sizes() const {
  std::vector<Index> sizes;
  for (const auto& l : levels) sizes.push_back(l.size());
  return sizes;
}

std::vector<Index> Hierarchy::origin(int level) const {
  if (level < 0 || level >= depth()) throw invalid_argument("Hierarchy::origin: level out of range");
  std::vector<Index> map(static_cast<std::size_t>(levels[level].size()));
  std::iota(map.begin(), map.end(), 0);
  for (int l = level - 1; l >= 0; --l) {
    for (auto& v : map) v = plans[l].pooled[v];
  }
  return map;
}

bool Hierarchy::operator==(const Hierarchy& other) const {
  if (levels.size() != other.levels.size() || plans != other.plans || transitions != other.transitions) return false;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& a = levels[l];
    const auto& b = other.levels[l];
    if (a.adjacency != b.adjacency || a.contact != b.contact || a.weights != b.weights) return false;
    if (a.positions.rows() != b.positions.rows() || a.positions.cols() != b.positions.cols()) return false;
    if (a.positions != b.positions) return false;
  }
  return true;
}

Hierarchy make_single_level(Adjacency adj, Matrix positions, std::optional<Adjacency> contact) {
  if (positions.rows() != adj.size()) {
    throw invalid_argument("hierarchy: positions have " + std::to_string(positions.rows()) + " rows for " +
                           std::to_string(adj.size()) + " nodes");
  }
  if (contact && contact->size() != adj.size()) throw invalid_argument("hierarchy: contact adjacency size mismatch");
  Hierarchy h;
  HierarchyLevel top;
  top.weights.assign(static_cast<std::size_t>(adj.size()), 1.0);
  top.adjacency = std::move(adj);
  top.contact = std::move(contact);
  top.positions = std::move(positions);
  h.levels.push_back(std::move(top));
  return h;
}

void append_level(Hierarchy& h, PoolingPlan plan, EnhancedLevel next) {
  const auto& fine = h.levels.back();
  if (next.adjacency.size() != static_cast<Index>(plan.pooled.size())) {
    throw invalid_argument("append_level: coarse adjacency size differs from pooled count");
  }
  auto [table, coarse_weights] = contribution_table(fine.adjacency, plan, fine.weights);
  Transition t{std::move(table), plan.pooled, normalized_convolution(fine.adjacency)};

  HierarchyLevel coarse;
  coarse.positions = take_rows(fine.positions, plan.pooled);
  coarse.weights = std::move(coarse_weights);
  coarse.adjacency = std::move(next.adjacency);
  coarse.contact = std::move(next.contact);

  h.transitions.push_back(std::move(t));
  h.plans.push_back(std::move(plan));
  h.levels.push_back(std::move(coarse));
}

Hierarchy build_hierarchy(const Adjacency& adj, const Matrix& positions, const std::optional<Adjacency>& contact,
                          const HierarchyOptions& options) {
  if (options.depth < 1) throw invalid_argument("build_hierarchy: depth must be at least 1");
  Hierarchy h = make_single_level(adj, positions, contact);
  for (int l = 1; l < options.depth; ++l) {
    const auto& cur = h.levels.back();
    const auto seeds = select_seeds(cur.adjacency, cur.positions, options.heuristic);
    PoolingPlan plan;
    try {
      plan = bistride_pool(cur.adjacency, seeds, options.parity);
    } catch (const Error& e) {
      throw invalid_argument("build_hierarchy: depth " + std::to_string(options.depth) + " exhausts a cluster at level " +
                             std::to_string(l) + ": " + e.what());
    }
    auto next = enhance_level(cur.adjacency, cur.contact ? &*cur.contact : nullptr, plan);
    append_level(h, std::move(plan), std::move(next));
  }
  return h;
}

int suggest_depth(Index n) {
  int log2n = 0;
  while ((Index{1} << (log2n + 1)) <= n && log2n < 30) ++log2n;
  return std::max(1, log2n - 3);
}

}  // namespace bsms
