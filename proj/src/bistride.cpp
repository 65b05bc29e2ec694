#include "bsms/bistride.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>

#include "bsms/error.hpp"

namespace bsms {

Parity parse_parity(const std::string& s) {
  if (s == "even") return Parity::Even;
  if (s == "odd") return Parity::Odd;
  throw invalid_argument("unknown parity '" + s + "' (expected even|odd)");
}

SeedHeuristic parse_heuristic(const std::string& s) {
  if (s == "minave") return SeedHeuristic::MinAve;
  if (s == "closecenter") return SeedHeuristic::CloseCenter;
  throw invalid_argument("unknown seeding heuristic '" + s + "' (expected minave|closecenter)");
}

std::string to_string(Parity p) { return p == Parity::Even ? "even" : "odd"; }
std::string to_string(SeedHeuristic h) { return h == SeedHeuristic::MinAve ? "minave" : "closecenter"; }

std::vector<std::vector<Index>> determine_clusters(const Adjacency& adj) {
  const Index n = adj.size();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<Index>> clusters;
  std::vector<Index> stack;
  for (Index start = 0; start < n; ++start) {
    if (seen[start]) continue;
    std::vector<Index> members;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const Index u = stack.back();
      stack.pop_back();
      members.push_back(u);
      for (Index v : adj.neighbors(u)) {
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    std::sort(members.begin(), members.end());
    clusters.push_back(std::move(members));
  }
  return clusters;
}

std::vector<Index> seed_min_ave(const Adjacency& adj) {
  const Index n = adj.size();
  std::vector<Index> seeds;
  std::vector<std::int32_t> dist(static_cast<std::size_t>(n), -1);
  std::vector<Index> queue;
  queue.reserve(static_cast<std::size_t>(n));
  for (const auto& cluster : determine_clusters(adj)) {
    // Every candidate averages over the same cluster size, so comparing
    // integer distance sums is exact.
    std::int64_t best_sum = std::numeric_limits<std::int64_t>::max();
    Index best = cluster.front();
    for (Index s : cluster) {
      queue.clear();
      queue.push_back(s);
      dist[s] = 0;
      std::int64_t sum = 0;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const Index u = queue[head];
        sum += dist[u];
        for (Index v : adj.neighbors(u)) {
          if (dist[v] < 0) {
            dist[v] = dist[u] + 1;
            queue.push_back(v);
          }
        }
      }
      for (Index u : queue) dist[u] = -1;
      if (sum < best_sum) {
        best_sum = sum;
        best = s;
      }
    }
    seeds.push_back(best);
  }
  return seeds;
}

std::vector<Index> seed_close_center(const Adjacency& adj, const Matrix& positions) {
  if (positions.rows() != adj.size()) {
    throw invalid_argument("seed_close_center: positions have " + std::to_string(positions.rows()) +
                           " rows for " + std::to_string(adj.size()) + " nodes");
  }
  std::vector<Index> seeds;
  for (const auto& cluster : determine_clusters(adj)) {
    RowVector centroid = RowVector::Zero(positions.cols());
    for (Index i : cluster) centroid += positions.row(i);
    centroid /= static_cast<double>(cluster.size());
    double best_d = std::numeric_limits<double>::infinity();
    Index best = cluster.front();
    for (Index i : cluster) {
      const double d = (positions.row(i) - centroid).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    seeds.push_back(best);
  }
  return seeds;
}

std::vector<Index> select_seeds(const Adjacency& adj, const Matrix& positions, SeedHeuristic heuristic) {
  return heuristic == SeedHeuristic::MinAve ? seed_min_ave(adj) : seed_close_center(adj, positions);
}

PoolingPlan bistride_pool(const Adjacency& adj, std::span<const Index> seeds, Parity parity) {
  const auto clusters = determine_clusters(adj);
  std::vector<Index> cluster_of(static_cast<std::size_t>(adj.size()), -1);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (Index i : clusters[c]) cluster_of[i] = static_cast<Index>(c);
  }
  std::vector<Index> seed_of(clusters.size(), -1);
  for (Index s : seeds) {
    if (s < 0 || s >= adj.size()) throw invalid_argument("bistride_pool: seed " + std::to_string(s) + " out of range");
    Index& slot = seed_of[cluster_of[s]];
    if (slot >= 0) {
      throw invalid_argument("bistride_pool: seeds " + std::to_string(slot) + " and " + std::to_string(s) +
                             " lie in the same cluster");
    }
    slot = s;
  }
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (seed_of[c] < 0) {
      throw invalid_argument("bistride_pool: cluster containing node " + std::to_string(clusters[c].front()) +
                             " has no seed");
    }
  }

  PoolingPlan plan;
  plan.parity = parity;
  plan.seeds = seed_of;
  std::sort(plan.seeds.begin(), plan.seeds.end());
  if (adj.size() == 0) return plan;

  const auto field = bfs_distances(adj, plan.seeds);
  const int want = parity == Parity::Even ? 0 : 1;
  std::vector<char> cluster_hit(clusters.size(), 0);
  for (Index i = 0; i < adj.size(); ++i) {
    if (field.dist[i] % 2 == want) {
      plan.pooled.push_back(i);
      cluster_hit[cluster_of[i]] = 1;
    }
  }
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (!cluster_hit[c]) {
      throw invalid_argument("bistride_pool: cluster containing node " + std::to_string(clusters[c].front()) +
                             " has no node at " + to_string(parity) + " distance; pooling would empty it");
    }
  }
  return plan;
}

EnhancedLevel enhance_level(const Adjacency& adj, const Adjacency* contact, const PoolingPlan& plan) {
  if (contact && contact->size() != adj.size()) {
    throw invalid_argument("enhance_level: contact adjacency has " + std::to_string(contact->size()) +
                           " nodes, mesh adjacency " + std::to_string(adj.size()));
  }
  for (Index i : plan.pooled) {
    if (i < 0 || i >= adj.size()) throw invalid_argument("enhance_level: pooled index out of range");
  }
  const auto& a = adj.matrix();
  const auto squared = bool_product(a, a, ProductOptions::with_self_loops(true, /*drop_diagonal=*/true));
  EnhancedLevel out{Adjacency(stride_submatrix(squared, plan.pooled, plan.pooled)), std::nullopt};
  if (contact) {
    const auto left = bool_product(a, contact->matrix(), {true, false, false});
    const auto full = bool_product(left, a, {false, true, true});
    out.contact = Adjacency(stride_submatrix(full, plan.pooled, plan.pooled));
  }
  return out;
}

Matrix take_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

}  // namespace bsms
