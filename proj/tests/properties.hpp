#pragma once

// Brute-force structural checks on hierarchies, shared by the unit and
// acceptance suites.

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "bsms/bistride.hpp"
#include "bsms/hierarchy.hpp"
#include "test_util.hpp"

namespace bsms::testing {

inline std::vector<Index> pooled_index(Index n, const std::vector<Index>& pooled) {
  std::vector<Index> idx(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < pooled.size(); ++k) idx[pooled[k]] = static_cast<Index>(k);
  return idx;
}

/// Unpooled nodes without a pooled direct neighbor, summed over levels.
inline long two_cc_violations(const Hierarchy& h) {
  long bad = 0;
  for (int l = 0; l + 1 < h.depth(); ++l) {
    const auto& a = h.levels[l].adjacency;
    const auto idx = pooled_index(a.size(), h.plans[l].pooled);
    for (Index j = 0; j < a.size(); ++j) {
      if (idx[j] >= 0) continue;
      const auto nb = a.neighbors(j);
      bad += std::none_of(nb.begin(), nb.end(), [&](Index i) { return idx[i] >= 0; });
    }
  }
  return bad;
}

/// Clusters of level l whose retained nodes do not form exactly one
/// connected component of level l + 1, summed over levels.
inline long coarse_connectivity_violations(const Hierarchy& h) {
  long bad = 0;
  for (int l = 0; l + 1 < h.depth(); ++l) {
    const auto fine = neighbor_lists(dense(h.levels[l].adjacency.matrix()));
    const auto coarse = neighbor_lists(dense(h.levels[l + 1].adjacency.matrix()));
    const auto& pooled = h.plans[l].pooled;
    std::vector<int> fine_label(fine.size(), -1);
    int clusters = 0;
    for (std::size_t s = 0; s < fine.size(); ++s) {
      if (fine_label[s] >= 0) continue;
      const auto d = list_bfs(fine, static_cast<Index>(s));
      for (std::size_t v = 0; v < fine.size(); ++v) {
        if (d[v] >= 0) fine_label[v] = clusters;
      }
      ++clusters;
    }
    std::vector<char> seen_cluster(static_cast<std::size_t>(clusters), 0);
    std::vector<char> visited(coarse.size(), 0);
    for (std::size_t k = 0; k < pooled.size(); ++k) {
      if (visited[k]) continue;
      const int c = fine_label[pooled[k]];
      if (seen_cluster[c]) ++bad;  // second component for the same cluster
      seen_cluster[c] = 1;
      const auto d = list_bfs(coarse, static_cast<Index>(k));
      for (std::size_t v = 0; v < coarse.size(); ++v) {
        if (d[v] < 0) continue;
        visited[v] = 1;
        if (fine_label[pooled[v]] != c) ++bad;  // edge joining two clusters
      }
    }
    bad += std::count(seen_cluster.begin(), seen_cluster.end(), 0);  // cluster lost entirely
  }
  return bad;
}

struct ContactReport {
  long edges_checked = 0;
  long violations = 0;      // no witness pair at all
  long collapsed = 0;       // only witnesses have i' = j' (endpoints merged into one coarse node)
  long oracle_mismatch = 0; // stored coarse contact differs from the dense oracle
  std::array<long, 4> scenario{};  // [i pooled][j pooled] over ordered pairs i < j
};

/// Checks every contact edge of every level against its coarse successor:
/// pooled i', j' with (i' = i or A(i,i')) and (j' = j or A(j,j')) and a
/// coarse contact edge between them.
inline void check_contact_conservation(const Hierarchy& h, ContactReport& r) {
  for (int l = 0; l + 1 < h.depth(); ++l) {
    const auto& lvl = h.levels[l];
    const auto& next = h.levels[l + 1];
    if (!lvl.contact || !next.contact) {
      r.oracle_mismatch += lvl.contact.has_value() != next.contact.has_value();
      continue;
    }
    const auto& pooled = h.plans[l].pooled;
    const auto a = dense(lvl.adjacency.matrix());
    const auto c = dense(lvl.contact->matrix());
    const auto ai = with_identity(a);
    const auto oracle = drop_diagonal(dense_stride(dense_product(dense_product(ai, c), ai), pooled, pooled));
    const auto stored = dense(next.contact->matrix());
    if (stored != oracle) ++r.oracle_mismatch;

    const auto idx = pooled_index(lvl.size(), pooled);
    const Index n = lvl.size();
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        if (!c[i][j]) continue;
        ++r.edges_checked;
        ++r.scenario[(idx[i] >= 0 ? 2 : 0) + (idx[j] >= 0 ? 1 : 0)];
        bool witness = false, merged = false;
        for (Index ip = 0; ip < n && !witness; ++ip) {
          if (idx[ip] < 0 || !(ip == i || a[i][ip])) continue;
          for (Index jp = 0; jp < n; ++jp) {
            if (idx[jp] < 0 || !(jp == j || a[j][jp])) continue;
            if (ip == jp) {
              merged = true;
            } else if (stored[idx[ip]][idx[jp]]) {
              witness = true;
              break;
            }
          }
        }
        if (!witness) (merged ? r.collapsed : r.violations)++;
      }
    }
  }
}

/// Hierarchy whose first coarsening steps use explicit seeds (one list per
/// step) and the following `extra_levels` steps MinAve seeds, built from the
/// public pooling primitives.
inline Hierarchy build_with_seeds(const Adjacency& adj, const Matrix& positions, const std::optional<Adjacency>& contact,
                                  const std::vector<std::vector<Index>>& seeds, Parity parity, int extra_levels = 0) {
  Hierarchy h = make_single_level(adj, positions, contact);
  const int steps = static_cast<int>(seeds.size()) + extra_levels;
  for (int k = 0; k < steps; ++k) {
    const auto& cur = h.levels.back();
    const auto s = k < static_cast<int>(seeds.size()) ? seeds[k] : seed_min_ave(cur.adjacency);
    auto plan = bistride_pool(cur.adjacency, s, parity);
    auto next = enhance_level(cur.adjacency, cur.contact ? &*cur.contact : nullptr, plan);
    append_level(h, std::move(plan), std::move(next));
  }
  return h;
}

}  // namespace bsms::testing
