#pragma once

// Non-parametric transitions between adjacent levels. The weighted mode
// routes features through a column-stochastic contribution table; `None`
// and `GraphConv` are kept as ablation baselines.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bsms/bistride.hpp"
#include "bsms/graph.hpp"
#include "bsms/types.hpp"

namespace bsms {

/// Compressed-row sparse real matrix.
struct SparseReal {
  Index rows = 0;
  Index cols = 0;
  std::vector<std::int64_t> row_ptr{0};
  std::vector<Index> col_idx;
  std::vector<double> vals;

  std::int64_t nnz() const { return static_cast<std::int64_t>(col_idx.size()); }

  /// Dense copy, for oracles and debugging.
  Matrix to_dense() const;

  /// y = M x
  Matrix apply(const Matrix& x) const;
  /// y = M^T x
  Matrix apply_transpose(const Matrix& x) const;

  bool operator==(const SparseReal&) const = default;
};

/// |V_l| x |V_{l+1}| table: entry (i, j) is sender i's share of receiver j.
using ContributionTable = SparseReal;

enum class TransitionMode { Weighted, None, GraphConv };

TransitionMode parse_transition_mode(const std::string& s);
std::string to_string(TransitionMode m);

struct ContributionResult {
  ContributionTable table;
  std::vector<double> coarse_weights;
};

/// Row-normalizes T = A + I, convolves the node weights once and
/// normalizes per pooled receiver column.
ContributionResult contribution_table(const Adjacency& adj, const PoolingPlan& plan, std::span<const double> weights);

/// Row-normalized (A + I), the operator behind GraphConv transitions.
SparseReal normalized_convolution(const Adjacency& adj);

/// Everything a level pair needs to move features in either direction.
struct Transition {
  ContributionTable table;
  std::vector<Index> pooled;
  SparseReal convolution;

  Index fine_size() const { return table.rows; }
  Index coarse_size() const { return table.cols; }

  bool operator==(const Transition&) const = default;
};

Matrix downsample(const Matrix& fine, const Transition& t, TransitionMode mode);
Matrix upsample(const Matrix& coarse, const Transition& t, TransitionMode mode);

/// Adjoints of the (linear) transitions, used by backpropagation.
Matrix downsample_adjoint(const Matrix& grad_coarse, const Transition& t, TransitionMode mode);
Matrix upsample_adjoint(const Matrix& grad_fine, const Transition& t, TransitionMode mode);

}  // namespace bsms
