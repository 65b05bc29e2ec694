#include "bsms/transition.hpp"

#include <cmath>

#include "bsms/error.hpp"

namespace bsms {

Matrix SparseReal::to_dense() const {
  Matrix d = Matrix::Zero(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) d(i, col_idx[k]) = vals[k];
  }
  return d;
}

Matrix SparseReal::apply(const Matrix& x) const {
  if (x.rows() != cols) {
    throw invalid_argument("sparse apply: operand has " + std::to_string(x.rows()) + " rows, expected " +
                           std::to_string(cols));
  }
  Matrix y = Matrix::Zero(rows, x.cols());
  for (Index i = 0; i < rows; ++i) {
    for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) y.row(i) += vals[k] * x.row(col_idx[k]);
  }
  return y;
}

Matrix SparseReal::apply_transpose(const Matrix& x) const {
  if (x.rows() != rows) {
    throw invalid_argument("sparse transpose apply: operand has " + std::to_string(x.rows()) + " rows, expected " +
                           std::to_string(rows));
  }
  Matrix y = Matrix::Zero(cols, x.cols());
  for (Index i = 0; i < rows; ++i) {
    for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) y.row(col_idx[k]) += vals[k] * x.row(i);
  }
  return y;
}

TransitionMode parse_transition_mode(const std::string& s) {
  if (s == "weighted") return TransitionMode::Weighted;
  if (s == "none") return TransitionMode::None;
  if (s == "graphconv") return TransitionMode::GraphConv;
  throw invalid_argument("unknown transition mode '" + s + "' (expected weighted|none|graphconv)");
}

std::string to_string(TransitionMode m) {
  switch (m) {
    case TransitionMode::Weighted:
      return "weighted";
    case TransitionMode::None:
      return "none";
    case TransitionMode::GraphConv:
      return "graphconv";
  }
  return "weighted";
}

ContributionResult contribution_table(const Adjacency& adj, const PoolingPlan& plan, std::span<const double> weights) {
  const Index n = adj.size();
  if (static_cast<Index>(weights.size()) != n) {
    throw invalid_argument("contribution_table: " + std::to_string(weights.size()) + " weights for " +
                           std::to_string(n) + " nodes");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw invalid_argument("contribution_table: weights must be positive and finite");
  }
  std::vector<Index> column(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < plan.pooled.size(); ++k) {
    const Index p = plan.pooled[k];
    if (p < 0 || p >= n) throw invalid_argument("contribution_table: pooled index out of range");
    column[p] = static_cast<Index>(k);
  }
  const auto m = static_cast<Index>(plan.pooled.size());

  ContributionResult out;
  auto& c = out.table;
  c.rows = n;
  c.cols = m;
  c.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  std::vector<double> column_sum(static_cast<std::size_t>(m), 0.0);

  std::vector<std::pair<Index, double>> row_entries;
  for (Index i = 0; i < n; ++i) {
    const auto nbrs = adj.neighbors(i);
    const double share = weights[i] / static_cast<double>(nbrs.size() + 1);
    row_entries.clear();
    // Merge the self-loop into the sorted neighbor list.
    bool self_done = false;
    for (Index j : nbrs) {
      if (!self_done && i < j) {
        if (column[i] >= 0) row_entries.emplace_back(column[i], share);
        self_done = true;
      }
      if (column[j] >= 0) row_entries.emplace_back(column[j], share);
    }
    if (!self_done && column[i] >= 0) row_entries.emplace_back(column[i], share);
    for (const auto& [j, v] : row_entries) {
      c.col_idx.push_back(j);
      c.vals.push_back(v);
      column_sum[j] += v;
    }
    c.row_ptr[i + 1] = static_cast<std::int64_t>(c.col_idx.size());
  }
  for (Index j = 0; j < m; ++j) {
    // The self-loop guarantees every pooled receiver at least one sender.
    if (!(column_sum[j] > 0.0)) throw numerical_error("contribution_table: pooled receiver without senders");
  }
  for (std::size_t k = 0; k < c.vals.size(); ++k) c.vals[k] /= column_sum[c.col_idx[k]];
  out.coarse_weights = std::move(column_sum);
  return out;
}

SparseReal normalized_convolution(const Adjacency& adj) {
  SparseReal s;
  const Index n = adj.size();
  s.rows = n;
  s.cols = n;
  s.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index i = 0; i < n; ++i) {
    const auto nbrs = adj.neighbors(i);
    const double v = 1.0 / static_cast<double>(nbrs.size() + 1);
    bool self_done = false;
    for (Index j : nbrs) {
      if (!self_done && i < j) {
        s.col_idx.push_back(i);
        s.vals.push_back(v);
        self_done = true;
      }
      s.col_idx.push_back(j);
      s.vals.push_back(v);
    }
    if (!self_done) {
      s.col_idx.push_back(i);
      s.vals.push_back(v);
    }
    s.row_ptr[i + 1] = static_cast<std::int64_t>(s.col_idx.size());
  }
  return s;
}

namespace {

void check_rows(const Matrix& m, Index expected, const char* what) {
  if (m.rows() != expected) {
    throw invalid_argument(std::string(what) + ": features have " + std::to_string(m.rows()) + " rows, expected " +
                           std::to_string(expected));
  }
}

Matrix stride(const Matrix& fine, const std::vector<Index>& pooled) { return take_rows(fine, pooled); }

Matrix scatter(const Matrix& coarse, const std::vector<Index>& pooled, Index fine_rows) {
  Matrix out = Matrix::Zero(fine_rows, coarse.cols());
  for (std::size_t k = 0; k < pooled.size(); ++k) out.row(pooled[k]) = coarse.row(static_cast<Eigen::Index>(k));
  return out;
}

}  // namespace

Matrix downsample(const Matrix& fine, const Transition& t, TransitionMode mode) {
  check_rows(fine, t.fine_size(), "downsample");
  switch (mode) {
    case TransitionMode::Weighted:
      return t.table.apply_transpose(fine);
    case TransitionMode::None:
      return stride(fine, t.pooled);
    case TransitionMode::GraphConv:
      return stride(t.convolution.apply(fine), t.pooled);
  }
  return {};
}

Matrix upsample(const Matrix& coarse, const Transition& t, TransitionMode mode) {
  check_rows(coarse, t.coarse_size(), "upsample");
  switch (mode) {
    case TransitionMode::Weighted:
      return t.table.apply(coarse);
    case TransitionMode::None:
      return scatter(coarse, t.pooled, t.fine_size());
    case TransitionMode::GraphConv:
      return t.convolution.apply(scatter(coarse, t.pooled, t.fine_size()));
  }
  return {};
}

Matrix downsample_adjoint(const Matrix& grad_coarse, const Transition& t, TransitionMode mode) {
  check_rows(grad_coarse, t.coarse_size(), "downsample_adjoint");
  switch (mode) {
    case TransitionMode::Weighted:
      return t.table.apply(grad_coarse);
    case TransitionMode::None:
      return scatter(grad_coarse, t.pooled, t.fine_size());
    case TransitionMode::GraphConv:
      return t.convolution.apply_transpose(scatter(grad_coarse, t.pooled, t.fine_size()));
  }
  return {};
}

Matrix upsample_adjoint(const Matrix& grad_fine, const Transition& t, TransitionMode mode) {
  check_rows(grad_fine, t.fine_size(), "upsample_adjoint");
  switch (mode) {
    case TransitionMode::Weighted:
      return t.table.apply_transpose(grad_fine);
    case TransitionMode::None:
      return stride(grad_fine, t.pooled);
    case TransitionMode::GraphConv:
      return stride(t.convolution.apply_transpose(grad_fine), t.pooled);
  }
  return {};
}

}  // namespace bsms
