#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace bsms {

/// Dense node index. All reindexing maps are explicit arrays of these.
using Index = std::int32_t;

/// Row-major dense matrix: one row per node (or edge, or batch entry).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

}  // namespace bsms
