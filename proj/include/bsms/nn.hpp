#pragma once

// Two-hidden-layer ReLU MLPs with residual connection and LayerNorm, with
// exact reverse-mode gradients. 64-bit throughout.

#include <cstdint>
#include <functional>
#include <string>

#include "bsms/types.hpp"

namespace bsms {

enum class Residual {
  None,
  Identity,    // requires input width == output width
  Projection,  // learned linear map input -> output, no bias
};

struct MlpShape {
  int input = 0;
  int hidden = 128;
  int output = 128;
  bool layernorm = true;
  Residual residual = Residual::Identity;

  /// Identity residual when the widths agree, a projection otherwise.
  static Residual residual_for(int input, int output, bool enabled) {
    if (!enabled) return Residual::None;
    return input == output ? Residual::Identity : Residual::Projection;
  }
};

inline constexpr double kLayerNormEps = 1e-5;

/// Weights are stored (out x in); biases and LayerNorm affine terms as 1-row
/// matrices so every tensor has the same type.
struct MlpParams {
  Matrix w1, b1, w2, b2, w3, b3;
  Matrix wp;           // projection residual only
  Matrix gamma, beta;  // LayerNorm only
  bool layernorm = false;
  Residual residual = Residual::None;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w3.rows()); }
  MlpShape shape() const { return {input_dim(), hidden_dim(), output_dim(), layernorm, residual}; }

  /// Visits every active tensor with a stable name.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  /// Same shapes, all zero; used as a gradient accumulator.
  MlpParams zeros_like() const;
};

/// Glorot-uniform weights, zero biases, unit gamma, zero beta.
/// Deterministic given `seed`.
MlpParams init_params(const MlpShape& shape, std::uint64_t seed);

/// Activations kept from the forward pass for backpropagation.
struct MlpCache {
  Matrix x, z1, z2, pre, xhat;
  Eigen::VectorXd inv_std;
};

/// y = LN(residual(x) + W3 relu(W2 relu(W1 x + b1) + b2) + b3), one row per
/// sample. Throws on a width mismatch or non-finite input.
Matrix mlp_apply(const MlpParams& p, const Matrix& x, MlpCache* cache = nullptr);

/// Accumulates dL/dparams into `grads` and returns dL/dx. ReLU'(0) = 0.
Matrix mlp_grad(const MlpParams& p, const MlpCache& cache, const Matrix& upstream, MlpParams& grads);

/// Row-wise LayerNorm without the affine part, exposed for tests.
Matrix layer_norm_rows(const Matrix& x, double eps = kLayerNormEps);

}  // namespace bsms
