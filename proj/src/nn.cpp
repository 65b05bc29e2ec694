#include "bsms/nn.hpp"

#include <cmath>
#include <random>

#include "bsms/error.hpp"

namespace bsms {

void MlpParams::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("w1", w1);
  fn("b1", b1);
  fn("w2", w2);
  fn("b2", b2);
  fn("w3", w3);
  fn("b3", b3);
  if (residual == Residual::Projection) fn("wp", wp);
  if (layernorm) {
    fn("gamma", gamma);
    fn("beta", beta);
  }
}

void MlpParams::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<MlpParams*>(this)->for_each([&](const std::string& name, Matrix& m) { fn(name, m); });
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z = *this;
  z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

MlpParams init_params(const MlpShape& shape, std::uint64_t seed) {
  if (shape.input <= 0 || shape.hidden <= 0 || shape.output <= 0) {
    throw invalid_argument("init_params: layer widths must be positive (got " + std::to_string(shape.input) + "," +
                           std::to_string(shape.hidden) + "," + std::to_string(shape.output) + ")");
  }
  if (shape.residual == Residual::Identity && shape.input != shape.output) {
    throw invalid_argument("init_params: identity residual needs input width == output width");
  }
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](int out, int in) {
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-s, s);
    Matrix w(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    return w;
  };
  MlpParams p;
  p.layernorm = shape.layernorm;
  p.residual = shape.residual;
  p.w1 = glorot(shape.hidden, shape.input);
  p.b1 = Matrix::Zero(1, shape.hidden);
  p.w2 = glorot(shape.hidden, shape.hidden);
  p.b2 = Matrix::Zero(1, shape.hidden);
  p.w3 = glorot(shape.output, shape.hidden);
  p.b3 = Matrix::Zero(1, shape.output);
  if (shape.residual == Residual::Projection) p.wp = glorot(shape.output, shape.input);
  if (shape.layernorm) {
    p.gamma = Matrix::Ones(1, shape.output);
    p.beta = Matrix::Zero(1, shape.output);
  }
  return p;
}

namespace {

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

// Mask with ReLU'(0) = 0.
Matrix relu_grad(const Matrix& z, const Matrix& upstream) {
  return (z.array() > 0.0).select(upstream, Matrix::Zero(upstream.rows(), upstream.cols()));
}

}  // namespace

Matrix layer_norm_rows(const Matrix& x, double eps) {
  Matrix out(x.rows(), x.cols());
  const double inv_n = 1.0 / static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() * inv_n;
    const auto centered = (x.row(r).array() - mean).matrix();
    const double var = centered.squaredNorm() * inv_n;
    out.row(r) = centered / std::sqrt(var + eps);
  }
  return out;
}

Matrix mlp_apply(const MlpParams& p, const Matrix& x, MlpCache* cache) {
  if (x.cols() != p.input_dim()) {
    throw invalid_argument("mlp_apply: input width " + std::to_string(x.cols()) + ", expected " +
                           std::to_string(p.input_dim()));
  }
  if (!x.allFinite()) throw numerical_error("mlp_apply: non-finite input");

  Matrix z1 = x * p.w1.transpose();
  z1.rowwise() += p.b1.row(0);
  Matrix z2 = relu(z1) * p.w2.transpose();
  z2.rowwise() += p.b2.row(0);
  Matrix pre = relu(z2) * p.w3.transpose();
  pre.rowwise() += p.b3.row(0);
  if (p.residual == Residual::Identity) {
    pre += x;
  } else if (p.residual == Residual::Projection) {
    pre.noalias() += x * p.wp.transpose();
  }

  Matrix y;
  Matrix xhat;
  Eigen::VectorXd inv_std;
  if (p.layernorm) {
    const double inv_n = 1.0 / static_cast<double>(pre.cols());
    xhat.resize(pre.rows(), pre.cols());
    inv_std.resize(pre.rows());
    for (Eigen::Index r = 0; r < pre.rows(); ++r) {
      const double mean = pre.row(r).sum() * inv_n;
      xhat.row(r) = (pre.row(r).array() - mean).matrix();
      const double var = xhat.row(r).squaredNorm() * inv_n;
      inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
      xhat.row(r) *= inv_std[r];
    }
    y = (xhat.array().rowwise() * p.gamma.row(0).array()).matrix();
    y.rowwise() += p.beta.row(0);
  } else {
    y = pre;
  }

  if (cache) {
    cache->x = x;
    cache->z1 = std::move(z1);
    cache->z2 = std::move(z2);
    cache->pre = std::move(pre);
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix mlp_grad(const MlpParams& p, const MlpCache& cache, const Matrix& upstream, MlpParams& grads) {
  if (upstream.rows() != cache.x.rows() || upstream.cols() != p.output_dim()) {
    throw invalid_argument("mlp_grad: upstream is " + std::to_string(upstream.rows()) + "x" +
                           std::to_string(upstream.cols()) + ", cache expects " + std::to_string(cache.x.rows()) + "x" +
                           std::to_string(p.output_dim()));
  }
  Matrix dpre;
  if (p.layernorm) {
    grads.gamma.row(0) += (upstream.array() * cache.xhat.array()).colwise().sum().matrix();
    grads.beta.row(0) += upstream.colwise().sum();
    const Matrix dxhat = (upstream.array().rowwise() * p.gamma.row(0).array()).matrix();
    const double inv_n = 1.0 / static_cast<double>(upstream.cols());
    dpre.resize(upstream.rows(), upstream.cols());
    for (Eigen::Index r = 0; r < upstream.rows(); ++r) {
      const double mean_d = dxhat.row(r).sum() * inv_n;
      const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) * inv_n;
      dpre.row(r) = cache.inv_std[r] * (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
    }
  } else {
    dpre = upstream;
  }

  const Matrix h2 = relu(cache.z2);
  grads.w3.noalias() += dpre.transpose() * h2;
  grads.b3.row(0) += dpre.colwise().sum();
  const Matrix dz2 = relu_grad(cache.z2, dpre * p.w3);

  const Matrix h1 = relu(cache.z1);
  grads.w2.noalias() += dz2.transpose() * h1;
  grads.b2.row(0) += dz2.colwise().sum();
  const Matrix dz1 = relu_grad(cache.z1, dz2 * p.w2);

  grads.w1.noalias() += dz1.transpose() * cache.x;
  grads.b1.row(0) += dz1.colwise().sum();
  Matrix dx = dz1 * p.w1;

  if (p.residual == Residual::Identity) {
    dx += dpre;
  } else if (p.residual == Residual::Projection) {
    grads.wp.noalias() += dpre.transpose() * cache.x;
    dx.noalias() += dpre * p.wp;
  }
  return dx;
}

}  // namespace bsms
