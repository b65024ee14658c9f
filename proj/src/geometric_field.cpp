#include "pano4d/geometric_field.hpp"

#include <cmath>

namespace pano4d::spatial {

namespace {

double act(Activation a, double z) {
  if (a == Activation::ReLU) return z > 0.0 ? z : 0.0;
  return z * sigmoid(z);
}

double act_grad(Activation a, double z) {
  if (a == Activation::ReLU) return z > 0.0 ? 1.0 : 0.0;
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

}  // namespace

GeometricField::GeometricField(FieldArchitecture arch, std::mt19937_64& rng, double initial_depth) : arch_(arch) {
  if (arch.hidden_layers < 0 || arch.width < 1 || arch.octaves < 0)
    throw ArgumentError("GeometricField: bad architecture");
  if (!(initial_depth > 0.0) || !std::isfinite(initial_depth))
    throw ArgumentError("GeometricField: initial depth must be positive");

  std::size_t offset = 0;
  int in = input_dim();
  for (int l = 0; l <= arch.hidden_layers; ++l) {
    const int out = l == arch.hidden_layers ? 1 : arch.width;
    Layer layer{offset, offset + static_cast<std::size_t>(in) * out, in, out};
    offset = layer.bias_offset + out;
    layers_.push_back(layer);
    in = out;
  }
  params_.assign(offset, 0.0);

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const bool last = l + 1 == layers_.size();
    // small output weights keep the untrained field close to its bias
    const double std_dev = last ? 0.01 / std::sqrt(layer.in) : std::sqrt(2.0 / layer.in);
    for (std::size_t i = 0; i < static_cast<std::size_t>(layer.in) * layer.out; ++i)
      params_[layer.weight_offset + i] = std_dev * normal(rng);
  }
  params_[layers_.back().bias_offset] = softplus_inverse(initial_depth);
}

Matrix GeometricField::encode(std::span<const Vec3> dirs, int octaves) {
  Matrix x(static_cast<Eigen::Index>(dirs.size()), 3 + 6 * octaves);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int c = 0; c < 3; ++c) x(r, c) = dirs[i][c];
    for (int k = 0; k < octaves; ++k) {
      const double f = std::ldexp(1.0, k);
      for (int c = 0; c < 3; ++c) {
        x(r, 3 + 6 * k + c) = std::sin(f * dirs[i][c]);
        x(r, 6 + 6 * k + c) = std::cos(f * dirs[i][c]);
      }
    }
  }
  return x;
}

Eigen::VectorXd GeometricField::forward(const Matrix& encoded, Cache* cache) const {
  if (layers_.empty()) throw ArgumentError("GeometricField: uninitialized");
  if (encoded.cols() != input_dim()) throw ArgumentError("GeometricField: encoding width mismatch");
  if (cache) {
    cache->pre.clear();
    cache->post.clear();
    cache->post.push_back(encoded);
  }
  Matrix h = encoded;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Matrix z = h * weight(layers_[l]);
    z.rowwise() += bias(layers_[l]).transpose();
    h = z.unaryExpr([a = arch_.activation](double v) { return act(a, v); });
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(h);
    }
  }
  const Layer& last = layers_.back();
  Eigen::VectorXd z = h * weight(last);
  z.array() += params_[last.bias_offset];
  if (cache) cache->out_pre = z;
  return z.unaryExpr([](double v) { return softplus(v); });
}

double GeometricField::evaluate(const Vec3& dir) const {
  const Vec3 d[1] = {dir};
  return forward(encode(d, arch_.octaves))(0);
}

void GeometricField::backward(const Cache& cache, const Eigen::VectorXd& grad_out, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ArgumentError("GeometricField::backward: gradient size mismatch");
  auto weight_grad = [&](const Layer& l) { return Eigen::Map<Matrix>(grad.data() + l.weight_offset, l.in, l.out); };
  auto bias_grad = [&](const Layer& l) { return Eigen::Map<Eigen::VectorXd>(grad.data() + l.bias_offset, l.out); };

  const Eigen::VectorXd g_out =
      grad_out.array() * cache.out_pre.unaryExpr([](double v) { return sigmoid(v); }).array();
  const Layer& last = layers_.back();
  weight_grad(last) += cache.post.back().transpose() * g_out;
  grad[last.bias_offset] += g_out.sum();

  Matrix g = g_out * weight(last).transpose();
  for (std::size_t l = layers_.size() - 1; l-- > 0;) {
    const Matrix gz =
        g.array() * cache.pre[l].unaryExpr([a = arch_.activation](double v) { return act_grad(a, v); }).array();
    weight_grad(layers_[l]) += cache.post[l].transpose() * gz;
    bias_grad(layers_[l]) += gz.colwise().sum().transpose();
    if (l > 0) g = gz * weight(layers_[l]).transpose();
  }
}

}  // namespace pano4d::spatial
