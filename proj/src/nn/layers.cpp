#include "tabvfl/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "tabvfl/errors.hpp"

namespace tabvfl::nn {

namespace {

constexpr double kResidualScale = 0.70710678118654752440;  // √0.5

}  // namespace

Matrix fc_forward(const Matrix& x, const Parameter& weight, const Parameter* bias) {
  if (x.cols() != weight.value.rows()) {
    throw ShapeError("fc_forward: input " + x.shape_str() + " vs weight " +
                     weight.value.shape_str() + " (" + weight.id + ")");
  }
  Matrix y = matmul(x, weight.value);
  if (bias != nullptr) add_row_inplace(y, bias->value);
  return y;
}

Linear::Linear(const std::string& id, std::size_t in_dim, std::size_t out_dim, bool with_bias,
               std::uint64_t seed)
    : weight(id + ".W", glorot_uniform(in_dim, out_dim, seed, id + ".W")) {
  if (with_bias) bias.emplace(id + ".b", Matrix(1, out_dim));
}

Matrix Linear::forward(const Matrix& x) const {
  return fc_forward(x, weight, bias ? &*bias : nullptr);
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  if (dy.cols() != out_dim() || dy.rows() != x.rows()) {
    throw ShapeError("Linear::backward: grad " + dy.shape_str() + " for " + weight.id);
  }
  weight.grad += matmul_tn(x, dy);
  if (bias) bias->grad += column_sums(dy);
  return matmul_nt(dy, weight.value);
}

void Linear::append_params(ParamRefs& out) {
  out.push_back(&weight);
  if (bias) out.push_back(&*bias);
}

void Linear::append_state(StateRefs& out) {
  out.push_back({weight.id, &weight.value});
  if (bias) out.push_back({bias->id, &bias->value});
}

BatchNorm::BatchNorm(const std::string& id, std::size_t dim, double momentum_, double eps_)
    : gamma(id + ".gamma", Matrix(1, dim, 1.0)),
      beta(id + ".beta", Matrix(1, dim, 0.0)),
      running_mean(1, dim, 0.0),
      running_var(1, dim, 1.0),
      momentum(momentum_),
      eps(eps_) {}

Matrix BatchNorm::forward(const Matrix& x, Mode mode, BatchNormCache* cache) {
  const std::size_t d = dim();
  if (x.cols() != d) {
    throw ShapeError("batchnorm: input " + x.shape_str() + " vs dim " + std::to_string(d) +
                     " (" + gamma.id + ")");
  }
  if (x.rows() == 0) throw ShapeError("batchnorm: empty batch (" + gamma.id + ")");

  Matrix mean(1, d);
  Matrix var(1, d);
  if (mode == Mode::Training) {
    const double n = static_cast<double>(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) mean(0, j) += x(i, j);
    for (std::size_t j = 0; j < d; ++j) mean(0, j) /= n;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = x(i, j) - mean(0, j);
        var(0, j) += c * c;
      }
    for (std::size_t j = 0; j < d; ++j) {
      var(0, j) /= n;
      running_mean(0, j) = (1.0 - momentum) * running_mean(0, j) + momentum * mean(0, j);
      running_var(0, j) = (1.0 - momentum) * running_var(0, j) + momentum * var(0, j);
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  Matrix inv_std(1, d);
  for (std::size_t j = 0; j < d; ++j) inv_std(0, j) = 1.0 / std::sqrt(var(0, j) + eps);

  Matrix x_hat(x.rows(), d);
  Matrix y(x.rows(), d);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      x_hat(i, j) = (x(i, j) - mean(0, j)) * inv_std(0, j);
      y(i, j) = gamma.value(0, j) * x_hat(i, j) + beta.value(0, j);
    }
  if (cache != nullptr) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

Matrix BatchNorm::backward(const BatchNormCache& cache, const Matrix& dy) {
  require_same_shape(cache.x_hat, dy, "BatchNorm::backward (" + gamma.id + ")");
  const std::size_t d = dim();
  const std::size_t rows = dy.rows();
  Matrix sum_dxhat(1, d);
  Matrix sum_dxhat_xhat(1, d);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      gamma.grad(0, j) += dy(i, j) * cache.x_hat(i, j);
      beta.grad(0, j) += dy(i, j);
      const double dxh = dy(i, j) * gamma.value(0, j);
      sum_dxhat(0, j) += dxh;
      sum_dxhat_xhat(0, j) += dxh * cache.x_hat(i, j);
    }

  Matrix dx(rows, d);
  if (cache.mode == Mode::Inference) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < d; ++j)
        dx(i, j) = dy(i, j) * gamma.value(0, j) * cache.inv_std(0, j);
    return dx;
  }
  const double n = static_cast<double>(rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dy(i, j) * gamma.value(0, j);
      dx(i, j) = cache.inv_std(0, j) / n *
                 (n * dxh - sum_dxhat(0, j) - cache.x_hat(i, j) * sum_dxhat_xhat(0, j));
    }
  return dx;
}

void BatchNorm::append_params(ParamRefs& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void BatchNorm::append_state(StateRefs& out) {
  out.push_back({gamma.id, &gamma.value});
  out.push_back({beta.id, &beta.value});
  const std::string base = gamma.id.substr(0, gamma.id.size() - std::string(".gamma").size());
  out.push_back({base + ".running_mean", &running_mean});
  out.push_back({base + ".running_var", &running_var});
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

GluLayer::GluLayer(const std::string& id, std::size_t out_dim_, double bn_momentum, double bn_eps)
    : out_dim(out_dim_), bn(id + ".bn", 2 * out_dim_, bn_momentum, bn_eps) {}

Matrix GluLayer::forward(const Linear& fc, const Matrix& x, Mode mode, GluLayerCache* cache) {
  if (fc.out_dim() != 2 * out_dim) {
    throw ShapeError("GLU layer: fc output " + std::to_string(fc.out_dim()) + " != 2x" +
                     std::to_string(out_dim));
  }
  BatchNormCache bn_cache;
  Matrix h = bn.forward(fc.forward(x), mode, &bn_cache);
  Matrix y(x.rows(), out_dim);
  Matrix gate(x.rows(), out_dim);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < out_dim; ++j) {
      gate(i, j) = sigmoid(h(i, out_dim + j));
      y(i, j) = h(i, j) * gate(i, j);
    }
  if (cache != nullptr) {
    cache->input = x;
    cache->bn_out = std::move(h);
    cache->bn = std::move(bn_cache);
    cache->gate = std::move(gate);
  }
  return y;
}

Matrix GluLayer::backward(Linear& fc, const GluLayerCache& cache, const Matrix& dy) {
  const std::size_t rows = dy.rows();
  Matrix dh(rows, 2 * out_dim);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < out_dim; ++j) {
      const double s = cache.gate(i, j);
      dh(i, j) = dy(i, j) * s;
      dh(i, out_dim + j) = dy(i, j) * cache.bn_out(i, j) * s * (1.0 - s);
    }
  return fc.backward(cache.input, bn.backward(cache.bn, dh));
}

FeatureTransformer::FeatureTransformer(const std::string& id, std::size_t in_dim,
                                       std::size_t out_dim, std::size_t n_shared,
                                       std::size_t n_independent, std::uint64_t seed,
                                       double bn_momentum, double bn_eps)
    : out_dim_(out_dim), n_shared_(n_shared) {
  if (n_shared + n_independent == 0) {
    throw ConfigError("feature transformer " + id + " needs at least one GLU block");
  }
  for (std::size_t l = 0; l < n_shared + n_independent; ++l) {
    layers_.emplace_back(id + ".glu" + std::to_string(l), out_dim, bn_momentum, bn_eps);
    if (l >= n_shared) {
      const std::size_t d_in = l == 0 ? in_dim : out_dim;
      own_fcs_.emplace_back(id + ".fc" + std::to_string(l), d_in, 2 * out_dim, false, seed);
    }
  }
}

std::vector<Linear> FeatureTransformer::make_shared_pool(const std::string& id,
                                                         std::size_t in_dim,
                                                         std::size_t out_dim,
                                                         std::size_t n_shared,
                                                         std::uint64_t seed) {
  std::vector<Linear> pool;
  for (std::size_t l = 0; l < n_shared; ++l) {
    pool.emplace_back(id + ".fc" + std::to_string(l), l == 0 ? in_dim : out_dim, 2 * out_dim,
                      false, seed);
  }
  return pool;
}

const Linear& FeatureTransformer::fc_for(std::span<const Linear> shared, std::size_t layer) const {
  if (layer < n_shared_) {
    if (shared.size() != n_shared_) {
      throw ShapeError("feature transformer: shared pool has " + std::to_string(shared.size()) +
                       " layers, expected " + std::to_string(n_shared_));
    }
    return shared[layer];
  }
  return own_fcs_[layer - n_shared_];
}

Matrix FeatureTransformer::forward(std::span<const Linear> shared, const Matrix& x, Mode mode,
                                   FeatureTransformerCache* cache) {
  if (cache != nullptr) cache->layers.assign(layers_.size(), {});
  Matrix h;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Linear& fc = fc_for(shared, l);
    GluLayerCache* lc = cache != nullptr ? &cache->layers[l] : nullptr;
    if (l == 0) {
      h = layers_[l].forward(fc, x, mode, lc);
    } else {
      Matrix g = layers_[l].forward(fc, h, mode, lc);
      h += g;
      h *= kResidualScale;
    }
  }
  return h;
}

Matrix FeatureTransformer::backward(std::span<Linear> shared, const FeatureTransformerCache& cache,
                                    const Matrix& dy) {
  (void)fc_for(shared, 0);  // validates the pool size
  Matrix grad = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    Linear& fc = l < n_shared_ ? shared[l] : own_fcs_[l - n_shared_];
    if (l == 0) return layers_[l].backward(fc, cache.layers[l], grad);
    Matrix scaled = grad * kResidualScale;
    grad = scaled + layers_[l].backward(fc, cache.layers[l], scaled);
  }
  return grad;
}

void FeatureTransformer::append_params(ParamRefs& out) {
  for (auto& fc : own_fcs_) fc.append_params(out);
  for (auto& layer : layers_) layer.bn.append_params(out);
}

void FeatureTransformer::append_state(StateRefs& out) {
  for (auto& fc : own_fcs_) fc.append_state(out);
  for (auto& layer : layers_) layer.bn.append_state(out);
}

namespace {

Matrix sparsemax_impl(const Matrix& z, const Matrix* allowed) {
  if (z.cols() == 0) throw ShapeError("sparsemax: zero-width input");
  if (allowed != nullptr) require_same_shape(z, *allowed, "sparsemax allowed set");
  // Michelot's active-set iteration: drop coordinates at or below the current
  // threshold until the support stops shrinking.
  Matrix p(z.rows(), z.cols());
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    support.clear();
    for (std::size_t j = 0; j < row.size(); ++j)
      if (allowed == nullptr || (*allowed)(i, j) > 0.0) support.push_back(j);
    if (support.empty())
      for (std::size_t j = 0; j < row.size(); ++j) support.push_back(j);
    const std::vector<std::size_t> candidates = support;
    double tau = 0.0;
    for (;;) {
      double sum = 0.0;
      for (std::size_t j : support) sum += row[j];
      tau = (sum - 1.0) / static_cast<double>(support.size());
      const std::size_t before = support.size();
      std::erase_if(support, [&](std::size_t j) { return row[j] <= tau; });
      if (support.size() == before) break;
    }
    for (std::size_t j : candidates) p(i, j) = std::max(row[j] - tau, 0.0);
  }
  return p;
}

}  // namespace

Matrix sparsemax(const Matrix& z) { return sparsemax_impl(z, nullptr); }

Matrix sparsemax(const Matrix& z, const Matrix& allowed) { return sparsemax_impl(z, &allowed); }

Matrix sparsemax_backward(const Matrix& p, const Matrix& dp) {
  require_same_shape(p, dp, "sparsemax_backward");
  Matrix dz(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < p.cols(); ++j)
      if (p(i, j) > 0.0) {
        sum += dp(i, j);
        ++count;
      }
    const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j)
      dz(i, j) = p(i, j) > 0.0 ? dp(i, j) - mean : 0.0;
  }
  return dz;
}

AttentiveTransformer::AttentiveTransformer(const std::string& id, std::size_t n_a,
                                           std::size_t n_features, std::uint64_t seed,
                                           double bn_momentum, double bn_eps)
    : fc(id + ".fc", n_a, n_features, false, seed),
      bn(id + ".bn", n_features, bn_momentum, bn_eps) {}

Matrix AttentiveTransformer::forward(const Matrix& a_prev, const Matrix& prior, Mode mode,
                                     AttentiveCache* cache) {
  BatchNormCache bn_cache;
  Matrix h = bn.forward(fc.forward(a_prev), mode, &bn_cache);
  require_same_shape(h, prior, "attentive transformer prior");
  Matrix mask = sparsemax(hadamard(h, prior), prior);
  if (cache != nullptr) {
    cache->a_prev = a_prev;
    cache->bn_out = std::move(h);
    cache->bn = std::move(bn_cache);
    cache->prior = prior;
    cache->mask = mask;
  }
  return mask;
}

AttentiveGrads AttentiveTransformer::backward(const AttentiveCache& cache, const Matrix& d_mask) {
  Matrix dz = sparsemax_backward(cache.mask, d_mask);
  AttentiveGrads out;
  out.d_prior = hadamard(dz, cache.bn_out);
  Matrix dh = hadamard(dz, cache.prior);
  out.d_a_prev = fc.backward(cache.a_prev, bn.backward(cache.bn, dh));
  return out;
}

void AttentiveTransformer::append_params(ParamRefs& out) {
  fc.append_params(out);
  bn.append_params(out);
}

MaskStep attentive_mask_step(AttentiveTransformer& att, const Matrix& a_prev, const Matrix& prior,
                             double gamma_relax, Mode mode, AttentiveCache* cache) {
  MaskStep out;
  out.mask = att.forward(a_prev, prior, mode, cache);
  out.prior_next = Matrix(prior.rows(), prior.cols());
  for (std::size_t i = 0; i < prior.rows(); ++i)
    for (std::size_t j = 0; j < prior.cols(); ++j)
      out.prior_next(i, j) = prior(i, j) * (gamma_relax - out.mask(i, j));
  return out;
}

void AttentiveTransformer::append_state(StateRefs& out) {
  fc.append_state(out);
  bn.append_state(out);
}

Matrix relu(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.values()) v = std::max(v, 0.0);
  return y;
}

}  // namespace tabvfl::nn
