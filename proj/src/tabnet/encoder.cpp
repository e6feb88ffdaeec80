#include "tabvfl/tabnet/encoder.hpp"

#include "tabvfl/errors.hpp"
#include "tabvfl/nn/losses.hpp"

namespace tabvfl::tabnet {

using nn::Linear;

TabNetEncoder::TabNetEncoder(const std::string& id, std::size_t input_dim,
                             const TabNetConfig& cfg, std::uint64_t seed)
    : input_dim_(input_dim), n_d_(cfg.latent_dim), gamma_(cfg.gamma_relax),
      eps_mask_(cfg.eps_mask) {
  if (input_dim == 0) throw ConfigError("encoder " + id + ": input width must be positive");
  const std::size_t width = 2 * n_d_;  // n_d + n_a
  shared_ = nn::FeatureTransformer::make_shared_pool(id + ".shared", input_dim, width,
                                                     cfg.n_shared, seed);
  splitter_ = nn::FeatureTransformer(id + ".split", input_dim, width, cfg.n_shared,
                                     cfg.n_independent, seed, cfg.bn_momentum, cfg.bn_eps);
  for (std::size_t k = 0; k < cfg.n_steps; ++k) {
    const std::string sid = id + ".step" + std::to_string(k);
    steps_.emplace_back(sid + ".ft", input_dim, width, cfg.n_shared, cfg.n_independent, seed,
                        cfg.bn_momentum, cfg.bn_eps);
    att_.emplace_back(sid + ".att", n_d_, input_dim, seed, cfg.bn_momentum, cfg.bn_eps);
  }
}

EncoderOutput TabNetEncoder::forward(const Matrix& x, const Matrix& prior0, Mode mode) {
  if (x.cols() != input_dim_) {
    throw ShapeError("encoder: expected width " + std::to_string(input_dim_) + ", got " +
                     x.shape_str());
  }
  nn::require_same_shape(x, prior0, "encoder prior");
  cached_ = false;
  x_ = x;
  cache_.assign(steps_.size(), StepCache{});

  EncoderOutput res;
  res.z = Matrix(x.rows(), n_d_);
  Matrix split_out = splitter_.forward(shared_, x, mode, &split_cache_);
  Matrix att = nn::slice_cols(split_out, n_d_, 2 * n_d_);
  Matrix prior = prior0;
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    StepCache& c = cache_[k];
    c.prior = prior;
    nn::MaskStep ms = nn::attentive_mask_step(att_[k], att, prior, gamma_, mode, &c.att);
    c.mask = ms.mask;
    prior = std::move(ms.prior_next);

    Matrix masked_x = nn::hadamard(c.mask, x);
    c.out = steps_[k].forward(shared_, masked_x, mode, &c.ft);
    Matrix d = nn::relu(nn::slice_cols(c.out, 0, n_d_));
    att = nn::slice_cols(c.out, n_d_, 2 * n_d_);
    res.z += d;
    res.steps.push_back(std::move(d));
    res.masks.push_back(c.mask);
  }
  res.m_loss = nn::sparsity_loss(res.masks, eps_mask_);
  cached_ = true;
  return res;
}

Matrix TabNetEncoder::backward(std::span<const Matrix> d_steps, double d_m_loss) {
  if (!cached_) throw NumericError("encoder backward without forward");
  if (d_steps.size() != steps_.size()) {
    throw ShapeError("encoder backward: expected " + std::to_string(steps_.size()) +
                     " step gradients, got " + std::to_string(d_steps.size()));
  }
  const std::size_t B = x_.rows();
  Matrix dx(B, input_dim_);
  Matrix d_att(B, n_d_);
  Matrix d_prior(B, input_dim_);  // w.r.t. the prior produced by step k
  for (std::size_t k = steps_.size(); k-- > 0;) {
    const StepCache& c = cache_[k];
    nn::require_same_shape(d_steps[k], Matrix(B, n_d_), "encoder step gradient");
    Matrix d_out(B, 2 * n_d_);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t j = 0; j < n_d_; ++j) {
        d_out(r, j) = c.out(r, j) > 0.0 ? d_steps[k](r, j) : 0.0;
        d_out(r, n_d_ + j) = d_att(r, j);
      }
    }
    Matrix d_masked = steps_[k].backward(shared_, c.ft, d_out);

    // masked_x = M ⊙ x ; prior_{k+1} = prior_k ⊙ (γ − M)
    Matrix d_mask = nn::hadamard(d_masked, x_);
    dx += nn::hadamard(d_masked, c.mask);
    Matrix d_prior_k(B, input_dim_);
    for (std::size_t i = 0; i < d_mask.size(); ++i) {
      d_mask.values()[i] -= d_prior.values()[i] * c.prior.values()[i];
      d_prior_k.values()[i] = d_prior.values()[i] * (gamma_ - c.mask.values()[i]);
    }
    if (d_m_loss != 0.0) {
      d_mask += nn::sparsity_loss_grad(c.mask, steps_.size(), eps_mask_) * d_m_loss;
    }
    nn::AttentiveGrads ag = att_[k].backward(c.att, d_mask);
    d_prior = d_prior_k + ag.d_prior;
    d_att = std::move(ag.d_a_prev);
  }
  Matrix d_split(B, 2 * n_d_);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t j = 0; j < n_d_; ++j) d_split(r, n_d_ + j) = d_att(r, j);
  dx += splitter_.backward(shared_, split_cache_, d_split);
  return dx;
}

void TabNetEncoder::append_params(nn::ParamRefs& out) {
  for (Linear& fc : shared_) fc.append_params(out);
  splitter_.append_params(out);
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    steps_[k].append_params(out);
    att_[k].append_params(out);
  }
}

void TabNetEncoder::append_state(nn::StateRefs& out) {
  for (Linear& fc : shared_) fc.append_state(out);
  splitter_.append_state(out);
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    steps_[k].append_state(out);
    att_[k].append_state(out);
  }
}

TabNetDecoder::TabNetDecoder(const std::string& id, const TabNetConfig& cfg, std::uint64_t seed) {
  const std::size_t n_d = cfg.latent_dim;
  shared_ = nn::FeatureTransformer::make_shared_pool(id + ".shared", n_d, n_d, cfg.dec_n_shared,
                                                     seed);
  for (std::size_t k = 0; k < cfg.n_steps; ++k) {
    steps_.emplace_back(id + ".step" + std::to_string(k), n_d, n_d, cfg.dec_n_shared,
                        cfg.dec_n_independent, seed, cfg.bn_momentum, cfg.bn_eps);
  }
}

Matrix TabNetDecoder::forward(std::span<const Matrix> steps, Mode mode) {
  if (steps.size() != steps_.size()) {
    throw ShapeError("decoder: expected " + std::to_string(steps_.size()) + " steps, got " +
                     std::to_string(steps.size()));
  }
  cached_ = false;
  cache_.assign(steps_.size(), {});
  Matrix out;
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    Matrix y = steps_[k].forward(shared_, steps[k], mode, &cache_[k]);
    if (k == 0) {
      out = std::move(y);
    } else {
      out += y;
    }
  }
  cached_ = true;
  return out;
}

std::vector<Matrix> TabNetDecoder::backward(const Matrix& d_out) {
  if (!cached_) throw NumericError("decoder backward without forward");
  std::vector<Matrix> grads;
  grads.reserve(steps_.size());
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    grads.push_back(steps_[k].backward(shared_, cache_[k], d_out));
  }
  return grads;
}

void TabNetDecoder::append_params(nn::ParamRefs& out) {
  for (Linear& fc : shared_) fc.append_params(out);
  for (auto& s : steps_) s.append_params(out);
}

void TabNetDecoder::append_state(nn::StateRefs& out) {
  for (Linear& fc : shared_) fc.append_state(out);
  for (auto& s : steps_) s.append_state(out);
}

}  // namespace tabvfl::tabnet
