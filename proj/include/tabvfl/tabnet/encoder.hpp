#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tabvfl/nn/layers.hpp"
#include "tabvfl/tabnet/config.hpp"

namespace tabvfl::tabnet {

using nn::Matrix;
using nn::Mode;

struct EncoderOutput {
  std::vector<Matrix> steps;  // ReLU(d_k), one per decision step
  Matrix z;                   // Σ_k steps[k]
  std::vector<Matrix> masks;
  double m_loss = 0.0;
};

// TabNet encoder without the input BN (the host's PartialEnc). Also used whole
// by the local models of the baseline designs.
class TabNetEncoder {
 public:
  TabNetEncoder() = default;
  TabNetEncoder(const std::string& id, std::size_t input_dim, const TabNetConfig& cfg,
                std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t latent_dim() const { return n_d_; }
  std::size_t n_steps() const { return steps_.size(); }

  // prior0 = 1−S in pretraining, all ones when finetuning.
  EncoderOutput forward(const Matrix& x, const Matrix& prior0, Mode mode);
  // Gradients w.r.t. each step output plus dLoss/dM_loss; returns dLoss/dx.
  Matrix backward(std::span<const Matrix> d_steps, double d_m_loss);

  void append_params(nn::ParamRefs& out);
  void append_state(nn::StateRefs& out);

 private:
  struct StepCache {
    nn::AttentiveCache att;
    Matrix prior;
    Matrix mask;
    nn::FeatureTransformerCache ft;
    Matrix out;
  };

  std::size_t input_dim_ = 0;
  std::size_t n_d_ = 0;
  double gamma_ = 1.0;
  double eps_mask_ = 1e-15;
  std::vector<nn::Linear> shared_;
  nn::FeatureTransformer splitter_;
  std::vector<nn::FeatureTransformer> steps_;
  std::vector<nn::AttentiveTransformer> att_;

  bool cached_ = false;
  Matrix x_;
  nn::FeatureTransformerCache split_cache_;
  std::vector<StepCache> cache_;
};

// TabNet decoder without the final reconstruction FC (the host's PartialDec):
// Σ_k FT_k(steps[k]), width latent_dim.
class TabNetDecoder {
 public:
  TabNetDecoder() = default;
  TabNetDecoder(const std::string& id, const TabNetConfig& cfg, std::uint64_t seed);

  Matrix forward(std::span<const Matrix> steps, Mode mode);
  std::vector<Matrix> backward(const Matrix& d_out);

  void append_params(nn::ParamRefs& out);
  void append_state(nn::StateRefs& out);

 private:
  std::vector<nn::Linear> shared_;
  std::vector<nn::FeatureTransformer> steps_;
  std::vector<nn::FeatureTransformerCache> cache_;
  bool cached_ = false;
};

}  // namespace tabvfl::tabnet
