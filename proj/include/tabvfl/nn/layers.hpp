#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabvfl/nn/matrix.hpp"
#include "tabvfl/nn/parameter.hpp"

namespace tabvfl::nn {

enum class Mode { Training, Inference };

// y = xW + b. W is d_in×d_out, b is 1×d_out (b broadcast over rows).
Matrix fc_forward(const Matrix& x, const Parameter& weight, const Parameter* bias);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& id, std::size_t in_dim, std::size_t out_dim, bool with_bias,
         std::uint64_t seed);

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  Matrix forward(const Matrix& x) const;
  // Accumulates dW (and db) for the saved input `x`; returns dx.
  Matrix backward(const Matrix& x, const Matrix& dy);
  void append_params(ParamRefs& out);
  void append_state(StateRefs& out);

  Parameter weight;
  std::optional<Parameter> bias;
};

struct BatchNormCache {
  Matrix x_hat;
  Matrix inv_std;  // 1×d
  Mode mode = Mode::Training;
};

// Plain (non-ghost) batch normalisation over the batch axis.
class BatchNorm {
 public:
  static constexpr double kDefaultMomentum = 0.1;
  static constexpr double kDefaultEps = 1e-10;

  BatchNorm() = default;
  BatchNorm(const std::string& id, std::size_t dim, double momentum = kDefaultMomentum,
            double eps = kDefaultEps);

  std::size_t dim() const { return gamma.value.cols(); }

  // Training mode normalises with batch statistics and updates the running
  // estimates; inference mode reads the running estimates only.
  Matrix forward(const Matrix& x, Mode mode, BatchNormCache* cache = nullptr);
  Matrix backward(const BatchNormCache& cache, const Matrix& dy);
  void append_params(ParamRefs& out);
  void append_state(StateRefs& out);

  Parameter gamma;
  Parameter beta;
  Matrix running_mean;
  Matrix running_var;
  double momentum = kDefaultMomentum;
  double eps = kDefaultEps;
};

inline Matrix batchnorm_forward(const Matrix& x, BatchNorm& state, Mode mode) {
  return state.forward(x, mode);
}

double sigmoid(double v);

struct GluLayerCache {
  Matrix input;
  Matrix bn_out;
  BatchNormCache bn;
  Matrix gate;  // sigmoid of the second half
};

// FC(d → 2h, no bias) → BN → first half ⊙ sigmoid(second half).
// The FC may be owned elsewhere (shared across decision steps); the BN is always local.
class GluLayer {
 public:
  GluLayer() = default;
  GluLayer(const std::string& id, std::size_t out_dim, double bn_momentum, double bn_eps);

  Matrix forward(const Linear& fc, const Matrix& x, Mode mode, GluLayerCache* cache);
  Matrix backward(Linear& fc, const GluLayerCache& cache, const Matrix& dy);

  std::size_t out_dim = 0;
  BatchNorm bn;
};

struct FeatureTransformerCache {
  std::vector<GluLayerCache> layers;
};

// A chain of GLU layers: the first `n_shared` take their FC from a shared pool,
// the remaining `n_independent` own theirs. Layer 0 maps d_in → d_out with no
// residual; every later layer is x ← √0.5·(x + glu(x)).
class FeatureTransformer {
 public:
  FeatureTransformer() = default;
  FeatureTransformer(const std::string& id, std::size_t in_dim, std::size_t out_dim,
                     std::size_t n_shared, std::size_t n_independent, std::uint64_t seed,
                     double bn_momentum, double bn_eps);

  // Builds the FC pool that FeatureTransformers with matching dims can share.
  static std::vector<Linear> make_shared_pool(const std::string& id, std::size_t in_dim,
                                              std::size_t out_dim, std::size_t n_shared,
                                              std::uint64_t seed);

  std::size_t out_dim() const { return out_dim_; }

  Matrix forward(std::span<const Linear> shared, const Matrix& x, Mode mode,
                 FeatureTransformerCache* cache);
  Matrix backward(std::span<Linear> shared, const FeatureTransformerCache& cache,
                  const Matrix& dy);
  // Own parameters only (independent FCs and every layer's BN).
  void append_params(ParamRefs& out);
  void append_state(StateRefs& out);

 private:
  const Linear& fc_for(std::span<const Linear> shared, std::size_t layer) const;

  std::size_t out_dim_ = 0;
  std::size_t n_shared_ = 0;
  std::vector<Linear> own_fcs_;
  std::vector<GluLayer> layers_;
};

// Row-wise Euclidean projection onto the probability simplex.
Matrix sparsemax(const Matrix& z);
// Projection onto the face of the simplex spanned by coordinates with
// allowed(i, j) > 0; excluded coordinates get exactly 0. A row with no allowed
// coordinate falls back to the unrestricted projection.
Matrix sparsemax(const Matrix& z, const Matrix& allowed);
// Given p = sparsemax(z) and dL/dp, returns dL/dz (identity minus support mean).
Matrix sparsemax_backward(const Matrix& p, const Matrix& dp);

struct AttentiveCache {
  Matrix a_prev;
  Matrix bn_out;
  BatchNormCache bn;
  Matrix prior;
  Matrix mask;
};

struct AttentiveGrads {
  Matrix d_a_prev;
  Matrix d_prior;
};

// mask = sparsemax(prior ⊙ BN(FC(a_prev))), restricted to features whose prior
// is still positive so an exhausted or masked feature is never selected.
class AttentiveTransformer {
 public:
  AttentiveTransformer() = default;
  AttentiveTransformer(const std::string& id, std::size_t n_a, std::size_t n_features,
                       std::uint64_t seed, double bn_momentum, double bn_eps);

  Matrix forward(const Matrix& a_prev, const Matrix& prior, Mode mode, AttentiveCache* cache);
  AttentiveGrads backward(const AttentiveCache& cache, const Matrix& d_mask);
  void append_params(ParamRefs& out);
  void append_state(StateRefs& out);

  Linear fc;
  BatchNorm bn;
};

struct MaskStep {
  Matrix mask;
  Matrix prior_next;
};

// One attentive step plus the prior update prior_next = prior ⊙ (γ_relax − mask).
MaskStep attentive_mask_step(AttentiveTransformer& att, const Matrix& a_prev, const Matrix& prior,
                             double gamma_relax, Mode mode, AttentiveCache* cache = nullptr);

Matrix relu(const Matrix& x);

}  // namespace tabvfl::nn
