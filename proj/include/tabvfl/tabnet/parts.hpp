#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tabvfl/nn/layers.hpp"
#include "tabvfl/tabnet/config.hpp"

namespace tabvfl::tabnet {

using nn::Matrix;
using nn::Mode;

// Column width of each guest's share, in guest order. The first (total mod K)
// shares are one wider.
std::vector<std::size_t> uniform_widths(std::size_t total, std::size_t k);

// Contiguous column chunks of `m` with the given widths.
std::vector<Matrix> split_cols(const Matrix& m, std::span<const std::size_t> widths);

std::vector<Matrix> partition_uniform(const Matrix& out_intermediate, std::size_t k);

// Column concatenation of per-guest parts in the order given (ascending guest id).
Matrix concat_intermediate(std::span<const Matrix> parts);

// Elementwise sum per decision step across guests.
std::vector<Matrix> le_aggregate(std::span<const std::vector<Matrix>> per_guest);

struct Obfuscated {
  Matrix x_masked;
  Matrix s;  // 1 = masked, to be reconstructed
};

// Bernoulli(p_mask) feature masking. Stateless apart from its RNG stream.
class RandomObfuscator {
 public:
  RandomObfuscator() = default;
  RandomObfuscator(double p_mask, std::uint64_t seed);

  Obfuscated apply(const Matrix& x);

 private:
  double p_ = 0.0;
  std::mt19937_64 rng_;
};

// BN followed by a square FC: the guest-side feature extractor.
class Extractor {
 public:
  Extractor() = default;
  Extractor(const std::string& id, std::size_t dim, const TabNetConfig& cfg, std::uint64_t seed);

  std::size_t dim() const { return bn.dim(); }

  Matrix forward(const Matrix& x, Mode mode);
  Matrix backward(const Matrix& dy);
  // Bitwise copy of weights and running statistics.
  void copy_from(const Extractor& other);

  void append_params(nn::ParamRefs& out);
  void append_state(nn::StateRefs& out);

  nn::BatchNorm bn;
  nn::Linear fc;

 private:
  nn::BatchNormCache bn_cache_;
  Matrix bn_out_;
  bool cached_ = false;
};

// Everything a guest owns in the split design: obfuscator, the pretraining
// extractor (repr_bin), the finetuning extractor (repr) and the
// reconstruction FC (rec) mapping its latent chunk back to its features.
class GuestBottom {
 public:
  GuestBottom() = default;
  GuestBottom(const std::string& id, std::size_t n_features, std::size_t chunk_dim,
              const TabNetConfig& cfg, std::uint64_t seed);

  std::size_t n_features() const { return repr.dim(); }
  std::size_t chunk_dim() const { return rec.in_dim(); }

  Matrix reconstruct(const Matrix& chunk);
  Matrix reconstruct_backward(const Matrix& d_x_hat);

  // Finetuning starts from the pretrained extractor: repr ← repr_bin.
  void transfer();
  bool transferred() const { return transferred_; }

  nn::ParamRefs pretrain_params();
  nn::ParamRefs finetune_params();
  nn::StateRefs pretrain_state();
  nn::StateRefs finetune_state();

  RandomObfuscator obfuscator;       // training stream
  RandomObfuscator eval_obfuscator;  // validation stream, keeps training masks reproducible
  Extractor repr_bin;
  Extractor repr;
  nn::Linear rec;

 private:
  Matrix chunk_;
  bool transferred_ = false;
};

struct Prediction {
  Matrix logits;
  Matrix probabilities;
};

Prediction final_mapping_predict(const nn::Linear& final_mapping, const Matrix& z);

}  // namespace tabvfl::tabnet
