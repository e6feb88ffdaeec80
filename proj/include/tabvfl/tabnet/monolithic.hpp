#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tabvfl/nn/layers.hpp"
#include "tabvfl/tabnet/config.hpp"
#include "tabvfl/tabnet/encoder.hpp"
#include "tabvfl/tabnet/parts.hpp"

namespace tabvfl::tabnet {

struct PretrainPass {
  double loss = 0.0;
  std::vector<double> block_losses;
  Matrix x_int;
  Matrix s_complete;
  EncoderOutput enc;
  Matrix dec_out;
  std::vector<Matrix> x_hat;
};

struct FinetunePass {
  double loss = 0.0;  // CE − λ·M_loss
  double cross_entropy = 0.0;
  Matrix x_int;
  EncoderOutput enc;
  Prediction pred;
};

// The whole autoencoder in one process. Input columns are grouped into blocks,
// each with its own BN+FC extractor, obfuscator stream and reconstruction FC,
// so that a K-block model is the unsplit twin of the K-guest split (parameter
// ids included). One block over all columns is plain centralised TabNet.
class MonolithicTabNet {
 public:
  MonolithicTabNet(std::vector<std::string> block_ids, std::vector<std::size_t> block_widths,
                   const TabNetConfig& cfg, std::uint64_t seed, const std::string& host_id = "host");

  std::size_t input_dim() const { return input_dim_; }
  const TabNetConfig& config() const { return cfg_; }

  // Training mode draws masks from the training obfuscators, inference mode
  // from the evaluation ones.
  PretrainPass pretrain_forward(const Matrix& x, Mode mode);
  void pretrain_backward();

  FinetunePass finetune_forward(const Matrix& x, std::span<const int> labels, Mode mode);
  void finetune_backward();

  // Z_latent in inference mode, finetuning path.
  Matrix latents(const Matrix& x);

  void transfer();

  nn::ParamRefs pretrain_params();
  nn::ParamRefs finetune_params();
  nn::StateRefs finetune_state();
  // Every tensor, both phases.
  nn::StateRefs state();

  std::vector<GuestBottom> blocks;
  TabNetEncoder encoder;
  TabNetDecoder decoder;
  nn::Linear final_mapping;

 private:
  std::vector<Matrix> split_input(const Matrix& x) const;

  TabNetConfig cfg_;
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> chunk_widths_;
  std::size_t input_dim_ = 0;
  std::vector<Matrix> d_x_hat_;
  Matrix d_logits_;
  Matrix z_;
  bool pretrain_cached_ = false;
  bool finetune_cached_ = false;
};

}  // namespace tabvfl::tabnet
