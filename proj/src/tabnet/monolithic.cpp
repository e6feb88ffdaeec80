#include "tabvfl/tabnet/monolithic.hpp"

#include <numeric>

#include "tabvfl/errors.hpp"
#include "tabvfl/nn/losses.hpp"

namespace tabvfl::tabnet {

MonolithicTabNet::MonolithicTabNet(std::vector<std::string> block_ids,
                                   std::vector<std::size_t> block_widths,
                                   const TabNetConfig& cfg, std::uint64_t seed,
                                   const std::string& host_id)
    : cfg_(cfg), widths_(std::move(block_widths)) {
  if (block_ids.size() != widths_.size() || widths_.empty()) {
    throw ConfigError("monolithic model: need one id per block");
  }
  cfg.validate(widths_.size());
  input_dim_ = std::accumulate(widths_.begin(), widths_.end(), std::size_t{0});
  chunk_widths_ = uniform_widths(cfg.latent_dim, widths_.size());
  for (std::size_t b = 0; b < widths_.size(); ++b) {
    if (widths_[b] == 0) throw ConfigError("monolithic model: empty block " + block_ids[b]);
    blocks.emplace_back(block_ids[b], widths_[b], chunk_widths_[b], cfg, seed);
  }
  encoder = TabNetEncoder(host_id + ".enc", input_dim_, cfg, seed);
  decoder = TabNetDecoder(host_id + ".dec", cfg, seed);
  final_mapping = nn::Linear(host_id + ".final_mapping", cfg.latent_dim, cfg.n_classes, true, seed);
}

std::vector<Matrix> MonolithicTabNet::split_input(const Matrix& x) const {
  if (x.cols() != input_dim_) {
    throw ShapeError("monolithic model: expected width " + std::to_string(input_dim_) +
                     ", got " + x.shape_str());
  }
  return split_cols(x, widths_);
}

PretrainPass MonolithicTabNet::pretrain_forward(const Matrix& x, Mode mode) {
  pretrain_cached_ = false;
  const auto xs = split_input(x);
  std::vector<Matrix> inter, masks;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    RandomObfuscator& obf =
        mode == Mode::Training ? blocks[b].obfuscator : blocks[b].eval_obfuscator;
    Obfuscated o = obf.apply(xs[b]);
    inter.push_back(blocks[b].repr_bin.forward(o.x_masked, mode));
    masks.push_back(std::move(o.s));
  }
  PretrainPass p;
  p.x_int = concat_intermediate(inter);
  p.s_complete = concat_intermediate(masks);
  Matrix prior0(p.s_complete.rows(), p.s_complete.cols(), 1.0);
  prior0 -= p.s_complete;
  p.enc = encoder.forward(p.x_int, prior0, mode);
  p.dec_out = decoder.forward(p.enc.steps, mode);
  const auto chunks = split_cols(p.dec_out, chunk_widths_);
  d_x_hat_.clear();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    p.x_hat.push_back(blocks[b].reconstruct(chunks[b]));
    auto rl = nn::reconstruction_loss(xs[b], p.x_hat.back(), masks[b]);
    p.block_losses.push_back(rl.value);
    p.loss += rl.value;
    d_x_hat_.push_back(std::move(rl.d_reconstruction));
  }
  pretrain_cached_ = true;
  return p;
}

void MonolithicTabNet::pretrain_backward() {
  if (!pretrain_cached_) throw NumericError("pretrain backward without forward");
  std::vector<Matrix> d_chunks;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    d_chunks.push_back(blocks[b].reconstruct_backward(d_x_hat_[b]));
  }
  const auto d_steps = decoder.backward(nn::hconcat(d_chunks));
  const Matrix dx = encoder.backward(d_steps, 0.0);
  const auto d_parts = split_cols(dx, widths_);
  for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].repr_bin.backward(d_parts[b]);
  pretrain_cached_ = false;
}

FinetunePass MonolithicTabNet::finetune_forward(const Matrix& x, std::span<const int> labels,
                                                Mode mode) {
  finetune_cached_ = false;
  const auto xs = split_input(x);
  std::vector<Matrix> inter;
  for (std::size_t b = 0; b < blocks.size(); ++b) inter.push_back(blocks[b].repr.forward(xs[b], mode));
  FinetunePass p;
  p.x_int = concat_intermediate(inter);
  p.enc = encoder.forward(p.x_int, Matrix(x.rows(), input_dim_, 1.0), mode);
  p.pred = final_mapping_predict(final_mapping, p.enc.z);
  auto ce = nn::cross_entropy(p.pred.logits, labels);
  p.cross_entropy = ce.value;
  p.loss = ce.value - cfg_.lambda_sparse * p.enc.m_loss;
  d_logits_ = std::move(ce.d_logits);
  z_ = p.enc.z;
  finetune_cached_ = true;
  return p;
}

void MonolithicTabNet::finetune_backward() {
  if (!finetune_cached_) throw NumericError("finetune backward without forward");
  const Matrix dz = final_mapping.backward(z_, d_logits_);
  std::vector<Matrix> d_steps(cfg_.n_steps, dz);
  const Matrix dx = encoder.backward(d_steps, -cfg_.lambda_sparse);
  const auto d_parts = split_cols(dx, widths_);
  for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].repr.backward(d_parts[b]);
  finetune_cached_ = false;
}

Matrix MonolithicTabNet::latents(const Matrix& x) {
  const auto xs = split_input(x);
  std::vector<Matrix> inter;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    inter.push_back(blocks[b].repr.forward(xs[b], Mode::Inference));
  }
  return encoder.forward(concat_intermediate(inter), Matrix(x.rows(), input_dim_, 1.0),
                         Mode::Inference)
      .z;
}

void MonolithicTabNet::transfer() {
  for (auto& b : blocks) b.transfer();
}

nn::ParamRefs MonolithicTabNet::pretrain_params() {
  nn::ParamRefs p;
  for (auto& b : blocks) {
    auto bp = b.pretrain_params();
    p.insert(p.end(), bp.begin(), bp.end());
  }
  encoder.append_params(p);
  decoder.append_params(p);
  return p;
}

nn::ParamRefs MonolithicTabNet::finetune_params() {
  nn::ParamRefs p;
  for (auto& b : blocks) {
    auto bp = b.finetune_params();
    p.insert(p.end(), bp.begin(), bp.end());
  }
  encoder.append_params(p);
  final_mapping.append_params(p);
  return p;
}

nn::StateRefs MonolithicTabNet::finetune_state() {
  nn::StateRefs s;
  for (auto& b : blocks) {
    auto bs = b.finetune_state();
    s.insert(s.end(), bs.begin(), bs.end());
  }
  encoder.append_state(s);
  final_mapping.append_state(s);
  return s;
}

nn::StateRefs MonolithicTabNet::state() {
  nn::StateRefs s;
  for (auto& b : blocks) {
    for (auto* part : {&b.repr_bin, &b.repr}) part->append_state(s);
    b.rec.append_state(s);
  }
  encoder.append_state(s);
  decoder.append_state(s);
  final_mapping.append_state(s);
  return s;
}

}  // namespace tabvfl::tabnet
