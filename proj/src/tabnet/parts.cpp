#include "tabvfl/tabnet/parts.hpp"

#include "tabvfl/errors.hpp"
#include "tabvfl/nn/losses.hpp"
#include "tabvfl/nn/parameter.hpp"

namespace tabvfl::tabnet {

void TabNetConfig::validate(std::size_t n_guests) const {
  auto fail = [](const std::string& msg) { throw ConfigError("tabnet config: " + msg); };
  if (latent_dim == 0) fail("latent_dim must be positive");
  if (n_guests > 0 && latent_dim < n_guests) {
    fail("latent_dim " + std::to_string(latent_dim) + " is lower than the number of guests " +
         std::to_string(n_guests));
  }
  if (n_steps == 0) fail("n_steps must be >= 1");
  if (!(gamma_relax >= 1.0)) fail("gamma_relax must be >= 1");
  if (!(eps_mask > 0.0)) fail("eps_mask must be positive");
  if (!(lambda_sparse >= 0.0)) fail("lambda_sparse must be >= 0");
  if (n_shared + n_independent == 0) fail("encoder needs at least one GLU block");
  if (dec_n_shared + dec_n_independent == 0) fail("decoder needs at least one GLU block");
  if (!(p_mask >= 0.0 && p_mask <= 1.0)) fail("p_mask must lie in [0,1]");
  if (n_classes < 2) fail("n_classes must be >= 2");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) fail("bn_momentum must lie in (0,1]");
  if (!(bn_eps > 0.0)) fail("bn_eps must be positive");
}

std::vector<std::size_t> uniform_widths(std::size_t total, std::size_t k) {
  if (k == 0) throw ConfigError("cannot partition across zero guests");
  if (total < k) {
    throw ConfigError("cannot split width " + std::to_string(total) + " across " +
                      std::to_string(k) + " guests");
  }
  std::vector<std::size_t> w(k, total / k);
  for (std::size_t i = 0; i < total % k; ++i) ++w[i];
  return w;
}

std::vector<Matrix> split_cols(const Matrix& m, std::span<const std::size_t> widths) {
  std::size_t sum = 0;
  for (auto w : widths) sum += w;
  if (sum != m.cols()) {
    throw ShapeError("split_cols: widths cover " + std::to_string(sum) + " of " +
                     std::to_string(m.cols()) + " columns");
  }
  std::vector<Matrix> parts;
  std::size_t at = 0;
  for (auto w : widths) {
    parts.push_back(nn::slice_cols(m, at, at + w));
    at += w;
  }
  return parts;
}

std::vector<Matrix> partition_uniform(const Matrix& out_intermediate, std::size_t k) {
  const auto widths = uniform_widths(out_intermediate.cols(), k);
  return split_cols(out_intermediate, widths);
}

Matrix concat_intermediate(std::span<const Matrix> parts) {
  if (parts.empty()) throw ShapeError("concat_intermediate: no parts");
  for (const Matrix& p : parts) {
    if (p.rows() != parts[0].rows()) {
      throw ShapeError("concat_intermediate: row counts differ (" + p.shape_str() + " vs " +
                       parts[0].shape_str() + ")");
    }
  }
  return nn::hconcat(parts);
}

std::vector<Matrix> le_aggregate(std::span<const std::vector<Matrix>> per_guest) {
  if (per_guest.empty()) throw ShapeError("le_aggregate: no guests");
  std::vector<Matrix> out = per_guest[0];
  for (std::size_t g = 1; g < per_guest.size(); ++g) {
    if (per_guest[g].size() != out.size()) throw ShapeError("le_aggregate: step counts differ");
    for (std::size_t k = 0; k < out.size(); ++k) {
      nn::require_same_shape(out[k], per_guest[g][k], "le_aggregate");
      out[k] += per_guest[g][k];
    }
  }
  return out;
}

RandomObfuscator::RandomObfuscator(double p_mask, std::uint64_t seed) : p_(p_mask), rng_(seed) {
  if (!(p_mask >= 0.0 && p_mask <= 1.0)) throw ConfigError("p_mask must lie in [0,1]");
}

Obfuscated RandomObfuscator::apply(const Matrix& x) {
  Obfuscated o{x, Matrix(x.rows(), x.cols())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    // 53-bit uniform in [0,1); portable unlike std::bernoulli_distribution
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    if (u < p_) {
      o.s.values()[i] = 1.0;
      o.x_masked.values()[i] = 0.0;
    }
  }
  return o;
}

Extractor::Extractor(const std::string& id, std::size_t dim, const TabNetConfig& cfg,
                     std::uint64_t seed)
    : bn(id + ".bn", dim, cfg.bn_momentum, cfg.bn_eps), fc(id + ".fc", dim, dim, true, seed) {}

Matrix Extractor::forward(const Matrix& x, Mode mode) {
  cached_ = false;
  bn_out_ = bn.forward(x, mode, &bn_cache_);
  cached_ = true;
  return fc.forward(bn_out_);
}

Matrix Extractor::backward(const Matrix& dy) {
  if (!cached_) throw NumericError("extractor backward without forward");
  return bn.backward(bn_cache_, fc.backward(bn_out_, dy));
}

void Extractor::copy_from(const Extractor& other) {
  if (other.dim() != dim()) throw ShapeError("extractor transfer: width mismatch");
  bn.gamma.value = other.bn.gamma.value;
  bn.beta.value = other.bn.beta.value;
  bn.running_mean = other.bn.running_mean;
  bn.running_var = other.bn.running_var;
  fc.weight.value = other.fc.weight.value;
  if (fc.bias && other.fc.bias) fc.bias->value = other.fc.bias->value;
  cached_ = false;
}

void Extractor::append_params(nn::ParamRefs& out) {
  bn.append_params(out);
  fc.append_params(out);
}

void Extractor::append_state(nn::StateRefs& out) {
  bn.append_state(out);
  fc.append_state(out);
}

GuestBottom::GuestBottom(const std::string& id, std::size_t n_features, std::size_t chunk_dim,
                         const TabNetConfig& cfg, std::uint64_t seed)
    : obfuscator(cfg.p_mask, nn::derive_seed(seed, id + ".obfuscator")),
      eval_obfuscator(cfg.p_mask, nn::derive_seed(seed, id + ".obfuscator.eval")),
      repr_bin(id + ".repr_bin", n_features, cfg, seed),
      repr(id + ".repr", n_features, cfg, seed),
      rec(id + ".rec", chunk_dim, n_features, true, seed) {}

Matrix GuestBottom::reconstruct(const Matrix& chunk) {
  if (chunk.cols() != rec.in_dim()) {
    throw ShapeError("reconstruct: chunk width " + std::to_string(chunk.cols()) +
                     " != assigned " + std::to_string(rec.in_dim()));
  }
  chunk_ = chunk;
  return rec.forward(chunk);
}

Matrix GuestBottom::reconstruct_backward(const Matrix& d_x_hat) {
  return rec.backward(chunk_, d_x_hat);
}

void GuestBottom::transfer() {
  repr.copy_from(repr_bin);
  transferred_ = true;
}

nn::ParamRefs GuestBottom::pretrain_params() {
  nn::ParamRefs p;
  repr_bin.append_params(p);
  rec.append_params(p);
  return p;
}

nn::ParamRefs GuestBottom::finetune_params() {
  nn::ParamRefs p;
  repr.append_params(p);
  return p;
}

nn::StateRefs GuestBottom::pretrain_state() {
  nn::StateRefs s;
  repr_bin.append_state(s);
  rec.append_state(s);
  return s;
}

nn::StateRefs GuestBottom::finetune_state() {
  nn::StateRefs s;
  repr.append_state(s);
  return s;
}

Prediction final_mapping_predict(const nn::Linear& final_mapping, const Matrix& z) {
  if (z.cols() != final_mapping.in_dim()) {
    throw ShapeError("final_mapping: expected width " + std::to_string(final_mapping.in_dim()) +
                     ", got " + z.shape_str());
  }
  Prediction p;
  p.logits = final_mapping.forward(z);
  p.probabilities = nn::softmax(p.logits);
  return p;
}

}  // namespace tabvfl::tabnet
