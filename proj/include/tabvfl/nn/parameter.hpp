#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabvfl/nn/matrix.hpp"

namespace tabvfl::nn {

struct Parameter {
  std::string id;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string id_, Matrix value_)
      : id(std::move(id_)), value(std::move(value_)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

// A named view of a tensor owned by a model part (parameter values and
// batch-norm running statistics); what checkpoints save and restore.
struct TensorRef {
  std::string id;
  Matrix* value = nullptr;
};
using StateRefs = std::vector<TensorRef>;

// Non-owning list of parameters gathered from a model part.
using ParamRefs = std::vector<Parameter*>;

void zero_grads(const ParamRefs& params);

// Glorot-uniform initialisation drawn from a stream keyed by (seed, id), so the
// same parameter id gets the same weights regardless of which party owns it.
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed,
                      const std::string& id);

// Stable 64-bit mix of a seed and a label; used for every per-component RNG stream.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& label);

}  // namespace tabvfl::nn
