#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tabvfl/nn/matrix.hpp"
#include "tabvfl/nn/parameter.hpp"

namespace tabvfl::nn {

struct NamedMatrix {
  std::string id;
  Matrix value;

  friend bool operator==(const NamedMatrix&, const NamedMatrix&) = default;
};

// Flat binary layout, one record per tensor:
//   id length (u16 BE) | id bytes | rows (u32 BE) | cols (u32 BE) | rows·cols f64 LE
std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedMatrix> tensors);
std::vector<NamedMatrix> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedMatrix> tensors);
std::vector<NamedMatrix> load_checkpoint(const std::filesystem::path& path);

std::vector<NamedMatrix> snapshot(std::span<const TensorRef> refs);

// Copies stored tensors into `refs` by id. Every ref must be present with a
// matching shape and the file may not carry extra ids.
void restore(std::span<const NamedMatrix> stored, std::span<const TensorRef> refs);

}  // namespace tabvfl::nn
