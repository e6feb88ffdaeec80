#include "tabvfl/nn/parameter.hpp"

#include <cmath>
#include <random>

namespace tabvfl::nn {

void zero_grads(const ParamRefs& params) {
  for (Parameter* p : params) p->zero_grad();
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& label) {
  // FNV-1a over the label, then a splitmix64 finaliser with the seed folded in.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = h ^ (seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed,
                      const std::string& id) {
  std::mt19937_64 rng(derive_seed(seed, id));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.values()) v = limit * dist(rng);
  return w;
}

}  // namespace tabvfl::nn
