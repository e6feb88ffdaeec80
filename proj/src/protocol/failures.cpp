#include "tabvfl/protocol/failures.hpp"

#include "tabvfl/errors.hpp"
#include "tabvfl/nn/parameter.hpp"

namespace tabvfl::protocol {

Strategy parse_strategy(const std::string& s) {
  if (s == "none") return Strategy::None;
  if (s == "cache") return Strategy::Cache;
  if (s == "zeros") return Strategy::Zeros;
  throw ConfigError("unknown failure strategy '" + s + "' (expected none, cache or zeros)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::None: return "none";
    case Strategy::Cache: return "cache";
    case Strategy::Zeros: return "zeros";
  }
  return "?";
}

std::set<PartyId> sample_failures(std::span<const PartyId> guests, double p_fail,
                                  std::uint32_t epoch, std::mt19937_64& rng) {
  if (!(p_fail >= 0.0 && p_fail <= 1.0)) throw ConfigError("p_fail must lie in [0,1]");
  std::set<PartyId> out;
  for (PartyId g : guests) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (epoch > 0 && u < p_fail) out.insert(g);
  }
  return out;
}

FailureSchedule::FailureSchedule(std::vector<PartyId> guests, double p_fail,
                                 std::uint32_t n_epochs, std::uint64_t seed)
    : p_fail_(p_fail) {
  std::mt19937_64 rng(nn::derive_seed(seed, "failures"));
  for (std::uint32_t e = 0; e < n_epochs; ++e) sets_.push_back(sample_failures(guests, p_fail, e, rng));
}

const std::set<PartyId>& FailureSchedule::offline(std::uint32_t epoch) const {
  static const std::set<PartyId> none;
  return epoch < sets_.size() ? sets_[epoch] : none;
}

void CacheStore::put(PartyId guest, std::uint32_t batch, GuestInputs in) {
  entries_[{guest, batch}] = std::move(in);
}

const GuestInputs* CacheStore::get(PartyId guest, std::uint32_t batch) const {
  auto it = entries_.find({guest, batch});
  return it == entries_.end() ? nullptr : &it->second;
}

GuestInputs resolve_inputs(CacheStore& cache, PartyId guest, std::uint32_t batch,
                           std::optional<GuestInputs> live, Strategy strategy,
                           const InputShape& shape) {
  if (live) {
    if (strategy == Strategy::Cache) cache.put(guest, batch, *live);
    return std::move(*live);
  }
  switch (strategy) {
    case Strategy::None:
      throw ProtocolError("guest " + std::to_string(guest) + " offline at batch " +
                          std::to_string(batch) + " and no failure strategy is configured");
    case Strategy::Cache: {
      const GuestInputs* hit = cache.get(guest, batch);
      if (!hit) {
        throw ProtocolError("cache miss for guest " + std::to_string(guest) + " batch " +
                            std::to_string(batch));
      }
      return *hit;
    }
    case Strategy::Zeros: {
      GuestInputs z{Matrix(shape.rows, shape.activation_cols), std::nullopt};
      if (shape.mask_cols > 0) z.mask = Matrix(shape.rows, shape.mask_cols);
      return z;
    }
  }
  throw ProtocolError("unreachable strategy");
}

}  // namespace tabvfl::protocol
