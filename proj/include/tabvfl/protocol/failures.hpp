#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tabvfl/protocol/message.hpp"

namespace tabvfl::protocol {

enum class Strategy { None, Cache, Zeros };

Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);

// Guests offline for one epoch. Epoch 0 is always empty; otherwise each guest
// drops out independently with probability p_fail.
std::set<PartyId> sample_failures(std::span<const PartyId> guests, double p_fail,
                                  std::uint32_t epoch, std::mt19937_64& rng);

// Per-epoch offline sets drawn once from a seeded stream, so the same seed
// replays the same outages.
class FailureSchedule {
 public:
  FailureSchedule() = default;
  FailureSchedule(std::vector<PartyId> guests, double p_fail, std::uint32_t n_epochs,
                  std::uint64_t seed);

  const std::set<PartyId>& offline(std::uint32_t epoch) const;
  double p_fail() const { return p_fail_; }

 private:
  double p_fail_ = 0.0;
  std::vector<std::set<PartyId>> sets_;
};

struct GuestInputs {
  Matrix activation;
  std::optional<Matrix> mask;  // pretraining in the split design only

  friend bool operator==(const GuestInputs&, const GuestInputs&) = default;
};

// Last values each guest sent, per batch index. Cleared between phases.
class CacheStore {
 public:
  void put(PartyId guest, std::uint32_t batch, GuestInputs in);
  const GuestInputs* get(PartyId guest, std::uint32_t batch) const;
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::map<std::pair<PartyId, std::uint32_t>, GuestInputs> entries_;
};

struct InputShape {
  std::size_t rows = 0;
  std::size_t activation_cols = 0;
  std::size_t mask_cols = 0;  // 0: no mask expected
};

// Live values win and refresh the cache. An offline guest is replaced by its
// cached entry or by zeros; with Strategy::None, or on a cache miss, that is a
// protocol error.
GuestInputs resolve_inputs(CacheStore& cache, PartyId guest, std::uint32_t batch,
                           std::optional<GuestInputs> live, Strategy strategy,
                           const InputShape& shape);

}  // namespace tabvfl::protocol
