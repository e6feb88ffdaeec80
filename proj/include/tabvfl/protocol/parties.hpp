#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tabvfl/nn/optim.hpp"
#include "tabvfl/protocol/failures.hpp"
#include "tabvfl/protocol/message.hpp"
#include "tabvfl/protocol/transport.hpp"
#include "tabvfl/tabnet/encoder.hpp"
#include "tabvfl/tabnet/monolithic.hpp"
#include "tabvfl/tabnet/parts.hpp"

namespace tabvfl::protocol {

// CT runs without parties (see eval); the other three are wired here.
enum class Design { CT, LT, TabVFL_LE, TabVFL };

Design parse_design(const std::string& s);
std::string to_string(Design d);

struct PartySettings {
  Design design = Design::TabVFL;
  tabnet::TabNetConfig cfg;
  std::uint64_t seed = 0;
  std::size_t batch_size = 64;
  nn::AdamConfig adam;
};

// A guest's vertical slice of every row set it may be asked about.
struct GuestData {
  Matrix train;
  Matrix validation;
  Matrix all;
};

std::string guest_name(PartyId id);

class GuestParty {
 public:
  // chunk_dim: this guest's share of the latent width (reconstruction input
  // in TabVFL/LE, local latent width in LT).
  GuestParty(PartyId id, std::size_t chunk_dim, GuestData data, const PartySettings& settings);

  PartyId id() const { return id_; }
  std::size_t n_features() const { return data_.train.cols(); }

  // Message loop; returns after Shutdown. Any error closes the endpoint with
  // the error text and rethrows.
  void serve(Endpoint& ep);

  // Fault injection: ignore everything during these epochs of a phase, as if
  // the process were down. The host only notices through its timeout.
  void set_silent_epochs(Phase phase, std::set<std::uint32_t> epochs);

  nn::ParamRefs pretrain_params();
  nn::ParamRefs finetune_params();
  nn::StateRefs state();
  std::uint64_t optimizer_steps() const { return steps_; }

 private:
  struct Pending {
    bool active = false;
    std::uint32_t batch = 0;
    Split split = Split::Train;
    Matrix x;
    Matrix s;
  };

  bool handle(Endpoint& ep, const Message& m);
  void on_announce(Endpoint& ep, const Message& m);
  void on_partition(Endpoint& ep, const Message& m);
  void on_gradient(const Message& m);
  const Matrix& rows_for(Split split) const;
  void require_pending(const Message& m);

  PartyId id_;
  PartySettings settings_;
  GuestData data_;
  std::size_t chunk_dim_;

  tabnet::GuestBottom bottom_;                       // TabVFL, LE
  tabnet::TabNetEncoder local_enc_;                  // LE
  std::unique_ptr<tabnet::MonolithicTabNet> local_;  // LT

  Phase phase_ = Phase::Pretrain;
  bool silent_ = false;
  std::map<Phase, std::set<std::uint32_t>> silent_epochs_;
  Pending pending_;
  nn::Adam opt_;
  std::uint64_t steps_ = 0;
};

struct GuestInfo {
  PartyId id = 0;
  std::size_t n_features = 0;
  std::size_t chunk_dim = 0;
};

struct EpochSummary {
  std::vector<double> batch_losses;
  // Guests whose loss (pretraining) or activations (finetuning) arrived live.
  std::vector<std::vector<PartyId>> contributors;
  std::set<PartyId> offline;  // scheduled plus timed out
  double mean_loss = 0.0;
  double accuracy = 0.0;  // finetuning only
};

struct EvalSummary {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

class HostParty {
 public:
  HostParty(const PartySettings& settings, std::vector<GuestInfo> guests,
            std::vector<int> train_labels, std::vector<int> validation_labels,
            std::size_t n_all_rows, Strategy strategy, std::chrono::milliseconds timeout);

  void attach(PartyId guest, Endpoint* ep);

  // Resets optimizer state and the cache; finetuning also makes every guest
  // copy its pretrained extractor.
  void begin_phase(Phase phase);
  EpochSummary train_epoch(std::uint32_t epoch, const std::set<PartyId>& offline);
  EvalSummary validate();
  Matrix extract_latents();
  void shutdown();

  Phase phase() const { return phase_; }
  const CacheStore& cache() const { return cache_; }
  nn::ParamRefs params();
  nn::StateRefs state();
  std::uint64_t optimizer_steps() const { return steps_; }
  ByteCounts bytes() const;
  // Decoder output (pretraining) or logits (finetuning) of the last batch.
  const Matrix& last_output() const { return last_output_; }

 private:
  struct BatchResult {
    double loss = 0.0;
    std::vector<PartyId> contributors;
    std::size_t correct = 0;
  };

  BatchResult pretrain_batch(std::uint32_t b, Split split, std::size_t rows, std::set<PartyId>& online);
  BatchResult finetune_batch(std::uint32_t b, Split split, std::size_t rows,
                             std::span<const int> labels, std::set<PartyId>& online,
                             Matrix* latents_out);
  std::optional<Message> expect(PartyId g, Tag tag, std::uint32_t batch, std::set<PartyId>& online);
  void announce(std::uint32_t b, Split split, const std::set<PartyId>& online);
  void control_roundtrip(ControlKind kind, std::uint32_t epoch, std::set<PartyId>& online);
  std::size_t activation_cols(const GuestInfo& g) const;
  Endpoint& ep(PartyId g);

  PartySettings settings_;
  std::vector<GuestInfo> guests_;
  std::vector<int> train_labels_, val_labels_;
  std::size_t n_all_ = 0;
  Strategy strategy_;
  std::chrono::milliseconds timeout_;
  std::map<PartyId, Endpoint*> endpoints_;

  tabnet::TabNetEncoder encoder_;  // TabVFL
  tabnet::TabNetDecoder decoder_;  // TabVFL, LE
  nn::Linear final_mapping_;

  Phase phase_ = Phase::Pretrain;
  std::uint32_t epoch_ = 0;
  CacheStore cache_;
  nn::Adam opt_;
  std::uint64_t steps_ = 0;
  Matrix last_output_;
};

}  // namespace tabvfl::protocol
