#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "tabvfl/protocol/parties.hpp"

namespace tabvfl::protocol {

struct FederationOptions {
  TransportKind transport = TransportKind::InProcess;
  Strategy strategy = Strategy::None;
  // 0 picks the transport default (5 s on sockets, 120 s in-process).
  std::chrono::milliseconds timeout{0};
  // guest id -> phase -> epochs during which that guest plays dead.
  std::map<PartyId, std::map<Phase, std::set<std::uint32_t>>> silent;
};

std::chrono::milliseconds default_timeout(TransportKind kind);

// A host and K guests (ids 2..K+1), each guest serving its endpoint on its own
// thread. Guest errors surface as ProtocolError from the host-side calls.
class Federation {
 public:
  Federation(const PartySettings& settings, std::vector<GuestData> guest_data,
             std::vector<int> train_labels, std::vector<int> validation_labels,
             const FederationOptions& options = {});
  ~Federation();
  Federation(const Federation&) = delete;
  Federation& operator=(const Federation&) = delete;

  HostParty& host() { return *host_; }
  GuestParty& guest(PartyId id);
  const std::vector<PartyId>& guest_ids() const { return ids_; }

  void begin_phase(Phase phase);
  EpochSummary train_epoch(std::uint32_t epoch, const std::set<PartyId>& offline = {});
  EvalSummary validate();
  Matrix extract_latents();

  // One file per party, <design>_<party_id>.ckpt.
  void save_checkpoints(const std::filesystem::path& dir);
  void load_checkpoints(const std::filesystem::path& dir);

  ByteCounts bytes() const { return host_->bytes(); }
  void shutdown();

 private:
  template <class F>
  auto guarded(F&& f) -> decltype(f());
  std::string guest_errors();

  PartySettings settings_;
  std::vector<PartyId> ids_;
  std::unique_ptr<HostParty> host_;
  std::vector<std::unique_ptr<GuestParty>> guests_;
  std::vector<std::unique_ptr<Endpoint>> host_eps_, guest_eps_;
  std::vector<std::thread> threads_;
  std::mutex err_mu_;
  std::vector<std::string> errors_;
  bool stopped_ = false;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Design design, PartyId party);

}  // namespace tabvfl::protocol
