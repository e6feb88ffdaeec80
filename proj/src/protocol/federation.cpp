#include "tabvfl/protocol/federation.hpp"

#include "tabvfl/errors.hpp"
#include "tabvfl/nn/checkpoint.hpp"

namespace tabvfl::protocol {

std::chrono::milliseconds default_timeout(TransportKind kind) {
  using namespace std::chrono_literals;
  return kind == TransportKind::Socket ? 5000ms : 120000ms;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Design design, PartyId party) {
  return dir / (to_string(design) + "_" + std::to_string(party) + ".ckpt");
}

Federation::Federation(const PartySettings& settings, std::vector<GuestData> guest_data,
                       std::vector<int> train_labels, std::vector<int> validation_labels,
                       const FederationOptions& options)
    : settings_(settings) {
  const std::size_t k = guest_data.size();
  settings.cfg.validate(k);
  const auto chunks = tabnet::uniform_widths(settings.cfg.latent_dim, k);
  const std::size_t n_all = guest_data.front().all.rows();
  std::vector<GuestInfo> infos;
  for (std::size_t i = 0; i < k; ++i) {
    const auto id = static_cast<PartyId>(kHostId + 1 + i);
    const GuestData& d = guest_data[i];
    if (d.train.rows() != train_labels.size() || d.validation.rows() != validation_labels.size() ||
        d.all.rows() != n_all) {
      throw DataError(guest_name(id) + " rows do not line up with the labels");
    }
    ids_.push_back(id);
    infos.push_back({id, d.train.cols(), chunks[i]});
  }
  const auto timeout = options.timeout.count() > 0 ? options.timeout : default_timeout(options.transport);
  host_ = std::make_unique<HostParty>(settings, infos, std::move(train_labels),
                                      std::move(validation_labels), n_all, options.strategy, timeout);
  for (std::size_t i = 0; i < k; ++i) {
    guests_.push_back(std::make_unique<GuestParty>(ids_[i], chunks[i], std::move(guest_data[i]), settings));
    if (auto it = options.silent.find(ids_[i]); it != options.silent.end()) {
      for (const auto& [phase, epochs] : it->second) guests_.back()->set_silent_epochs(phase, epochs);
    }
    auto [h, g] = transport_pair(options.transport);
    host_->attach(ids_[i], h.get());
    host_eps_.push_back(std::move(h));
    guest_eps_.push_back(std::move(g));
  }
  errors_.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    threads_.emplace_back([this, i] {
      try {
        guests_[i]->serve(*guest_eps_[i]);
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu_);
        errors_[i] = e.what();
      }
    });
  }
}

Federation::~Federation() {
  try {
    shutdown();
  } catch (...) {
  }
}

GuestParty& Federation::guest(PartyId id) {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == id) return *guests_[i];
  throw ProtocolError("no guest " + std::to_string(id));
}

std::string Federation::guest_errors() {
  std::lock_guard lock(err_mu_);
  std::string out;
  for (std::size_t i = 0; i < errors_.size(); ++i) {
    if (!errors_[i].empty()) out += "; " + guest_name(ids_[i]) + " failed: " + errors_[i];
  }
  return out;
}

template <class F>
auto Federation::guarded(F&& f) -> decltype(f()) {
  if (stopped_) throw ProtocolError("federation already shut down");
  try {
    return f();
  } catch (const ProtocolError& e) {
    const std::string extra = guest_errors();
    if (extra.empty()) throw;
    throw ProtocolError(e.what() + extra);
  }
}

void Federation::begin_phase(Phase phase) {
  guarded([&] { host_->begin_phase(phase); });
}

EpochSummary Federation::train_epoch(std::uint32_t epoch, const std::set<PartyId>& offline) {
  return guarded([&] { return host_->train_epoch(epoch, offline); });
}

EvalSummary Federation::validate() {
  return guarded([&] { return host_->validate(); });
}

Matrix Federation::extract_latents() {
  return guarded([&] { return host_->extract_latents(); });
}

void Federation::save_checkpoints(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(checkpoint_path(dir, settings_.design, kHostId), nn::snapshot(host_->state()));
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    nn::save_checkpoint(checkpoint_path(dir, settings_.design, ids_[i]), nn::snapshot(guests_[i]->state()));
  }
}

void Federation::load_checkpoints(const std::filesystem::path& dir) {
  nn::restore(nn::load_checkpoint(checkpoint_path(dir, settings_.design, kHostId)), host_->state());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    nn::restore(nn::load_checkpoint(checkpoint_path(dir, settings_.design, ids_[i])), guests_[i]->state());
  }
}

void Federation::shutdown() {
  if (stopped_) return;
  stopped_ = true;
  host_->shutdown();
  for (auto& t : threads_) t.join();
  for (auto& e : host_eps_) e->close();
}

}  // namespace tabvfl::protocol
