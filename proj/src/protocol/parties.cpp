#include "tabvfl/protocol/parties.hpp"

#include <algorithm>

#include "tabvfl/data/batches.hpp"
#include "tabvfl/errors.hpp"
#include "tabvfl/nn/losses.hpp"

namespace tabvfl::protocol {

using nn::Mode;
using tabnet::GuestBottom;
using tabnet::TabNetEncoder;

namespace {

constexpr std::uint32_t kEvalRound = 0xFFFFFFFFu;

template <class T>
void append(std::vector<T>& to, std::vector<T> from) {
  to.insert(to.end(), from.begin(), from.end());
}

std::size_t argmax_row(const Matrix& m, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j)
    if (m(r, j) > m(r, best)) best = j;
  return best;
}

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, PartyId g, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ProtocolError("guest " + std::to_string(g) + " sent " + what + " of shape " +
                        m.shape_str() + ", expected " + std::to_string(rows) + "x" +
                        std::to_string(cols));
  }
}

}  // namespace

Design parse_design(const std::string& s) {
  if (s == "CT") return Design::CT;
  if (s == "LT") return Design::LT;
  if (s == "TabVFL_LE" || s == "TabVFL-LE") return Design::TabVFL_LE;
  if (s == "TabVFL") return Design::TabVFL;
  throw ConfigError("unknown design '" + s + "' (expected CT, LT, TabVFL_LE or TabVFL)");
}

std::string to_string(Design d) {
  switch (d) {
    case Design::CT: return "CT";
    case Design::LT: return "LT";
    case Design::TabVFL_LE: return "TabVFL_LE";
    case Design::TabVFL: return "TabVFL";
  }
  return "?";
}

std::string guest_name(PartyId id) { return "guest" + std::to_string(id); }

// ---------------------------------------------------------------- guest

GuestParty::GuestParty(PartyId id, std::size_t chunk_dim, GuestData data,
                       const PartySettings& settings)
    : id_(id), settings_(settings), data_(std::move(data)), chunk_dim_(chunk_dim) {
  if (settings.design == Design::CT) throw ConfigError("CT has no guest parties");
  const std::size_t d_c = data_.train.cols();
  if (d_c == 0) throw ConfigError(guest_name(id) + " holds no features");
  const auto& cfg = settings.cfg;
  const std::string name = guest_name(id);
  if (settings.design == Design::LT) {
    tabnet::TabNetConfig local_cfg = cfg;
    local_cfg.latent_dim = chunk_dim;
    local_ = std::make_unique<tabnet::MonolithicTabNet>(std::vector<std::string>{name},
                                                        std::vector<std::size_t>{d_c}, local_cfg,
                                                        settings.seed, name + ".local");
  } else {
    bottom_ = GuestBottom(name, d_c, chunk_dim, cfg, settings.seed);
    if (settings.design == Design::TabVFL_LE) {
      local_enc_ = TabNetEncoder(name + ".enc", d_c, cfg, settings.seed);
    }
  }
}

void GuestParty::set_silent_epochs(Phase phase, std::set<std::uint32_t> epochs) {
  silent_epochs_[phase] = std::move(epochs);
}

nn::ParamRefs GuestParty::pretrain_params() {
  if (local_) return local_->pretrain_params();
  nn::ParamRefs p = bottom_.pretrain_params();
  if (settings_.design == Design::TabVFL_LE) local_enc_.append_params(p);
  return p;
}

nn::ParamRefs GuestParty::finetune_params() {
  nn::ParamRefs p;
  if (local_) {
    p = local_->blocks[0].finetune_params();
    local_->encoder.append_params(p);
    return p;
  }
  p = bottom_.finetune_params();
  if (settings_.design == Design::TabVFL_LE) local_enc_.append_params(p);
  return p;
}

nn::StateRefs GuestParty::state() {
  nn::StateRefs s;
  if (local_) {
    append(s, local_->blocks[0].pretrain_state());
    append(s, local_->blocks[0].finetune_state());
    local_->encoder.append_state(s);
    local_->decoder.append_state(s);
    return s;
  }
  append(s, bottom_.pretrain_state());
  append(s, bottom_.finetune_state());
  if (settings_.design == Design::TabVFL_LE) local_enc_.append_state(s);
  return s;
}

void GuestParty::serve(Endpoint& ep) {
  try {
    for (;;) {
      auto m = ep.recv(std::chrono::hours(24));
      if (m && !handle(ep, *m)) break;
    }
  } catch (const std::exception& e) {
    ep.close(guest_name(id_) + ": " + e.what());
    throw;
  }
  ep.close();
}

const Matrix& GuestParty::rows_for(Split split) const {
  switch (split) {
    case Split::Train: return data_.train;
    case Split::Validation: return data_.validation;
    case Split::All: return data_.all;
  }
  throw ProtocolError("bad split");
}

bool GuestParty::handle(Endpoint& ep, const Message& m) {
  if (m.tag == Tag::Control) {
    const Control& c = m.control;
    auto ack = [&](std::uint32_t epoch) {
      ep.send(make_control(ControlKind::Ack, id_, static_cast<std::uint32_t>(c.kind), phase_,
                           Split::Train, epoch));
    };
    switch (c.kind) {
      case ControlKind::PhaseBegin:
        phase_ = c.phase;
        silent_ = false;
        pending_ = {};
        if (phase_ == Phase::Finetune) {
          if (local_) {
            local_->transfer();
          } else {
            bottom_.transfer();
          }
          opt_ = nn::Adam(finetune_params(), settings_.adam);
        } else {
          opt_ = nn::Adam(pretrain_params(), settings_.adam);
        }
        ack(0);
        return true;
      case ControlKind::EpochBegin: {
        if (c.phase != phase_) throw ProtocolError("epoch announced for the wrong phase");
        const auto& quiet = silent_epochs_[phase_];
        silent_ = quiet.count(c.epoch) > 0;
        pending_ = {};
        if (!silent_) ack(c.epoch);
        return true;
      }
      case ControlKind::BatchAnnounce:
        if (!silent_) on_announce(ep, m);
        return true;
      case ControlKind::EpochEnd:
        if (!silent_) ack(c.epoch);
        return true;
      case ControlKind::Shutdown:
        return false;
      case ControlKind::Ack:
        break;
    }
    throw ProtocolError(guest_name(id_) + ": unexpected control " + describe(m));
  }
  if (silent_) return true;
  switch (m.tag) {
    case Tag::DecoderPartition:
      on_partition(ep, m);
      return true;
    case Tag::GradIntermediate:
      on_gradient(m);
      return true;
    default:
      throw ProtocolError(guest_name(id_) + ": unexpected " + describe(m));
  }
}

void GuestParty::require_pending(const Message& m) {
  if (!pending_.active || pending_.batch != m.batch) {
    throw ProtocolError(guest_name(id_) + ": out-of-order " + describe(m) +
                        (pending_.active ? " while on batch " + std::to_string(pending_.batch)
                                         : " with no batch in flight"));
  }
}

void GuestParty::on_announce(Endpoint& ep, const Message& m) {
  const Control& c = m.control;
  if (c.phase != phase_) throw ProtocolError(guest_name(id_) + ": batch for the wrong phase");
  const Matrix& src = rows_for(c.split);
  const bool train = c.split == Split::Train;
  const auto ranges = data::batch_ranges(src.rows(), settings_.batch_size, train);
  if (m.batch >= ranges.size()) {
    throw ProtocolError(guest_name(id_) + ": batch index " + std::to_string(m.batch) +
                        " out of range");
  }
  const Mode mode = train ? Mode::Training : Mode::Inference;
  pending_ = {true, m.batch, c.split, nn::slice_rows(src, ranges[m.batch].begin, ranges[m.batch].end), {}};
  if (train) opt_.zero_grad();
  const Matrix& x = pending_.x;
  const std::size_t B = x.rows();
  const Design d = settings_.design;
  auto send_matrix = [&](Tag tag, Matrix mat) { ep.send(make_matrix_message(tag, id_, m.batch, std::move(mat))); };

  if (phase_ == Phase::Pretrain) {
    if (d == Design::LT) {
      auto pass = local_->pretrain_forward(x, mode);
      if (train) {
        local_->pretrain_backward();
        opt_.step();
        ++steps_;
      }
      pending_.active = false;
      ep.send(make_loss_message(id_, m.batch, pass.loss));
      return;
    }
    auto& obf = train ? bottom_.obfuscator : bottom_.eval_obfuscator;
    tabnet::Obfuscated o = obf.apply(x);
    Matrix act = bottom_.repr_bin.forward(o.x_masked, mode);
    pending_.s = o.s;
    if (d == Design::TabVFL) {
      send_matrix(Tag::IntermediateResult, std::move(act));
      send_matrix(Tag::BinaryMask, std::move(o.s));
    } else {
      Matrix prior(B, x.cols(), 1.0);
      prior -= pending_.s;
      auto out = local_enc_.forward(act, prior, mode);
      send_matrix(Tag::IntermediateResult, nn::hconcat(out.steps));
    }
    return;
  }

  // finetuning
  Matrix z;
  if (d == Design::TabVFL) {
    z = bottom_.repr.forward(x, mode);
  } else if (d == Design::TabVFL_LE) {
    z = local_enc_.forward(bottom_.repr.forward(x, mode), Matrix(B, x.cols(), 1.0), mode).z;
  } else {
    z = local_->encoder.forward(local_->blocks[0].repr.forward(x, mode), Matrix(B, x.cols(), 1.0), mode).z;
  }
  if (!train) pending_.active = false;
  send_matrix(Tag::IntermediateResult, std::move(z));
}

void GuestParty::on_partition(Endpoint& ep, const Message& m) {
  require_pending(m);
  if (phase_ != Phase::Pretrain || local_) {
    throw ProtocolError(guest_name(id_) + ": decoder partition outside split pretraining");
  }
  Matrix x_hat = bottom_.reconstruct(m.matrix);
  auto rl = nn::reconstruction_loss(pending_.x, x_hat, pending_.s);
  ep.send(make_loss_message(id_, m.batch, rl.value));
  if (pending_.split == Split::Train) {
    ep.send(make_matrix_message(Tag::GradPartition, id_, m.batch,
                                bottom_.reconstruct_backward(rl.d_reconstruction)));
  } else {
    pending_.active = false;
  }
}

void GuestParty::on_gradient(const Message& m) {
  require_pending(m);
  if (pending_.split != Split::Train) {
    throw ProtocolError(guest_name(id_) + ": gradient for an evaluation batch");
  }
  const auto& cfg = settings_.cfg;
  const Design d = settings_.design;
  if (phase_ == Phase::Pretrain) {
    if (d == Design::TabVFL) {
      bottom_.repr_bin.backward(m.matrix);
    } else if (d == Design::TabVFL_LE) {
      std::vector<std::size_t> widths(cfg.n_steps, cfg.latent_dim);
      const auto d_steps = tabnet::split_cols(m.matrix, widths);
      bottom_.repr_bin.backward(local_enc_.backward(d_steps, 0.0));
    } else {
      throw ProtocolError(guest_name(id_) + ": LT pretraining takes no gradients");
    }
  } else {
    if (d == Design::TabVFL) {
      bottom_.repr.backward(m.matrix);
    } else {
      // Z = Σ ReLU(d_k); the guest adds its own sparsity term locally.
      std::vector<Matrix> d_steps(cfg.n_steps, m.matrix);
      if (d == Design::TabVFL_LE) {
        bottom_.repr.backward(local_enc_.backward(d_steps, -cfg.lambda_sparse));
      } else {
        local_->blocks[0].repr.backward(local_->encoder.backward(d_steps, -cfg.lambda_sparse));
      }
    }
  }
  opt_.step();
  ++steps_;
  pending_.active = false;
}

// ----------------------------------------------------------------- host

HostParty::HostParty(const PartySettings& settings, std::vector<GuestInfo> guests,
                     std::vector<int> train_labels, std::vector<int> validation_labels,
                     std::size_t n_all_rows, Strategy strategy, std::chrono::milliseconds timeout)
    : settings_(settings), guests_(std::move(guests)), train_labels_(std::move(train_labels)),
      val_labels_(std::move(validation_labels)), n_all_(n_all_rows), strategy_(strategy),
      timeout_(timeout) {
  if (settings.design == Design::CT) throw ConfigError("CT runs without a host party");
  if (guests_.empty()) throw ConfigError("no guests");
  std::sort(guests_.begin(), guests_.end(), [](auto& a, auto& b) { return a.id < b.id; });
  const auto& cfg = settings.cfg;
  cfg.validate(guests_.size());
  std::size_t D = 0, latent = 0;
  for (auto& g : guests_) {
    D += g.n_features;
    latent += g.chunk_dim;
  }
  if (latent != cfg.latent_dim) throw ConfigError("guest latent chunks do not add up to latent_dim");
  if (settings.design == Design::TabVFL) encoder_ = TabNetEncoder("host.enc", D, cfg, settings.seed);
  if (settings.design != Design::LT) decoder_ = tabnet::TabNetDecoder("host.dec", cfg, settings.seed);
  final_mapping_ = nn::Linear("host.final_mapping", cfg.latent_dim, cfg.n_classes, true, settings.seed);
}

void HostParty::attach(PartyId guest, Endpoint* ep) { endpoints_[guest] = ep; }

Endpoint& HostParty::ep(PartyId g) {
  auto it = endpoints_.find(g);
  if (it == endpoints_.end() || !it->second) throw ProtocolError("no endpoint for guest " + std::to_string(g));
  return *it->second;
}

nn::ParamRefs HostParty::params() {
  nn::ParamRefs p;
  const Design d = settings_.design;
  if (phase_ == Phase::Pretrain) {
    if (d == Design::TabVFL) encoder_.append_params(p);
    if (d != Design::LT) decoder_.append_params(p);
  } else {
    if (d == Design::TabVFL) encoder_.append_params(p);
    final_mapping_.append_params(p);
  }
  return p;
}

nn::StateRefs HostParty::state() {
  nn::StateRefs s;
  const Design d = settings_.design;
  if (d == Design::TabVFL) encoder_.append_state(s);
  if (d != Design::LT) decoder_.append_state(s);
  final_mapping_.append_state(s);
  return s;
}

ByteCounts HostParty::bytes() const {
  ByteCounts total;
  for (const auto& [id, e] : endpoints_) {
    const auto b = e->bytes();
    total.sent += b.sent;
    total.received += b.received;
  }
  return total;
}

std::size_t HostParty::activation_cols(const GuestInfo& g) const {
  const auto& cfg = settings_.cfg;
  switch (settings_.design) {
    case Design::TabVFL: return g.n_features;
    case Design::TabVFL_LE: return phase_ == Phase::Pretrain ? cfg.n_steps * cfg.latent_dim : cfg.latent_dim;
    case Design::LT: return g.chunk_dim;
    case Design::CT: break;
  }
  return 0;
}

std::optional<Message> HostParty::expect(PartyId g, Tag tag, std::uint32_t batch,
                                         std::set<PartyId>& online) {
  auto m = ep(g).recv(timeout_);
  if (!m) {
    online.erase(g);  // silent past the timeout: offline for the rest of the epoch
    return std::nullopt;
  }
  if (m->tag != tag || m->party != g || m->batch != batch) {
    Message want;
    want.tag = tag;
    want.party = g;
    want.batch = batch;
    throw ProtocolError("expected " + describe(want) + ", got " + describe(*m));
  }
  return m;
}

void HostParty::announce(std::uint32_t b, Split split, const std::set<PartyId>& online) {
  for (const auto& g : guests_) {
    if (online.count(g.id)) {
      ep(g.id).send(make_control(ControlKind::BatchAnnounce, g.id, b, phase_, split, epoch_));
    }
  }
}

void HostParty::control_roundtrip(ControlKind kind, std::uint32_t epoch, std::set<PartyId>& online) {
  for (const auto& g : guests_) {
    if (online.count(g.id)) ep(g.id).send(make_control(kind, g.id, 0, phase_, Split::Train, epoch));
  }
  for (const auto& g : guests_) {
    if (!online.count(g.id)) continue;
    // Anything before the acknowledgement is left over from a round this
    // guest missed; drop it.
    for (;;) {
      auto m = ep(g.id).recv(timeout_);
      if (!m) {
        online.erase(g.id);
        break;
      }
      if (m->tag == Tag::Control && m->control.kind == ControlKind::Ack &&
          m->batch == static_cast<std::uint32_t>(kind) && m->control.epoch == epoch) {
        break;
      }
    }
  }
}

void HostParty::begin_phase(Phase phase) {
  phase_ = phase;
  epoch_ = 0;
  cache_.clear();
  std::set<PartyId> online;
  for (auto& g : guests_) online.insert(g.id);
  control_roundtrip(ControlKind::PhaseBegin, 0, online);
  if (online.size() != guests_.size()) throw ProtocolError("a guest did not acknowledge the phase change");
  opt_ = nn::Adam(params(), settings_.adam);
}

HostParty::BatchResult HostParty::pretrain_batch(std::uint32_t b, Split split, std::size_t rows,
                                                 std::set<PartyId>& online) {
  const bool train = split == Split::Train;
  const Mode mode = train ? Mode::Training : Mode::Inference;
  const Design d = settings_.design;
  const auto& cfg = settings_.cfg;
  BatchResult res;
  if (train) opt_.zero_grad();
  announce(b, split, online);

  if (d == Design::LT) {
    for (const auto& g : guests_) {
      if (!online.count(g.id)) continue;
      if (auto m = expect(g.id, Tag::ReconLoss, b, online)) {
        res.loss += m->loss;
        res.contributors.push_back(g.id);
      }
    }
    return res;
  }

  std::vector<Matrix> acts, masks;
  for (const auto& g : guests_) {
    std::optional<GuestInputs> live;
    if (online.count(g.id)) {
      if (auto a = expect(g.id, Tag::IntermediateResult, b, online)) {
        check_shape(a->matrix, rows, activation_cols(g), g.id, "activations");
        if (d == Design::TabVFL) {
          if (auto s = expect(g.id, Tag::BinaryMask, b, online)) {
            check_shape(s->matrix, rows, g.n_features, g.id, "mask");
            live = GuestInputs{std::move(a->matrix), std::move(s->matrix)};
          }
        } else {
          live = GuestInputs{std::move(a->matrix), std::nullopt};
        }
      }
    }
    if (!train && !live) throw ProtocolError("guest " + std::to_string(g.id) + " unavailable during evaluation");
    const InputShape shape{rows, activation_cols(g), d == Design::TabVFL ? g.n_features : 0};
    GuestInputs in = train ? resolve_inputs(cache_, g.id, b, std::move(live), strategy_, shape) : std::move(*live);
    acts.push_back(std::move(in.activation));
    if (in.mask) masks.push_back(std::move(*in.mask));
  }

  std::vector<Matrix> steps;
  if (d == Design::TabVFL) {
    const Matrix x_int = tabnet::concat_intermediate(acts);
    Matrix prior(rows, x_int.cols(), 1.0);
    prior -= tabnet::concat_intermediate(masks);
    steps = encoder_.forward(x_int, prior, mode).steps;
  } else {
    std::vector<std::vector<Matrix>> per_guest;
    const std::vector<std::size_t> widths(cfg.n_steps, cfg.latent_dim);
    for (const Matrix& a : acts) per_guest.push_back(tabnet::split_cols(a, widths));
    steps = tabnet::le_aggregate(per_guest);
  }
  const Matrix dec_out = decoder_.forward(steps, mode);
  last_output_ = dec_out;
  std::vector<std::size_t> chunk_widths;
  for (const auto& g : guests_) chunk_widths.push_back(g.chunk_dim);
  const auto chunks = tabnet::split_cols(dec_out, chunk_widths);

  for (std::size_t i = 0; i < guests_.size(); ++i) {
    if (online.count(guests_[i].id)) {
      ep(guests_[i].id).send(make_matrix_message(Tag::DecoderPartition, guests_[i].id, b, chunks[i]));
    }
  }
  std::vector<Matrix> d_chunks;
  for (std::size_t i = 0; i < guests_.size(); ++i) {
    const PartyId g = guests_[i].id;
    d_chunks.emplace_back(rows, chunk_widths[i]);
    if (!online.count(g)) continue;
    auto l = expect(g, Tag::ReconLoss, b, online);
    if (!l) continue;
    if (train) {
      auto grad = expect(g, Tag::GradPartition, b, online);
      if (!grad) continue;
      check_shape(grad->matrix, rows, chunk_widths[i], g, "partition gradient");
      d_chunks.back() = std::move(grad->matrix);
    }
    res.loss += l->loss;
    res.contributors.push_back(g);
  }
  // Offline guests' losses are skipped; with none left there is nothing to learn from.
  if (!train || res.contributors.empty()) return res;

  const auto d_steps = decoder_.backward(nn::hconcat(d_chunks));
  std::vector<Matrix> d_guest;
  if (d == Design::TabVFL) {
    std::vector<std::size_t> widths;
    for (const auto& g : guests_) widths.push_back(g.n_features);
    d_guest = tabnet::split_cols(encoder_.backward(d_steps, 0.0), widths);
  } else {
    d_guest.assign(guests_.size(), nn::hconcat(d_steps));
  }
  for (std::size_t i = 0; i < guests_.size(); ++i) {
    const PartyId g = guests_[i].id;
    if (std::find(res.contributors.begin(), res.contributors.end(), g) != res.contributors.end()) {
      ep(g).send(make_matrix_message(Tag::GradIntermediate, g, b, d_guest[i]));
    }
  }
  opt_.step();
  ++steps_;
  return res;
}

HostParty::BatchResult HostParty::finetune_batch(std::uint32_t b, Split split, std::size_t rows,
                                                 std::span<const int> labels,
                                                 std::set<PartyId>& online, Matrix* latents_out) {
  const bool train = split == Split::Train;
  const Mode mode = train ? Mode::Training : Mode::Inference;
  const Design d = settings_.design;
  const auto& cfg = settings_.cfg;
  BatchResult res;
  if (train) opt_.zero_grad();
  announce(b, split, online);

  std::vector<Matrix> acts;
  for (const auto& g : guests_) {
    std::optional<GuestInputs> live;
    if (online.count(g.id)) {
      if (auto a = expect(g.id, Tag::IntermediateResult, b, online)) {
        check_shape(a->matrix, rows, activation_cols(g), g.id, "activations");
        live = GuestInputs{std::move(a->matrix), std::nullopt};
        res.contributors.push_back(g.id);
      }
    }
    if (!train && !live) throw ProtocolError("guest " + std::to_string(g.id) + " unavailable during evaluation");
    const InputShape shape{rows, activation_cols(g), 0};
    acts.push_back(train ? resolve_inputs(cache_, g.id, b, std::move(live), strategy_, shape).activation
                         : std::move(live->activation));
  }

  Matrix z;
  double m_loss = 0.0;
  if (d == Design::TabVFL) {
    const Matrix x_int = tabnet::concat_intermediate(acts);
    auto out = encoder_.forward(x_int, Matrix(rows, x_int.cols(), 1.0), mode);
    z = std::move(out.z);
    m_loss = out.m_loss;
  } else if (d == Design::TabVFL_LE) {
    z = acts[0];
    for (std::size_t i = 1; i < acts.size(); ++i) z += acts[i];
  } else {
    z = nn::hconcat(acts);
  }
  if (latents_out) {
    *latents_out = std::move(z);
    return res;
  }
  const auto pred = tabnet::final_mapping_predict(final_mapping_, z);
  last_output_ = pred.logits;
  auto ce = nn::cross_entropy(pred.logits, labels);
  // Training reports the optimised objective; evaluation plain cross-entropy,
  // which is what early stopping watches.
  res.loss = train ? ce.value - (d == Design::TabVFL ? cfg.lambda_sparse * m_loss : 0.0) : ce.value;
  for (std::size_t r = 0; r < rows; ++r)
    if (static_cast<int>(argmax_row(pred.logits, r)) == labels[r]) ++res.correct;
  if (!train) return res;

  const Matrix dz = final_mapping_.backward(z, ce.d_logits);
  std::vector<Matrix> d_guest;
  if (d == Design::TabVFL) {
    std::vector<std::size_t> widths;
    for (const auto& g : guests_) widths.push_back(g.n_features);
    d_guest = tabnet::split_cols(encoder_.backward(std::vector<Matrix>(cfg.n_steps, dz), -cfg.lambda_sparse), widths);
  } else if (d == Design::TabVFL_LE) {
    d_guest.assign(guests_.size(), dz);
  } else {
    std::vector<std::size_t> widths;
    for (const auto& g : guests_) widths.push_back(g.chunk_dim);
    d_guest = tabnet::split_cols(dz, widths);
  }
  for (std::size_t i = 0; i < guests_.size(); ++i) {
    const PartyId g = guests_[i].id;
    if (std::find(res.contributors.begin(), res.contributors.end(), g) != res.contributors.end()) {
      ep(g).send(make_matrix_message(Tag::GradIntermediate, g, b, d_guest[i]));
    }
  }
  opt_.step();
  ++steps_;
  return res;
}

EpochSummary HostParty::train_epoch(std::uint32_t epoch, const std::set<PartyId>& offline) {
  epoch_ = epoch;
  std::set<PartyId> online;
  for (const auto& g : guests_)
    if (!offline.count(g.id)) online.insert(g.id);
  control_roundtrip(ControlKind::EpochBegin, epoch, online);

  EpochSummary s;
  const auto ranges = data::batch_ranges(train_labels_.size(), settings_.batch_size, true);
  std::size_t correct = 0, seen = 0;
  for (std::uint32_t b = 0; b < ranges.size(); ++b) {
    const std::size_t rows = ranges[b].size();
    BatchResult r;
    if (phase_ == Phase::Pretrain) {
      r = pretrain_batch(b, Split::Train, rows, online);
    } else {
      r = finetune_batch(b, Split::Train, rows,
                         std::span(train_labels_).subspan(ranges[b].begin, rows), online, nullptr);
    }
    s.batch_losses.push_back(r.loss);
    s.contributors.push_back(std::move(r.contributors));
    correct += r.correct;
    seen += rows;
  }
  // Wait until every guest has applied its last step.
  control_roundtrip(ControlKind::EpochEnd, epoch, online);
  for (const auto& g : guests_)
    if (!online.count(g.id)) s.offline.insert(g.id);
  for (double l : s.batch_losses) s.mean_loss += l;
  if (!s.batch_losses.empty()) s.mean_loss /= static_cast<double>(s.batch_losses.size());
  if (phase_ == Phase::Finetune && seen > 0) s.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  return s;
}

EvalSummary HostParty::validate() {
  std::set<PartyId> online;
  for (const auto& g : guests_) online.insert(g.id);
  epoch_ = kEvalRound;
  control_roundtrip(ControlKind::EpochBegin, kEvalRound, online);
  if (online.size() != guests_.size()) throw ProtocolError("guest unavailable for validation");
  const auto ranges = data::batch_ranges(val_labels_.size(), settings_.batch_size, false);
  EvalSummary e;
  std::size_t correct = 0, seen = 0;
  double weighted = 0.0;
  for (std::uint32_t b = 0; b < ranges.size(); ++b) {
    const std::size_t rows = ranges[b].size();
    BatchResult r = phase_ == Phase::Pretrain
                        ? pretrain_batch(b, Split::Validation, rows, online)
                        : finetune_batch(b, Split::Validation, rows,
                                         std::span(val_labels_).subspan(ranges[b].begin, rows),
                                         online, nullptr);
    weighted += r.loss * static_cast<double>(rows);
    correct += r.correct;
    seen += rows;
  }
  if (seen > 0) {
    e.mean_loss = weighted / static_cast<double>(seen);
    e.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  }
  return e;
}

Matrix HostParty::extract_latents() {
  if (phase_ != Phase::Finetune) throw ProtocolError("latents requested before finetuning");
  std::set<PartyId> online;
  for (const auto& g : guests_) online.insert(g.id);
  epoch_ = kEvalRound;
  control_roundtrip(ControlKind::EpochBegin, kEvalRound, online);
  if (online.size() != guests_.size()) throw ProtocolError("guest unavailable for latent extraction");
  const auto ranges = data::batch_ranges(n_all_, settings_.batch_size, false);
  std::vector<Matrix> parts;
  for (std::uint32_t b = 0; b < ranges.size(); ++b) {
    Matrix z;
    finetune_batch(b, Split::All, ranges[b].size(), {}, online, &z);
    parts.push_back(std::move(z));
  }
  return nn::vconcat(parts);
}

void HostParty::shutdown() {
  for (const auto& g : guests_) {
    try {
      ep(g.id).send(make_control(ControlKind::Shutdown, g.id));
    } catch (const ProtocolError&) {
      // already gone
    }
  }
}

}  // namespace tabvfl::protocol
