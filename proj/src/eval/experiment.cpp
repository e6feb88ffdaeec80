#include "tabvfl/eval/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "tabvfl/data/batches.hpp"
#include "tabvfl/data/partition.hpp"
#include "tabvfl/errors.hpp"
#include "tabvfl/eval/early_stopping.hpp"
#include "tabvfl/eval/metrics.hpp"
#include "tabvfl/nn/checkpoint.hpp"

namespace tabvfl::eval {

using protocol::EpochSummary;
using protocol::EvalSummary;

CtLayout parse_ct_layout(const std::string& s) {
  if (s == "matched") return CtLayout::Matched;
  if (s == "single") return CtLayout::Single;
  throw ConfigError("unknown ct_layout '" + s + "' (matched, single)");
}

std::string to_string(CtLayout l) { return l == CtLayout::Matched ? "matched" : "single"; }

void ExperimentSpec::validate() const {
  if (designs.empty()) throw ConfigError("no designs given");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (guests < 1) throw ConfigError("need at least one guest");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (finetune_epochs < 1) throw ConfigError("finetune_epochs must be at least 1");
  tabnet.validate(guests);
  for (double p : failures.p_grid) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("failure probability " + format_real(p) + " outside [0,1]");
  }
  for (Strategy s : failures.strategies) {
    if (s == Strategy::None) throw ConfigError("failure strategies must be cache or zeros");
  }
  if (failures.runs < 1) throw ConfigError("failure runs must be at least 1");
  for (std::size_t d : latent_sweep) {
    if (d < guests) throw ConfigError("latent sweep value " + std::to_string(d) + " is below the guest count");
  }
  if (probes.mlp_hidden < 1 || probes.mlp_batch < 1) throw ConfigError("probe sizes must be positive");
}

namespace {

std::vector<int> labels_of(const data::Prepared& p, const std::vector<std::size_t>& idx) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (std::size_t i : idx) y.push_back(p.data.y[i]);
  return y;
}

tabnet::TabNetConfig config_for(const ExperimentSpec& spec, const data::Prepared& p) {
  tabnet::TabNetConfig cfg = spec.tabnet;
  cfg.n_classes = p.data.n_classes;
  return cfg;
}

class FederatedModel : public DesignModel {
 public:
  FederatedModel(const ExperimentSpec& spec, const data::Prepared& p, Design design, std::uint64_t seed,
                 Strategy strategy)
      : design_(design) {
    const auto part = data::vertical_partition_blocks(p.data.block_widths, spec.guests);
    const Matrix x_train = p.data.take_rows(p.split.train).x;
    const Matrix x_val = p.data.take_rows(p.split.validation).x;
    const auto tr = part.apply(x_train), va = part.apply(x_val), all = part.apply(p.data.x);
    std::vector<protocol::GuestData> guests;
    for (std::size_t i = 0; i < spec.guests; ++i) guests.push_back({tr[i], va[i], all[i]});

    protocol::PartySettings ps;
    ps.design = design;
    ps.cfg = config_for(spec, p);
    ps.seed = seed;
    ps.batch_size = spec.batch_size;
    ps.adam = spec.adam;
    protocol::FederationOptions opts;
    opts.transport = spec.transport;
    opts.strategy = strategy;
    opts.timeout = spec.timeout;
    fed_ = std::make_unique<protocol::Federation>(ps, std::move(guests), labels_of(p, p.split.train),
                                                  labels_of(p, p.split.validation), opts);
  }

  Design design() const override { return design_; }
  std::vector<PartyId> guest_ids() const override { return fed_->guest_ids(); }
  void begin_phase(Phase phase) override { fed_->begin_phase(phase); }
  EpochSummary train_epoch(std::uint32_t epoch, const std::set<PartyId>& offline) override {
    return fed_->train_epoch(epoch, offline);
  }
  EvalSummary validate() override { return fed_->validate(); }
  Matrix extract_latents() override { return fed_->extract_latents(); }
  void save_checkpoints(const std::filesystem::path& dir) override { fed_->save_checkpoints(dir); }
  void load_checkpoints(const std::filesystem::path& dir) override { fed_->load_checkpoints(dir); }
  protocol::ByteCounts bytes() const override { return fed_->bytes(); }

 private:
  Design design_;
  std::unique_ptr<protocol::Federation> fed_;
};

// CT: the monolithic model driven batch by batch exactly like the host drives
// the federation, so with the matched layout the two produce the same numbers.
class CentralModel : public DesignModel {
 public:
  CentralModel(const ExperimentSpec& spec, const data::Prepared& p, std::uint64_t seed)
      : batch_(spec.batch_size), adam_(spec.adam) {
    const auto part = data::vertical_partition_blocks(p.data.block_widths, spec.guests);
    std::vector<std::string> ids;
    std::vector<std::size_t> widths;
    std::string host = "host";
    if (spec.ct_layout == CtLayout::Matched) {
      widths = part.widths();
      for (std::size_t i = 0; i < widths.size(); ++i)
        ids.push_back(protocol::guest_name(static_cast<PartyId>(protocol::kHostId + 1 + i)));
    } else {
      ids = {"ct"};
      widths = {p.data.x.cols()};
      host = "ct";
    }
    auto cfg = config_for(spec, p);
    cfg.validate(spec.ct_layout == CtLayout::Matched ? ids.size() : 0);
    model_ = std::make_unique<tabnet::MonolithicTabNet>(ids, widths, cfg, seed, host);
    x_train_ = p.data.take_rows(p.split.train).x;
    x_val_ = p.data.take_rows(p.split.validation).x;
    x_all_ = p.data.x;
    y_train_ = labels_of(p, p.split.train);
    y_val_ = labels_of(p, p.split.validation);
  }

  Design design() const override { return Design::CT; }
  std::vector<PartyId> guest_ids() const override { return {}; }

  void begin_phase(Phase phase) override {
    phase_ = phase;
    if (phase == Phase::Pretrain) {
      opt_ = nn::Adam(model_->pretrain_params(), adam_);
    } else {
      model_->transfer();
      opt_ = nn::Adam(model_->finetune_params(), adam_);
    }
  }

  EpochSummary train_epoch(std::uint32_t, const std::set<PartyId>& offline) override {
    if (!offline.empty()) throw ConfigError("CT has no guests to take offline");
    EpochSummary s;
    std::size_t correct = 0;
    const auto ranges = data::batch_ranges(x_train_.rows(), batch_, true);
    for (const auto& r : ranges) {
      const Matrix xb = nn::slice_rows(x_train_, r.begin, r.end);
      opt_.zero_grad();
      if (phase_ == Phase::Pretrain) {
        const auto pass = model_->pretrain_forward(xb, nn::Mode::Training);
        model_->pretrain_backward();
        s.batch_losses.push_back(pass.loss);
      } else {
        const std::span<const int> yb = std::span(y_train_).subspan(r.begin, r.size());
        const auto pass = model_->finetune_forward(xb, yb, nn::Mode::Training);
        model_->finetune_backward();
        s.batch_losses.push_back(pass.loss);
        correct += count_correct(pass.pred.probabilities, yb);
      }
      opt_.step();
      s.contributors.emplace_back();
    }
    std::size_t seen = 0;
    for (const auto& r : ranges) seen += r.size();
    for (double l : s.batch_losses) s.mean_loss += l;
    if (!ranges.empty()) s.mean_loss /= static_cast<double>(ranges.size());
    if (phase_ == Phase::Finetune && seen) s.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    return s;
  }

  EvalSummary validate() override {
    EvalSummary e;
    double weighted = 0.0;
    std::size_t correct = 0;
    for (const auto& r : data::batch_ranges(x_val_.rows(), batch_, false)) {
      const Matrix xb = nn::slice_rows(x_val_, r.begin, r.end);
      if (phase_ == Phase::Pretrain) {
        weighted += model_->pretrain_forward(xb, nn::Mode::Inference).loss * static_cast<double>(r.size());
      } else {
        const std::span<const int> yb = std::span(y_val_).subspan(r.begin, r.size());
        const auto pass = model_->finetune_forward(xb, yb, nn::Mode::Inference);
        weighted += pass.cross_entropy * static_cast<double>(r.size());
        correct += count_correct(pass.pred.probabilities, yb);
      }
    }
    if (x_val_.rows()) {
      e.mean_loss = weighted / static_cast<double>(x_val_.rows());
      e.accuracy = static_cast<double>(correct) / static_cast<double>(x_val_.rows());
    }
    return e;
  }

  Matrix extract_latents() override {
    if (phase_ != Phase::Finetune) throw ProtocolError("latents requested before finetuning");
    return model_->latents(x_all_);
  }

  void save_checkpoints(const std::filesystem::path& dir) override {
    std::filesystem::create_directories(dir);
    nn::save_checkpoint(protocol::checkpoint_path(dir, Design::CT, protocol::kHostId), nn::snapshot(model_->state()));
  }
  void load_checkpoints(const std::filesystem::path& dir) override {
    nn::restore(nn::load_checkpoint(protocol::checkpoint_path(dir, Design::CT, protocol::kHostId)), model_->state());
  }
  protocol::ByteCounts bytes() const override { return {}; }

 private:
  static std::size_t count_correct(const Matrix& probs, std::span<const int> y) {
    const auto pred = argmax_rows(probs);
    std::size_t c = 0;
    for (std::size_t i = 0; i < y.size(); ++i) c += pred[i] == y[i];
    return c;
  }

  std::size_t batch_;
  nn::AdamConfig adam_;
  std::unique_ptr<tabnet::MonolithicTabNet> model_;
  nn::Adam opt_;
  Phase phase_ = Phase::Pretrain;
  Matrix x_train_, x_val_, x_all_;
  std::vector<int> y_train_, y_val_;
};

}  // namespace

std::unique_ptr<DesignModel> make_model(const ExperimentSpec& spec, const data::Prepared& prepared, Design design,
                                        std::uint64_t seed, Strategy strategy) {
  if (prepared.data.n_classes < 2) throw DataError("need at least two label classes");
  if (design == Design::CT) {
    if (strategy != Strategy::None) throw ConfigError("CT has no guests, failure strategies do not apply");
    return std::make_unique<CentralModel>(spec, prepared, seed);
  }
  return std::make_unique<FederatedModel>(spec, prepared, design, seed, strategy);
}

TrainResult train_model(DesignModel& model, const ExperimentSpec& spec, std::uint64_t seed,
                        const RunFailures& failures, const EpochLogger& log) {
  if (failures.p_fail > 0.0 && model.design() == Design::CT) throw ConfigError("CT cannot simulate guest failures");
  const auto start = std::chrono::steady_clock::now();
  TrainResult res;
  auto run_phase = [&](Phase phase, std::uint32_t epochs, const char* label) {
    const protocol::FailureSchedule schedule(model.guest_ids(), failures.p_fail, epochs,
                                             nn::derive_seed(seed, label));
    EarlyStopper stopper(spec.patience);
    model.begin_phase(phase);
    std::uint32_t ran = 0;
    for (std::uint32_t e = 0; e < epochs; ++e) {
      EpochSummary s;
      try {
        s = model.train_epoch(e, schedule.offline(e));
      } catch (const ProtocolError& err) {
        throw ProtocolError(std::string(label) + " epoch " + std::to_string(e) + ": " + err.what());
      }
      ++ran;
      EpochLog entry;
      entry.phase = phase;
      entry.epoch = e;
      entry.train_loss = s.mean_loss;
      entry.offline = s.offline;
      // Validation only feeds early stopping; without patience it is skipped.
      if (spec.patience > 0) {
        const EvalSummary v = model.validate();
        entry.validation_loss = v.mean_loss;
        entry.validation_accuracy = v.accuracy;
        entry.stopped = stopper.update(v.mean_loss);
      }
      if (log) log(entry);
      if (entry.stopped) break;
    }
    return ran;
  };
  res.pretrain_epochs = run_phase(Phase::Pretrain, spec.pretrain_epochs, "pretrain");
  res.finetune_epochs = run_phase(Phase::Finetune, spec.finetune_epochs, "finetune");
  if (spec.record_runtime)
    res.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.bytes = model.bytes();
  return res;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> latent_split(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DataError("no latent rows to split");
  std::mt19937_64 rng(nn::derive_seed(seed, "latent_split"));
  return data::split_two(n, 0.7, rng);
}

std::vector<MetricsRow> evaluate_latents(const Matrix& latents, std::span<const int> labels, std::size_t n_classes,
                                         std::uint64_t seed, const ProbeConfig& probes, const MetricsRow& base,
                                         std::vector<std::string>* warnings) {
  if (latents.rows() != labels.size()) throw DataError("latent rows and labels differ in count");
  const auto [tr, te] = latent_split(latents.rows(), seed);
  auto gather = [&](const std::vector<std::size_t>& idx, Matrix& x, std::vector<int>& y) {
    x = Matrix(idx.size(), latents.cols());
    y.clear();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t c = 0; c < latents.cols(); ++c) x(r, c) = latents(idx[r], c);
      y.push_back(labels[idx[r]]);
    }
  };
  Matrix x_tr, x_te;
  std::vector<int> y_tr, y_te;
  gather(tr, x_tr, y_tr);
  gather(te, x_te, y_te);

  std::vector<MetricsRow> rows;
  for (const auto& probe : train_probes(x_tr, y_tr, n_classes, nn::derive_seed(seed, "probes"), probes)) {
    const Metrics m = compute_metrics(y_te, probe->predict_proba(x_te));
    if (warnings) {
      for (const auto& w : m.warnings) warnings->push_back(probe->name() + ": " + w);
    }
    MetricsRow r = base;
    r.probe = probe->name();
    r.accuracy = m.accuracy;
    r.f1 = m.f1;
    r.roc_auc = m.roc_auc;
    rows.push_back(std::move(r));
  }
  rows.push_back(mean_row(rows));
  return rows;
}

DesignRun run_design(const ExperimentSpec& spec, const data::Prepared& prepared, Design design, std::uint64_t seed,
                     const RunFailures& failures, const EpochLogger& log) {
  spec.validate();
  auto model = make_model(spec, prepared, design, seed, failures.strategy);
  DesignRun run;
  run.train = train_model(*model, spec, seed, failures, log);
  run.latents = model->extract_latents();
  MetricsRow base;
  base.design = protocol::to_string(design);
  base.dataset = spec.dataset;
  base.seed = seed;
  base.runtime_s = run.train.runtime_s;
  base.bytes_sent = run.train.bytes.sent;
  base.bytes_received = run.train.bytes.received;
  run.rows = evaluate_latents(run.latents, prepared.data.y, prepared.data.n_classes, seed, spec.probes, base);
  return run;
}

double FailureCell::f1() const {
  for (const auto& r : rows)
    if (r.probe == "mean") return r.f1;
  throw DataError("failure cell has no mean row");
}

std::vector<std::uint64_t> failure_run_seeds(const ExperimentSpec& spec) {
  std::vector<std::uint64_t> seeds(spec.seeds.begin(), spec.seeds.end());
  if (seeds.size() > spec.failures.runs) seeds.resize(spec.failures.runs);
  while (seeds.size() < spec.failures.runs) seeds.push_back(seeds.back() + 1);
  return seeds;
}

FailureSummary summarize(Strategy strategy, double p_fail, const std::vector<double>& f1s) {
  FailureSummary s;
  s.strategy = strategy;
  s.p_fail = p_fail;
  s.runs = f1s.size();
  if (f1s.empty()) return s;
  s.f1_mean = std::accumulate(f1s.begin(), f1s.end(), 0.0) / static_cast<double>(f1s.size());
  if (f1s.size() > 1) {
    double ss = 0.0;
    for (double f : f1s) ss += (f - s.f1_mean) * (f - s.f1_mean);
    s.f1_std = std::sqrt(ss / static_cast<double>(f1s.size() - 1));
  }
  return s;
}

FailureExperiment run_failure_experiment(const ExperimentSpec& spec, const data::Prepared& prepared,
                                         const EpochLogger& log) {
  spec.validate();
  const Design design = spec.designs.front();
  if (design == Design::CT) throw ConfigError("the failure experiment needs a federated design");
  const auto seeds = failure_run_seeds(spec);
  FailureExperiment ex;
  std::vector<double> base_f1;
  for (std::uint64_t seed : seeds) {
    FailureCell c{Strategy::None, 0.0, seed, run_design(spec, prepared, design, seed, {}, log).rows};
    base_f1.push_back(c.f1());
    ex.cells.push_back(std::move(c));
  }
  ex.summary.push_back(summarize(Strategy::None, 0.0, base_f1));
  for (Strategy strategy : spec.failures.strategies) {
    for (double p : spec.failures.p_grid) {
      std::vector<double> f1s;
      for (std::uint64_t seed : seeds) {
        FailureCell c{strategy, p, seed, run_design(spec, prepared, design, seed, {strategy, p}, log).rows};
        f1s.push_back(c.f1());
        ex.cells.push_back(std::move(c));
      }
      ex.summary.push_back(summarize(strategy, p, f1s));
    }
  }
  return ex;
}

void write_failure_summary(std::ostream& out, const std::vector<FailureSummary>& summary) {
  out << "strategy,p_fail,runs,f1_mean,f1_std\n";
  for (const auto& s : summary) {
    out << (s.strategy == Strategy::None ? std::string("baseline") : protocol::to_string(s.strategy)) << ','
        << format_real(s.p_fail) << ',' << s.runs << ',' << format_real(s.f1_mean) << ',' << format_real(s.f1_std)
        << "\n";
  }
}

std::vector<SweepPoint> run_latent_sweep(const ExperimentSpec& spec, const data::Prepared& prepared,
                                         const EpochLogger& log) {
  spec.validate();
  std::vector<SweepPoint> points;
  for (Design design : spec.designs) {
    for (std::size_t dim : spec.latent_sweep) {
      ExperimentSpec s = spec;
      s.tabnet.latent_dim = dim;
      SweepPoint pt{design, dim, 0.0, {}};
      for (std::uint64_t seed : spec.seeds) {
        auto rows = run_design(s, prepared, design, seed, {}, log).rows;
        pt.f1_mean += rows.back().f1;
        pt.rows.insert(pt.rows.end(), rows.begin(), rows.end());
      }
      pt.f1_mean /= static_cast<double>(spec.seeds.size());
      points.push_back(std::move(pt));
    }
  }
  return points;
}

double sweep_spread(const std::vector<SweepPoint>& points, Design design) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& p : points) {
    if (p.design != design) continue;
    lo = std::min(lo, p.f1_mean);
    hi = std::max(hi, p.f1_mean);
  }
  if (lo > hi) throw DataError("no sweep points for " + protocol::to_string(design));
  return hi - lo;
}

void write_sweep_summary(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << "design,latent_dim,seeds,f1_mean\n";
  for (const auto& p : points) {
    out << protocol::to_string(p.design) << ',' << p.latent_dim << ',' << std::count_if(p.rows.begin(), p.rows.end(), [](const MetricsRow& r) { return r.probe == "mean"; }) << ','
        << format_real(p.f1_mean) << "\n";
  }
}

}  // namespace tabvfl::eval
