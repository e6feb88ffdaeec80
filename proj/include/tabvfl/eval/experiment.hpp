#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "tabvfl/data/prepared.hpp"
#include "tabvfl/eval/probes.hpp"
#include "tabvfl/eval/report.hpp"
#include "tabvfl/protocol/federation.hpp"

namespace tabvfl::eval {

using protocol::Design;
using protocol::PartyId;
using protocol::Phase;
using protocol::Strategy;

// How CT groups its input columns. Matched mirrors the guest partition (one
// extractor per guest-sized block), which makes CT the exact unsplit twin of
// TabVFL. Single is plain TabNet over all columns.
enum class CtLayout { Matched, Single };

CtLayout parse_ct_layout(const std::string& s);
std::string to_string(CtLayout l);

struct FailureSettings {
  std::vector<double> p_grid{0.2, 0.35, 0.5};
  std::vector<Strategy> strategies{Strategy::Cache, Strategy::Zeros};
  std::size_t runs = 8;
};

struct ExperimentSpec {
  std::vector<Design> designs{Design::TabVFL};
  std::string dataset = "dataset";
  tabnet::TabNetConfig tabnet;
  std::uint32_t pretrain_epochs = 300;
  std::uint32_t finetune_epochs = 300;
  std::size_t batch_size = 64;
  std::size_t guests = 5;
  std::size_t patience = 0;
  nn::AdamConfig adam;
  FailureSettings failures;
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::size_t> latent_sweep{16, 32, 64};
  ProbeConfig probes;
  protocol::TransportKind transport = protocol::TransportKind::InProcess;
  std::chrono::milliseconds timeout{0};
  CtLayout ct_layout = CtLayout::Matched;
  // Off: runtime_s is reported as 0 so reruns are byte-identical.
  bool record_runtime = true;

  // Throws ConfigError.
  void validate() const;
};

// Failure injection for one training run.
struct RunFailures {
  Strategy strategy = Strategy::None;
  double p_fail = 0.0;
};

// One trained (or trainable) model of any design behind the same surface.
class DesignModel {
 public:
  virtual ~DesignModel() = default;
  virtual Design design() const = 0;
  virtual std::vector<PartyId> guest_ids() const = 0;
  virtual void begin_phase(Phase phase) = 0;
  virtual protocol::EpochSummary train_epoch(std::uint32_t epoch, const std::set<PartyId>& offline) = 0;
  virtual protocol::EvalSummary validate() = 0;
  // Inference-mode latents of every prepared row, file order.
  virtual Matrix extract_latents() = 0;
  virtual void save_checkpoints(const std::filesystem::path& dir) = 0;
  virtual void load_checkpoints(const std::filesystem::path& dir) = 0;
  virtual protocol::ByteCounts bytes() const = 0;
};

std::unique_ptr<DesignModel> make_model(const ExperimentSpec& spec, const data::Prepared& prepared, Design design,
                                        std::uint64_t seed, Strategy strategy = Strategy::None);

struct EpochLog {
  Phase phase = Phase::Pretrain;
  std::uint32_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;  // finetuning
  std::set<PartyId> offline;
  bool stopped = false;  // early stopping fired after this epoch
};

using EpochLogger = std::function<void(const EpochLog&)>;

struct TrainResult {
  std::uint32_t pretrain_epochs = 0;  // actually run
  std::uint32_t finetune_epochs = 0;
  double runtime_s = 0.0;
  protocol::ByteCounts bytes;
};

// Pretraining then finetuning, each phase with its own failure schedule and
// early stopping on the validation loss.
TrainResult train_model(DesignModel& model, const ExperimentSpec& spec, std::uint64_t seed,
                        const RunFailures& failures = {}, const EpochLogger& log = {});

// 70/30 shuffled split of latent rows.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> latent_split(std::size_t n, std::uint64_t seed);

// Probe rows plus the probe="mean" row. `base` supplies design, dataset,
// seed, runtime and bytes.
std::vector<MetricsRow> evaluate_latents(const Matrix& latents, std::span<const int> labels, std::size_t n_classes,
                                         std::uint64_t seed, const ProbeConfig& probes, const MetricsRow& base,
                                         std::vector<std::string>* warnings = nullptr);

struct DesignRun {
  TrainResult train;
  Matrix latents;
  std::vector<MetricsRow> rows;
};

DesignRun run_design(const ExperimentSpec& spec, const data::Prepared& prepared, Design design, std::uint64_t seed,
                     const RunFailures& failures = {}, const EpochLogger& log = {});

struct FailureCell {
  Strategy strategy = Strategy::None;  // None marks the p=0 baseline
  double p_fail = 0.0;
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  double f1() const;  // of the mean row
};

struct FailureSummary {
  Strategy strategy = Strategy::None;
  double p_fail = 0.0;
  std::size_t runs = 0;
  double f1_mean = 0.0;
  double f1_std = 0.0;  // sample standard deviation, 0 for one run
};

struct FailureExperiment {
  std::vector<FailureCell> cells;
  std::vector<FailureSummary> summary;
};

// Runs the first configured design. Run seeds are the configured seeds,
// extended with consecutive values when `runs` asks for more.
std::vector<std::uint64_t> failure_run_seeds(const ExperimentSpec& spec);
FailureSummary summarize(Strategy strategy, double p_fail, const std::vector<double>& f1s);
FailureExperiment run_failure_experiment(const ExperimentSpec& spec, const data::Prepared& prepared,
                                         const EpochLogger& log = {});
void write_failure_summary(std::ostream& out, const std::vector<FailureSummary>& summary);

struct SweepPoint {
  Design design = Design::TabVFL;
  std::size_t latent_dim = 0;
  double f1_mean = 0.0;  // over seeds, mean-probe rows
  std::vector<MetricsRow> rows;
};

std::vector<SweepPoint> run_latent_sweep(const ExperimentSpec& spec, const data::Prepared& prepared,
                                         const EpochLogger& log = {});
// max − min of f1_mean per design.
double sweep_spread(const std::vector<SweepPoint>& points, Design design);
void write_sweep_summary(std::ostream& out, const std::vector<SweepPoint>& points);

}  // namespace tabvfl::eval
