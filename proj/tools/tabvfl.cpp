// tabvfl: prepare data, train a design, evaluate its latents, run the
// failure grid or the latent-dimension sweep. Exit codes: 0 ok, 1 config,
// 2 data, 3 protocol/training.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabvfl/cli/run_config.hpp"
#include "tabvfl/errors.hpp"
#include "tabvfl/eval/experiment.hpp"

namespace fs = std::filesystem;
using namespace tabvfl;
using ojson = nlohmann::ordered_json;

namespace {

void emit(std::ostream& out, const ojson& event) {
  out << event.dump() << "\n";
  out.flush();
}

void say(const ojson& event) { emit(std::cout, event); }

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

void write_json(const fs::path& path, const ojson& j) {
  auto f = open_out(path);
  f << j.dump(2) << "\n";
}

ojson read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("missing " + path.string());
  try {
    return ojson::parse(f);
  } catch (const std::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string tag(protocol::Design d, std::uint64_t seed) {
  return protocol::to_string(d) + "_seed" + std::to_string(seed);
}

fs::path run_dir(const cli::RunConfig& rc, protocol::Design d, std::uint64_t seed) {
  return rc.checkpoint_dir / protocol::to_string(d) / ("seed_" + std::to_string(seed));
}

std::string phase_name(protocol::Phase p) { return p == protocol::Phase::Pretrain ? "pretrain" : "finetune"; }

// Per-epoch JSON lines into one log file.
eval::EpochLogger epoch_logger(std::ofstream& log, const ojson& context) {
  return [&log, context](const eval::EpochLog& e) {
    ojson j = {{"event", "epoch"}};
    j.update(context);
    j["phase"] = phase_name(e.phase);
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    if (e.validation_loss != 0.0 || e.stopped) j["validation_loss"] = e.validation_loss;
    j["offline"] = e.offline;
    j["stopped"] = e.stopped;
    emit(log, j);
  };
}

void write_reports(const cli::RunConfig& rc, const std::vector<eval::MetricsRow>& rows, const fs::path& stem) {
  if (rc.formats != cli::ReportFormats::Json) eval::emit_report(rows, fs::path(stem) += ".csv", eval::ReportFormat::Csv);
  if (rc.formats != cli::ReportFormats::Csv) eval::emit_report(rows, fs::path(stem) += ".json", eval::ReportFormat::Json);
}

data::Prepared load_cache(const cli::RunConfig& rc) {
  if (!fs::exists(rc.cache_dir / "manifest.json"))
    throw DataError("no prepared dataset in " + rc.cache_dir.string() + "; run 'tabvfl prepare' first");
  return data::load_prepared(rc.cache_dir);
}

int cmd_prepare(const cli::RunConfig& rc) {
  const auto schema = data::load_schema(rc.schema);
  const auto raw = data::load_csv(rc.csv, schema);
  const auto p = data::prepare_dataset(raw, rc.prepare);
  data::save_prepared(p, rc.cache_dir);
  say({{"event", "prepared"},
       {"source_rows", p.source_rows},
       {"rows", p.data.rows()},
       {"source_columns", schema.columns.size() - 1},
       {"encoded_columns", p.data.x.cols()},
       {"classes", p.data.n_classes},
       {"train", p.split.train.size()},
       {"validation", p.split.validation.size()},
       {"test", p.split.test.size()},
       {"cache", rc.cache_dir.string()}});
  return 0;
}

int cmd_train(const cli::RunConfig& rc) {
  const auto p = load_cache(rc);
  for (auto design : rc.spec.designs) {
    for (auto seed : rc.spec.seeds) {
      auto log = open_out(rc.log_dir / ("train_" + tag(design, seed) + ".jsonl"));
      const ojson ctx = {{"design", protocol::to_string(design)}, {"seed", seed}};
      auto model = eval::make_model(rc.spec, p, design, seed);
      const auto res = eval::train_model(*model, rc.spec, seed, {}, epoch_logger(log, ctx));
      const auto dir = run_dir(rc, design, seed);
      model->save_checkpoints(dir);
      ojson summary = {{"event", "trained"}};
      summary.update(ctx);
      summary["pretrain_epochs"] = res.pretrain_epochs;
      summary["finetune_epochs"] = res.finetune_epochs;
      summary["runtime_s"] = res.runtime_s;
      summary["bytes_sent"] = res.bytes.sent;
      summary["bytes_received"] = res.bytes.received;
      write_json(dir / "train_summary.json", summary);
      summary["checkpoints"] = dir.string();
      say(summary);
    }
  }
  return 0;
}

int cmd_evaluate(const cli::RunConfig& rc) {
  const auto p = load_cache(rc);
  std::vector<eval::MetricsRow> rows;
  for (auto design : rc.spec.designs) {
    for (auto seed : rc.spec.seeds) {
      const auto dir = run_dir(rc, design, seed);
      const auto summary = read_json(dir / "train_summary.json");
      auto model = eval::make_model(rc.spec, p, design, seed);
      model->begin_phase(protocol::Phase::Finetune);
      model->load_checkpoints(dir);
      eval::MetricsRow base;
      base.design = protocol::to_string(design);
      base.dataset = rc.spec.dataset;
      base.seed = seed;
      base.runtime_s = summary.value("runtime_s", 0.0);
      base.bytes_sent = summary.value("bytes_sent", std::uint64_t{0});
      base.bytes_received = summary.value("bytes_received", std::uint64_t{0});
      std::vector<std::string> warnings;
      auto r = eval::evaluate_latents(model->extract_latents(), p.data.y, p.data.n_classes, seed, rc.spec.probes,
                                      base, &warnings);
      for (const auto& w : warnings) say({{"event", "warning"}, {"run", tag(design, seed)}, {"message", w}});
      say({{"event", "evaluated"}, {"design", base.design}, {"seed", seed}, {"f1", r.back().f1}});
      rows.insert(rows.end(), r.begin(), r.end());
    }
  }
  write_reports(rc, rows, rc.report_dir / "metrics");
  write_json(rc.report_dir / "config.json", rc.resolved());
  return 0;
}

std::string p_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

int cmd_failures(const cli::RunConfig& rc) {
  const auto p = load_cache(rc);
  auto log = open_out(rc.log_dir / "failures.jsonl");
  const auto ex = eval::run_failure_experiment(rc.spec, p, epoch_logger(log, {{"design", protocol::to_string(rc.spec.designs.front())}}));
  const auto dir = rc.report_dir / "failures";
  std::map<std::string, std::vector<eval::MetricsRow>> groups;
  for (const auto& c : ex.cells) {
    const std::string name = c.strategy == protocol::Strategy::None
                                 ? "baseline"
                                 : protocol::to_string(c.strategy) + "_p" + p_label(c.p_fail);
    auto& g = groups[name];
    g.insert(g.end(), c.rows.begin(), c.rows.end());
  }
  for (const auto& [name, rows] : groups) write_reports(rc, rows, dir / name);
  {
    auto f = open_out(dir / "summary.csv");
    eval::write_failure_summary(f, ex.summary);
  }
  write_json(dir / "config.json", rc.resolved());
  for (const auto& s : ex.summary) {
    say({{"event", "failure_cell"},
         {"strategy", s.strategy == protocol::Strategy::None ? "baseline" : protocol::to_string(s.strategy)},
         {"p_fail", s.p_fail},
         {"runs", s.runs},
         {"f1_mean", s.f1_mean},
         {"f1_std", s.f1_std}});
  }
  return 0;
}

int cmd_sweep(const cli::RunConfig& rc) {
  const auto p = load_cache(rc);
  auto log = open_out(rc.log_dir / "sweep.jsonl");
  const auto points = eval::run_latent_sweep(rc.spec, p, epoch_logger(log, ojson::object()));
  std::vector<eval::MetricsRow> rows;
  for (const auto& pt : points) {
    rows.insert(rows.end(), pt.rows.begin(), pt.rows.end());
    say({{"event", "sweep_point"},
         {"design", protocol::to_string(pt.design)},
         {"latent_dim", pt.latent_dim},
         {"f1_mean", pt.f1_mean}});
  }
  const auto dir = rc.report_dir / "sweep";
  write_reports(rc, rows, dir / "metrics");
  {
    auto f = open_out(dir / "summary.csv");
    eval::write_sweep_summary(f, points);
  }
  write_json(dir / "config.json", rc.resolved());
  return 0;
}

int fail(int code, const char* kind, const std::string& message) {
  emit(std::cerr, {{"event", "error"}, {"kind", kind}, {"message", message}});
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertical federated TabNet: training and latent evaluation"};
  app.require_subcommand(1);
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const cli::RunConfig&);
  };
  const Command commands[] = {
      {"prepare", "Load the CSV, split, fit transforms and write the prepared cache", cmd_prepare},
      {"train", "Pretrain and finetune every configured design and seed, writing checkpoints", cmd_train},
      {"evaluate", "Extract latents from checkpoints and score the downstream probes", cmd_evaluate},
      {"failures", "Run the client-failure grid (baseline plus strategies x probabilities)", cmd_failures},
      {"sweep", "Run the latent-dimension sweep", cmd_sweep},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config, "JSON run configuration")->required();
    sub->add_option("--seed", seed, "Run with this single seed instead of the configured list");
    sub->add_option("--out", out, "Output directory (overrides output_dir)");
  }

  // Writes the synthetic cross-partition dataset and its schema.
  auto* synth = app.add_subcommand("synth", "Write the synthetic cross-partition CSV and schema");
  std::size_t synth_rows = 4000, synth_features = 20;
  std::uint64_t synth_seed = 7;
  std::string synth_dir;
  synth->add_option("--rows", synth_rows)->capture_default_str();
  synth->add_option("--features", synth_features)->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--out", synth_dir, "Directory for data.csv and schema.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(synth)) {
      const fs::path dir(synth_dir);
      fs::create_directories(dir);
      data::save_csv(dir / "data.csv", data::synthetic_cross_partition(synth_rows, synth_features, synth_seed));
      auto f = open_out(dir / "schema.json");
      f << data::schema_json(data::synthetic_schema(synth_features));
      say({{"event", "synthesized"}, {"rows", synth_rows}, {"features", synth_features}, {"dir", dir.string()}});
      return 0;
    }
    cli::Overrides ov;
    ov.seed = seed;
    if (out) ov.out = fs::path(*out);
    const auto rc = cli::load_run_config(config, ov);
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) return c.run(rc);
    }
    return 1;
  } catch (const ConfigError& e) {
    return fail(1, "config", e.what());
  } catch (const DataError& e) {
    return fail(2, "data", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(2, "data", e.what());
  } catch (const std::exception& e) {
    return fail(3, "training", e.what());
  }
}
