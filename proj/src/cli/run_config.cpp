#include "tabvfl/cli/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "tabvfl/errors.hpp"

namespace tabvfl::cli {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object and complains about whatever is left.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(label() + "must be an object");
  }

  const json* take(const std::string& key) {
    taken_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!taken_.count(it.key())) throw ConfigError("unknown config key '" + path(it.key()) + "'");
    }
  }

  template <class T>
  void count(const std::string& key, T& out, std::uint64_t min = 0) {
    if (const json* v = take(key)) out = static_cast<T>(as_count(*v, path(key), min));
  }

  void real(const std::string& key, double& out, double lo, double hi) {
    if (const json* v = take(key)) out = as_real(*v, path(key), lo, hi);
  }

  void text(const std::string& key, std::string& out) {
    if (const json* v = take(key)) out = as_text(*v, path(key));
  }

  static std::uint64_t as_count(const json& v, const std::string& what, std::uint64_t min) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(what + ": expected a non-negative integer");
    const auto n = v.get<std::uint64_t>();
    if (n < min) throw ConfigError(what + ": must be at least " + std::to_string(min));
    return n;
  }

  static double as_real(const json& v, const std::string& what, double lo, double hi) {
    if (!v.is_number()) throw ConfigError(what + ": expected a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) {
      throw ConfigError(what + ": " + eval::format_real(x) + " outside [" + eval::format_real(lo) + ", " +
                        eval::format_real(hi) + "]");
    }
    return x;
  }

  static std::string as_text(const json& v, const std::string& what) {
    if (!v.is_string()) throw ConfigError(what + ": expected a string");
    return v.get<std::string>();
  }

  static const json& as_array(const json& v, const std::string& what) {
    if (!v.is_array()) throw ConfigError(what + ": expected an array");
    return v;
  }

 private:
  std::string label() const { return where_.empty() ? "config " : "'" + where_ + "' "; }

  const json& j_;
  std::string where_;
  std::set<std::string> taken_;
};

// Domain parse errors are ConfigErrors here, whatever the parser threw.
template <class F>
auto config_value(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

protocol::TransportKind parse_transport(const std::string& s) {
  if (s == "in_process") return protocol::TransportKind::InProcess;
  if (s == "socket") return protocol::TransportKind::Socket;
  throw ConfigError("unknown transport '" + s + "' (in_process, socket)");
}

std::string transport_name(protocol::TransportKind k) {
  return k == protocol::TransportKind::Socket ? "socket" : "in_process";
}

ReportFormats parse_formats(const std::string& s) {
  if (s == "csv") return ReportFormats::Csv;
  if (s == "json") return ReportFormats::Json;
  if (s == "both") return ReportFormats::Both;
  throw ConfigError("unknown report_format '" + s + "' (csv, json, both)");
}

std::string formats_name(ReportFormats f) {
  switch (f) {
    case ReportFormats::Csv: return "csv";
    case ReportFormats::Json: return "json";
    case ReportFormats::Both: return "both";
  }
  return "?";
}

std::filesystem::path anchored(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.is_absolute() || base.empty()) return p.lexically_normal();
  return (base / p).lexically_normal();
}

void parse_tabnet(Section s, tabnet::TabNetConfig& c) {
  s.count("latent_dim", c.latent_dim, 1);
  s.count("n_steps", c.n_steps, 1);
  s.real("gamma_relax", c.gamma_relax, 1.0, 1e6);
  s.real("eps_mask", c.eps_mask, 0.0, 1.0);
  s.real("lambda_sparse", c.lambda_sparse, 0.0, 1e6);
  s.count("n_shared", c.n_shared);
  s.count("n_independent", c.n_independent);
  s.count("dec_n_shared", c.dec_n_shared);
  s.count("dec_n_independent", c.dec_n_independent);
  s.real("p_mask", c.p_mask, 0.0, 1.0);
  s.real("bn_momentum", c.bn_momentum, 0.0, 1.0);
  s.real("bn_eps", c.bn_eps, 0.0, 1.0);
  s.finish();
}

}  // namespace

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir, const Overrides& overrides) {
  RunConfig rc;
  auto& spec = rc.spec;
  Section top(j, "");

  const json* ds = top.take("dataset");
  if (!ds) throw ConfigError("config needs a 'dataset' section");
  {
    Section s(*ds, "dataset");
    std::string csv, schema;
    s.text("name", spec.dataset);
    s.text("csv", csv);
    s.text("schema", schema);
    if (csv.empty()) throw ConfigError("dataset.csv is required");
    if (schema.empty()) throw ConfigError("dataset.schema is required");
    rc.csv = anchored(base_dir, csv);
    rc.schema = anchored(base_dir, schema);
    s.count("target_rows", rc.prepare.target_rows);
    s.count("seed", rc.prepare.seed);
    if (const json* v = s.take("split")) {
      const auto& a = Section::as_array(*v, "dataset.split");
      if (a.size() != 3) throw ConfigError("dataset.split: expected three ratios (train, validation, test)");
      double sum = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        rc.prepare.ratios[i] = Section::as_real(a[i], "dataset.split", 0.0, 1.0);
        if (rc.prepare.ratios[i] <= 0.0) throw ConfigError("dataset.split: ratios must be positive");
        sum += rc.prepare.ratios[i];
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("dataset.split: ratios must sum to 1");
    }
    s.finish();
  }

  if (const json* v = top.take("designs")) {
    spec.designs.clear();
    auto add = [&](const json& d) {
      const auto name = Section::as_text(d, "designs");
      spec.designs.push_back(config_value("designs", [&] { return protocol::parse_design(name); }));
    };
    if (v->is_array()) {
      for (const auto& d : *v) add(d);
    } else {
      add(*v);
    }
  }

  if (const json* v = top.take("tabnet")) parse_tabnet(Section(*v, "tabnet"), spec.tabnet);

  if (const json* v = top.take("training")) {
    Section s(*v, "training");
    s.count("pretrain_epochs", spec.pretrain_epochs);
    s.count("finetune_epochs", spec.finetune_epochs, 1);
    s.count("batch_size", spec.batch_size, 2);
    s.count("guests", spec.guests, 1);
    s.count("patience", spec.patience);
    s.real("learning_rate", spec.adam.lr, 0.0, 10.0);
    std::string transport = transport_name(spec.transport), layout = eval::to_string(spec.ct_layout);
    s.text("transport", transport);
    spec.transport = parse_transport(transport);
    s.text("ct_layout", layout);
    spec.ct_layout = eval::parse_ct_layout(layout);
    std::uint64_t timeout_ms = 0;
    s.count("timeout_ms", timeout_ms);
    if (const json* r = s.take("record_runtime")) {
      if (!r->is_boolean()) throw ConfigError("training.record_runtime: expected true or false");
      spec.record_runtime = r->get<bool>();
    }
    spec.timeout = std::chrono::milliseconds(timeout_ms);
    s.finish();
  }

  if (const json* v = top.take("failures")) {
    Section s(*v, "failures");
    if (const json* g = s.take("p_grid")) {
      spec.failures.p_grid.clear();
      for (const auto& p : Section::as_array(*g, "failures.p_grid"))
        spec.failures.p_grid.push_back(Section::as_real(p, "failures.p_grid", 0.0, 1.0));
    }
    if (const json* g = s.take("strategies")) {
      spec.failures.strategies.clear();
      for (const auto& p : Section::as_array(*g, "failures.strategies")) {
        const auto name = Section::as_text(p, "failures.strategies");
        const auto st = config_value("failures.strategies", [&] { return protocol::parse_strategy(name); });
        if (st == protocol::Strategy::None) throw ConfigError("failures.strategies: use cache or zeros");
        spec.failures.strategies.push_back(st);
      }
    }
    s.count("runs", spec.failures.runs, 1);
    s.finish();
  }

  if (const json* v = top.take("probes")) {
    Section s(*v, "probes");
    auto& p = spec.probes;
    s.count("logistic_max_iter", p.logistic_max_iter, 1);
    s.real("logistic_tol", p.logistic_tol, 0.0, 1.0);
    s.real("logistic_l2", p.logistic_l2, 0.0, 1e6);
    s.count("mlp_hidden", p.mlp_hidden, 1);
    s.count("mlp_epochs", p.mlp_epochs, 1);
    s.count("mlp_batch", p.mlp_batch, 1);
    s.real("mlp_lr", p.mlp_lr, 0.0, 10.0);
    s.finish();
  }

  if (const json* v = top.take("seeds")) {
    spec.seeds.clear();
    for (const auto& x : Section::as_array(*v, "seeds")) spec.seeds.push_back(Section::as_count(x, "seeds", 0));
  }
  if (const json* v = top.take("latent_sweep")) {
    spec.latent_sweep.clear();
    for (const auto& x : Section::as_array(*v, "latent_sweep"))
      spec.latent_sweep.push_back(Section::as_count(x, "latent_sweep", 1));
  }

  std::string out = "out", cache = "prepared", ckpt = "checkpoints", reports = "reports", logs = "logs",
              formats = "csv";
  top.text("output_dir", out);
  top.text("cache_dir", cache);
  top.text("checkpoint_dir", ckpt);
  top.text("report_dir", reports);
  top.text("log_dir", logs);
  top.text("report_format", formats);
  rc.formats = parse_formats(formats);
  top.finish();

  if (overrides.seed) spec.seeds = {*overrides.seed};
  rc.output_dir = overrides.out ? overrides.out->lexically_normal() : anchored(base_dir, out);
  rc.cache_dir = anchored(rc.output_dir, cache);
  rc.checkpoint_dir = anchored(rc.output_dir, ckpt);
  rc.report_dir = anchored(rc.output_dir, reports);
  rc.log_dir = anchored(rc.output_dir, logs);

  spec.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": not valid JSON: " + e.what());
  }
  try {
    return parse_run_config(j, path.parent_path(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::ordered_json RunConfig::resolved() const {
  nlohmann::ordered_json j;
  j["dataset"] = {{"name", spec.dataset},
                  {"csv", csv.string()},
                  {"schema", schema.string()},
                  {"target_rows", prepare.target_rows},
                  {"seed", prepare.seed},
                  {"split", prepare.ratios}};
  auto designs = nlohmann::ordered_json::array();
  for (auto d : spec.designs) designs.push_back(protocol::to_string(d));
  j["designs"] = designs;
  const auto& t = spec.tabnet;
  j["tabnet"] = {{"latent_dim", t.latent_dim},       {"n_steps", t.n_steps},
                 {"gamma_relax", t.gamma_relax},     {"eps_mask", t.eps_mask},
                 {"lambda_sparse", t.lambda_sparse}, {"n_shared", t.n_shared},
                 {"n_independent", t.n_independent}, {"dec_n_shared", t.dec_n_shared},
                 {"dec_n_independent", t.dec_n_independent}, {"p_mask", t.p_mask},
                 {"bn_momentum", t.bn_momentum},     {"bn_eps", t.bn_eps}};
  j["training"] = {{"pretrain_epochs", spec.pretrain_epochs},
                   {"finetune_epochs", spec.finetune_epochs},
                   {"batch_size", spec.batch_size},
                   {"guests", spec.guests},
                   {"patience", spec.patience},
                   {"learning_rate", spec.adam.lr},
                   {"transport", transport_name(spec.transport)},
                   {"timeout_ms", spec.timeout.count()},
                   {"ct_layout", eval::to_string(spec.ct_layout)},
                   {"record_runtime", spec.record_runtime}};
  auto strategies = nlohmann::ordered_json::array();
  for (auto s : spec.failures.strategies) strategies.push_back(protocol::to_string(s));
  j["failures"] = {{"p_grid", spec.failures.p_grid}, {"strategies", strategies}, {"runs", spec.failures.runs}};
  const auto& p = spec.probes;
  j["probes"] = {{"logistic_max_iter", p.logistic_max_iter}, {"logistic_tol", p.logistic_tol},
                 {"logistic_l2", p.logistic_l2},             {"mlp_hidden", p.mlp_hidden},
                 {"mlp_epochs", p.mlp_epochs},               {"mlp_batch", p.mlp_batch},
                 {"mlp_lr", p.mlp_lr}};
  j["seeds"] = spec.seeds;
  j["latent_sweep"] = spec.latent_sweep;
  j["output_dir"] = output_dir.string();
  j["cache_dir"] = cache_dir.string();
  j["checkpoint_dir"] = checkpoint_dir.string();
  j["report_dir"] = report_dir.string();
  j["log_dir"] = log_dir.string();
  j["report_format"] = formats_name(formats);
  return j;
}

}  // namespace tabvfl::cli
