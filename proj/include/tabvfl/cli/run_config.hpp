#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "tabvfl/data/prepared.hpp"
#include "tabvfl/eval/experiment.hpp"

namespace tabvfl::cli {

enum class ReportFormats { Csv, Json, Both };

// A JSON config file. Every key is optional except dataset.csv and
// dataset.schema; unknown keys are errors. Relative input paths resolve
// against the config file's directory, relative output paths against
// output_dir.
struct RunConfig {
  std::filesystem::path csv;
  std::filesystem::path schema;
  data::PrepareOptions prepare;  // seed: data_seed
  eval::ExperimentSpec spec;

  std::filesystem::path output_dir;
  std::filesystem::path cache_dir;       // prepared dataset
  std::filesystem::path checkpoint_dir;
  std::filesystem::path report_dir;
  std::filesystem::path log_dir;
  ReportFormats formats = ReportFormats::Csv;

  // Every field, defaults filled in.
  nlohmann::ordered_json resolved() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};

// Throws ConfigError (including for a missing or unreadable config file).
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                           const Overrides& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides = {});

}  // namespace tabvfl::cli
