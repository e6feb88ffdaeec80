#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tabvfl::eval {

struct MetricsRow {
  std::string design;
  std::string dataset;
  std::uint64_t seed = 0;
  std::string probe;
  double accuracy = 0.0;
  double f1 = 0.0;
  double roc_auc = 0.0;
  double runtime_s = 0.0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

enum class ReportFormat { Csv, Json };

inline constexpr const char* kReportHeader =
    "design,dataset,seed,probe,accuracy,f1,roc_auc,runtime_s,bytes_sent,bytes_received";

// Reals print with 17 significant digits, so parsing gives back the same bits.
std::string format_real(double v);

void write_report(std::ostream& out, const std::vector<MetricsRow>& rows, ReportFormat format);
void emit_report(const std::vector<MetricsRow>& rows, const std::filesystem::path& path, ReportFormat format);
std::vector<MetricsRow> parse_report_csv(std::istream& in);

// The mean over probe rows of one (design, dataset, seed), probe = "mean".
MetricsRow mean_row(const std::vector<MetricsRow>& probe_rows);

}  // namespace tabvfl::eval
