#include "tabvfl/eval/report.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tabvfl/errors.hpp"

namespace tabvfl::eval {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

template <class T>
T parse_field(const std::string& s, const char* what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw DataError(std::string("report: bad ") + what + " '" + s + "'");
  return v;
}

}  // namespace

void write_report(std::ostream& out, const std::vector<MetricsRow>& rows, ReportFormat format) {
  if (format == ReportFormat::Csv) {
    out << kReportHeader << "\n";
    for (const auto& r : rows) {
      out << csv_field(r.design) << ',' << csv_field(r.dataset) << ',' << r.seed << ',' << csv_field(r.probe) << ','
          << format_real(r.accuracy) << ',' << format_real(r.f1) << ',' << format_real(r.roc_auc) << ','
          << format_real(r.runtime_s) << ',' << r.bytes_sent << ',' << r.bytes_received << "\n";
    }
    return;
  }
  // Hand-written so every real carries exactly 17 significant digits.
  auto str = [](const std::string& s) { return nlohmann::json(s).dump(); };
  out << "[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << (i ? ",\n " : "\n ") << "{\"design\": " << str(r.design) << ", \"dataset\": " << str(r.dataset)
        << ", \"seed\": " << r.seed << ", \"probe\": " << str(r.probe) << ", \"accuracy\": " << format_real(r.accuracy)
        << ", \"f1\": " << format_real(r.f1) << ", \"roc_auc\": " << format_real(r.roc_auc)
        << ", \"runtime_s\": " << format_real(r.runtime_s) << ", \"bytes_sent\": " << r.bytes_sent
        << ", \"bytes_received\": " << r.bytes_received << "}";
  }
  out << (rows.empty() ? "]\n" : "\n]\n");
}

void emit_report(const std::vector<MetricsRow>& rows, const std::filesystem::path& path, ReportFormat format) {
  if (rows.empty()) throw DataError("refusing to write an empty report");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write report " + path.string());
  write_report(f, rows, format);
  if (!f) throw DataError("failed writing report " + path.string());
}

std::vector<MetricsRow> parse_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw DataError("report: unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 10) throw DataError("report: expected 10 fields, got " + std::to_string(f.size()));
    MetricsRow r;
    r.design = f[0];
    r.dataset = f[1];
    r.seed = parse_field<std::uint64_t>(f[2], "seed");
    r.probe = f[3];
    r.accuracy = parse_field<double>(f[4], "accuracy");
    r.f1 = parse_field<double>(f[5], "f1");
    r.roc_auc = parse_field<double>(f[6], "roc_auc");
    r.runtime_s = parse_field<double>(f[7], "runtime_s");
    r.bytes_sent = parse_field<std::uint64_t>(f[8], "bytes_sent");
    r.bytes_received = parse_field<std::uint64_t>(f[9], "bytes_received");
    rows.push_back(std::move(r));
  }
  return rows;
}

MetricsRow mean_row(const std::vector<MetricsRow>& probe_rows) {
  if (probe_rows.empty()) throw DataError("no probe rows to average");
  MetricsRow m = probe_rows.front();
  m.probe = "mean";
  m.accuracy = m.f1 = m.roc_auc = 0.0;
  for (const auto& r : probe_rows) {
    m.accuracy += r.accuracy;
    m.f1 += r.f1;
    m.roc_auc += r.roc_auc;
  }
  const double n = static_cast<double>(probe_rows.size());
  m.accuracy /= n;
  m.f1 /= n;
  m.roc_auc /= n;
  return m;
}

}  // namespace tabvfl::eval
