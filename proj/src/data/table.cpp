#include "tabvfl/data/table.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tabvfl/errors.hpp"

namespace tabvfl::data {

ColumnKind parse_kind(const std::string& s) {
  if (s == "numerical") return ColumnKind::Numerical;
  if (s == "categorical") return ColumnKind::Categorical;
  if (s == "binary") return ColumnKind::Binary;
  if (s == "label") return ColumnKind::Label;
  throw DataError("unknown column kind '" + s + "'");
}

std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::Numerical: return "numerical";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Binary: return "binary";
    case ColumnKind::Label: return "label";
  }
  return "?";
}

std::size_t DatasetSchema::label_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].kind == ColumnKind::Label) return i;
  throw DataError("schema has no label column");
}

DatasetSchema parse_schema(const std::string& json_text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("schema is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.empty()) throw DataError("schema must be a non-empty object of column -> kind");
  DatasetSchema s;
  std::size_t labels = 0;
  for (const auto& [name, kind] : j.items()) {
    if (!kind.is_string()) throw DataError("schema kind for '" + name + "' must be a string");
    s.columns.push_back({name, parse_kind(kind.get<std::string>())});
    labels += s.columns.back().kind == ColumnKind::Label;
  }
  if (labels != 1) throw DataError("schema needs exactly one label column, found " + std::to_string(labels));
  if (s.columns.size() < 2) throw DataError("schema has no feature columns");
  return s;
}

DatasetSchema load_schema(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_schema(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string schema_json(const DatasetSchema& schema) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& c : schema.columns) j[c.name] = to_string(c.kind);
  return j.dump(2) + "\n";
}

const RawColumn& RawTable::label() const {
  for (const auto& c : columns)
    if (c.kind == ColumnKind::Label) return c;
  throw DataError("table has no label column");
}

RawTable RawTable::take_rows(std::span<const std::size_t> idx) const {
  RawTable out;
  out.rows = idx.size();
  for (const auto& c : columns) {
    RawColumn n{c.name, c.kind, {}, {}};
    for (std::size_t i : idx) {
      if (i >= rows) throw DataError("row index out of range");
      if (c.kind == ColumnKind::Numerical) {
        n.numbers.push_back(c.numbers[i]);
      } else {
        n.tokens.push_back(c.tokens[i]);
      }
    }
    out.columns.push_back(std::move(n));
  }
  return out;
}

namespace {

// One record per line; double quotes group and "" escapes a quote. Quoted
// fields may not span lines.
std::vector<std::string> split_record(const std::string& line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError(where + ": unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

bool parse_number(const std::string& s, double& v) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [p, ec] = std::from_chars(first, last, v);
  return ec == std::errc() && p == last && std::isfinite(v);
}

}  // namespace

RawTable read_csv(std::istream& in, const DatasetSchema& schema, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line()) throw DataError(source + ": empty file");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  auto header = split_record(line, source + ":1");
  for (auto& h : header) h = trim(h);

  std::map<std::string, ColumnKind> kinds;
  for (const auto& c : schema.columns) kinds[c.name] = c.kind;
  RawTable t;
  std::set<std::string> seen;
  for (const auto& h : header) {
    auto it = kinds.find(h);
    if (it == kinds.end()) throw DataError(source + ": header column '" + h + "' is not in the schema");
    if (!seen.insert(h).second) throw DataError(source + ": duplicate header column '" + h + "'");
    t.columns.push_back({h, it->second, {}, {}});
  }
  for (const auto& c : schema.columns) {
    if (!seen.count(c.name)) throw DataError(source + ": schema column '" + c.name + "' missing from header");
  }

  while (next_line()) {
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    auto fields = split_record(line, where);
    if (fields.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      RawColumn& col = t.columns[j];
      std::string v = trim(fields[j]);
      if (v.empty()) throw DataError(where + ", column '" + col.name + "': missing value");
      if (col.kind == ColumnKind::Numerical) {
        double x = 0.0;
        if (!parse_number(v, x)) {
          throw DataError(where + ", column '" + col.name + "': '" + v + "' is not a number");
        }
        col.numbers.push_back(x);
      } else {
        col.tokens.push_back(std::move(v));
      }
    }
    ++t.rows;
  }
  return t;
}

RawTable load_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  return read_csv(f, schema, path.string());
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_csv(std::ostream& out, const RawTable& table) {
  for (std::size_t j = 0; j < table.columns.size(); ++j) out << (j ? "," : "") << quote(table.columns[j].name);
  out << "\n";
  char buf[40];
  for (std::size_t i = 0; i < table.rows; ++i) {
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      const RawColumn& c = table.columns[j];
      if (j) out << ",";
      if (c.kind == ColumnKind::Numerical) {
        std::snprintf(buf, sizeof buf, "%.17g", c.numbers[i]);
        out << buf;
      } else {
        out << quote(c.tokens[i]);
      }
    }
    out << "\n";
  }
}

void save_csv(const std::filesystem::path& path, const RawTable& table) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  write_csv(f, table);
}

}  // namespace tabvfl::data
