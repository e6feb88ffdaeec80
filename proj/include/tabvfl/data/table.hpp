#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tabvfl::data {

enum class ColumnKind { Numerical, Categorical, Binary, Label };

ColumnKind parse_kind(const std::string& s);
std::string to_string(ColumnKind k);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numerical;
};

// Column name -> kind, in file order. Exactly one label column.
struct DatasetSchema {
  std::vector<ColumnSpec> columns;

  std::size_t label_index() const;
  std::size_t n_features() const { return columns.size() - 1; }
};

DatasetSchema parse_schema(const std::string& json_text);
DatasetSchema load_schema(const std::filesystem::path& path);
std::string schema_json(const DatasetSchema& schema);

// Numerical columns are parsed on load; everything else stays textual.
struct RawColumn {
  std::string name;
  ColumnKind kind = ColumnKind::Numerical;
  std::vector<double> numbers;
  std::vector<std::string> tokens;
};

struct RawTable {
  std::vector<RawColumn> columns;
  std::size_t rows = 0;

  const RawColumn& label() const;
  RawTable take_rows(std::span<const std::size_t> idx) const;
};

// Header must name exactly the schema's columns (any order). Empty fields are
// rejected: datasets are taken to be complete.
RawTable read_csv(std::istream& in, const DatasetSchema& schema, const std::string& source = "<csv>");
RawTable load_csv(const std::filesystem::path& path, const DatasetSchema& schema);

void write_csv(std::ostream& out, const RawTable& table);
void save_csv(const std::filesystem::path& path, const RawTable& table);

}  // namespace tabvfl::data
