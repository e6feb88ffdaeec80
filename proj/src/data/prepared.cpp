#include "tabvfl/data/prepared.hpp"

#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "tabvfl/errors.hpp"
#include "tabvfl/nn/checkpoint.hpp"
#include "tabvfl/nn/parameter.hpp"

namespace tabvfl::data {

Prepared prepare_dataset(const RawTable& raw, const PrepareOptions& options) {
  if (raw.rows == 0) throw DataError("dataset has no rows");
  Prepared p;
  p.options = options;
  p.source_rows = raw.rows;

  RawTable table = raw;
  if (options.target_rows > 0 && options.target_rows != raw.rows) {
    const auto& lab = raw.label().tokens;
    std::set<std::string> uniq(lab.begin(), lab.end());
    std::map<std::string, int> code;
    for (const auto& s : uniq) code.emplace(s, static_cast<int>(code.size()));
    std::vector<int> y;
    for (const auto& s : lab) y.push_back(code[s]);
    std::mt19937_64 rng(nn::derive_seed(options.seed, "downsample"));
    const auto keep = stratified_indices(y, code.size(), options.target_rows, rng);
    table = raw.take_rows(keep);
  }

  std::mt19937_64 rng(nn::derive_seed(options.seed, "split"));
  p.split = split_indices(table.rows, options.ratios, rng);
  p.transform = fit_transform(table.take_rows(p.split.train));
  p.data = apply_transform(p.transform, table);
  return p;
}

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kMatrices = "prepared.bin";

}  // namespace

void save_prepared(const Prepared& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t n = p.data.rows();
  nn::Matrix labels(n, 1), split(n, 1);
  for (std::size_t i = 0; i < n; ++i) labels(i, 0) = p.data.y[i];
  for (std::size_t i : p.split.validation) split(i, 0) = 1;
  for (std::size_t i : p.split.test) split(i, 0) = 2;
  const std::vector<nn::NamedMatrix> tensors{{"features", p.data.x}, {"labels", labels}, {"split", split}};
  nn::save_checkpoint(dir / kMatrices, tensors);

  nlohmann::ordered_json j;
  j["format"] = "tabvfl-prepared";
  j["version"] = 1;
  j["rows"] = n;
  j["source_rows"] = p.source_rows;
  j["encoded_width"] = p.data.x.cols();
  j["n_classes"] = p.data.n_classes;
  j["seed"] = p.options.seed;
  j["target_rows"] = p.options.target_rows;
  j["ratios"] = p.options.ratios;
  j["split_sizes"] = {p.split.train.size(), p.split.validation.size(), p.split.test.size()};
  j["block_widths"] = p.data.block_widths;
  j["feature_names"] = p.transform.encoded_names();
  j["transform"] = p.transform.to_json();
  std::ofstream f(dir / kManifest, std::ios::binary);
  if (!f) throw DataError("cannot write " + (dir / kManifest).string());
  f << j.dump(2) << "\n";
}

Prepared load_prepared(const std::filesystem::path& dir) {
  std::ifstream f(dir / kManifest);
  if (!f) throw DataError("no prepared dataset in " + dir.string() + " (missing " + kManifest + ")");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / kManifest).string() + ": " + e.what());
  }
  Prepared p;
  try {
    if (j.at("format") != "tabvfl-prepared" || j.at("version") != 1) throw DataError("unknown manifest format");
    p.transform = Transform::from_json(j.at("transform"));
    p.source_rows = j.at("source_rows").get<std::size_t>();
    p.options.seed = j.at("seed").get<std::uint64_t>();
    p.options.target_rows = j.at("target_rows").get<std::size_t>();
    p.options.ratios = j.at("ratios").get<std::array<double, 3>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / kManifest).string() + ": " + e.what());
  }
  std::map<std::string, nn::Matrix> t;
  for (auto& m : nn::load_checkpoint(dir / kMatrices)) t[m.id] = std::move(m.value);
  if (!t.count("features") || !t.count("labels") || !t.count("split")) {
    throw DataError((dir / kMatrices).string() + ": missing tensors");
  }
  p.data.x = std::move(t["features"]);
  p.data.n_classes = p.transform.classes.size();
  p.data.block_widths = p.transform.block_widths();
  const std::size_t n = p.data.x.rows();
  if (t["labels"].rows() != n || t["split"].rows() != n || p.data.x.cols() != p.transform.encoded_width()) {
    throw DataError((dir / kMatrices).string() + ": shapes disagree with the manifest");
  }
  for (std::size_t i = 0; i < n; ++i) {
    p.data.y.push_back(static_cast<int>(t["labels"](i, 0)));
    const double s = t["split"](i, 0);
    (s == 0 ? p.split.train : s == 1 ? p.split.validation : p.split.test).push_back(i);
  }
  return p;
}

RawTable synthetic_cross_partition(std::size_t rows, std::size_t features, std::uint64_t seed) {
  if (features < 12) throw ConfigError("the cross-partition fixture needs at least 12 features");
  std::mt19937_64 rng(nn::derive_seed(seed, "synthetic"));
  std::normal_distribution<double> normal(0.0, 1.0);
  RawTable t;
  t.rows = rows;
  for (std::size_t j = 0; j < features; ++j) t.columns.push_back({"x" + std::to_string(j + 1), ColumnKind::Numerical, {}, {}});
  RawColumn label{"y", ColumnKind::Label, {}, {}};
  for (std::size_t i = 0; i < rows; ++i) {
    for (auto& c : t.columns) c.numbers.push_back(normal(rng));
    const auto& c = t.columns;
    const double s = c[0].numbers[i] * c[10].numbers[i] + c[1].numbers[i] * c[11].numbers[i];
    label.tokens.push_back(s > 0 ? "1" : "0");
  }
  t.columns.push_back(std::move(label));
  return t;
}

DatasetSchema synthetic_schema(std::size_t features) {
  DatasetSchema s;
  for (std::size_t j = 0; j < features; ++j) s.columns.push_back({"x" + std::to_string(j + 1), ColumnKind::Numerical});
  s.columns.push_back({"y", ColumnKind::Label});
  return s;
}

}  // namespace tabvfl::data
