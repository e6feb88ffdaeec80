#include "tabvfl/data/preprocess.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "tabvfl/errors.hpp"

namespace tabvfl::data {

std::size_t Transform::encoded_width() const {
  std::size_t w = 0;
  for (const auto& f : features) w += f.width();
  return w;
}

std::vector<std::size_t> Transform::block_widths() const {
  std::vector<std::size_t> out;
  for (const auto& f : features) out.push_back(f.width());
  return out;
}

std::vector<std::string> Transform::encoded_names() const {
  std::vector<std::string> out;
  for (const auto& f : features) {
    if (f.kind == ColumnKind::Categorical) {
      for (const auto& v : f.vocabulary) out.push_back(f.name + "=" + v);
    } else {
      out.push_back(f.name);
    }
  }
  return out;
}

nlohmann::ordered_json Transform::to_json() const {
  nlohmann::ordered_json cols = nlohmann::ordered_json::array();
  for (const auto& f : features) {
    nlohmann::ordered_json c;
    c["name"] = f.name;
    c["kind"] = to_string(f.kind);
    if (f.kind == ColumnKind::Numerical) {
      c["mean"] = f.mean;
      c["scale"] = f.scale;
    } else {
      c["vocabulary"] = f.vocabulary;
    }
    cols.push_back(std::move(c));
  }
  nlohmann::ordered_json j;
  j["features"] = std::move(cols);
  j["label"] = label_name;
  j["classes"] = classes;
  return j;
}

Transform Transform::from_json(const nlohmann::ordered_json& j) {
  Transform t;
  try {
    for (const auto& c : j.at("features")) {
      ColumnTransform f;
      f.name = c.at("name").get<std::string>();
      f.kind = parse_kind(c.at("kind").get<std::string>());
      if (f.kind == ColumnKind::Numerical) {
        f.mean = c.at("mean").get<double>();
        f.scale = c.at("scale").get<double>();
      } else {
        f.vocabulary = c.at("vocabulary").get<std::vector<std::string>>();
      }
      t.features.push_back(std::move(f));
    }
    t.label_name = j.at("label").get<std::string>();
    t.classes = j.at("classes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad transform manifest: ") + e.what());
  }
  return t;
}

PreparedDataset PreparedDataset::take_rows(std::span<const std::size_t> idx) const {
  PreparedDataset out;
  out.x = nn::gather_rows(x, idx);
  for (std::size_t i : idx) out.y.push_back(y.at(i));
  out.n_classes = n_classes;
  out.block_widths = block_widths;
  return out;
}

namespace {

bool as_number(const std::string& s, double& v) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

std::vector<std::string> label_order(const std::vector<std::string>& tokens) {
  std::set<std::string> uniq(tokens.begin(), tokens.end());
  std::vector<std::string> out(uniq.begin(), uniq.end());
  std::vector<double> nums;
  for (const auto& s : out) {
    double v;
    if (!as_number(s, v)) return out;
    nums.push_back(v);
  }
  std::vector<std::size_t> order(out.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return nums[a] < nums[b]; });
  std::vector<std::string> sorted;
  for (auto i : order) sorted.push_back(out[i]);
  return sorted;
}

}  // namespace

Transform fit_transform(const RawTable& train) {
  if (train.rows == 0) throw DataError("cannot fit transforms on zero rows");
  Transform t;
  for (const auto& c : train.columns) {
    if (c.kind == ColumnKind::Label) {
      t.label_name = c.name;
      t.classes = label_order(c.tokens);
      continue;
    }
    ColumnTransform f{c.name, c.kind, 0.0, 1.0, {}};
    if (c.kind == ColumnKind::Numerical) {
      double mean = 0.0;
      for (double v : c.numbers) mean += v;
      mean /= static_cast<double>(c.numbers.size());
      double var = 0.0;
      for (double v : c.numbers) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(c.numbers.size()));
      f.mean = mean;
      f.scale = sd < 1e-8 ? 1.0 : sd;
    } else {
      std::set<std::string> uniq(c.tokens.begin(), c.tokens.end());
      f.vocabulary.assign(uniq.begin(), uniq.end());
      if (c.kind == ColumnKind::Binary && f.vocabulary.size() > 2) {
        throw DataError("binary column '" + c.name + "' has " + std::to_string(f.vocabulary.size()) + " levels");
      }
    }
    t.features.push_back(std::move(f));
  }
  if (t.label_name.empty()) throw DataError("table has no label column");
  if (t.classes.size() < 2) throw DataError("training labels hold a single class");
  return t;
}

PreparedDataset apply_transform(const Transform& t, const RawTable& table) {
  std::map<std::string, const RawColumn*> by_name;
  for (const auto& c : table.columns) by_name[c.name] = &c;
  auto column = [&](const std::string& name, ColumnKind kind) -> const RawColumn& {
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->kind != kind) {
      throw DataError("column '" + name + "' missing or of the wrong kind");
    }
    return *it->second;
  };

  PreparedDataset out;
  out.x = Matrix(table.rows, t.encoded_width());
  out.n_classes = t.classes.size();
  out.block_widths = t.block_widths();
  std::size_t at = 0;
  for (const auto& f : t.features) {
    const RawColumn& c = column(f.name, f.kind);
    if (f.kind == ColumnKind::Numerical) {
      for (std::size_t i = 0; i < table.rows; ++i) out.x(i, at) = (c.numbers[i] - f.mean) / f.scale;
    } else {
      std::map<std::string, std::size_t> code;
      for (std::size_t k = 0; k < f.vocabulary.size(); ++k) code[f.vocabulary[k]] = k;
      for (std::size_t i = 0; i < table.rows; ++i) {
        auto it = code.find(c.tokens[i]);
        if (f.kind == ColumnKind::Categorical) {
          if (it != code.end()) out.x(i, at + it->second) = 1.0;  // unseen level: all-zero block
        } else {
          if (it == code.end()) {
            throw DataError("binary column '" + f.name + "' has unseen level '" + c.tokens[i] + "'");
          }
          out.x(i, at) = static_cast<double>(it->second);
        }
      }
    }
    at += f.width();
  }
  const RawColumn& lab = column(t.label_name, ColumnKind::Label);
  std::map<std::string, int> code;
  for (std::size_t k = 0; k < t.classes.size(); ++k) code[t.classes[k]] = static_cast<int>(k);
  for (const auto& s : lab.tokens) {
    auto it = code.find(s);
    if (it == code.end()) throw DataError("unseen label class '" + s + "'");
    out.y.push_back(it->second);
  }
  return out;
}

}  // namespace tabvfl::data
