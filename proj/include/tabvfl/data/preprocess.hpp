#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabvfl/data/table.hpp"
#include "tabvfl/nn/matrix.hpp"

namespace tabvfl::data {

using nn::Matrix;

struct ColumnTransform {
  std::string name;
  ColumnKind kind = ColumnKind::Numerical;
  double mean = 0.0;  // numerical
  double scale = 1.0;
  std::vector<std::string> vocabulary;  // categorical / binary, sorted

  std::size_t width() const { return kind == ColumnKind::Categorical ? vocabulary.size() : 1; }
};

// Fitted once on training rows, replayed on everything else.
struct Transform {
  std::vector<ColumnTransform> features;  // CSV order, label excluded
  std::string label_name;
  std::vector<std::string> classes;  // code -> original label token

  std::size_t encoded_width() const;
  std::vector<std::size_t> block_widths() const;
  std::vector<std::string> encoded_names() const;

  nlohmann::ordered_json to_json() const;
  static Transform from_json(const nlohmann::ordered_json& j);
};

struct PreparedDataset {
  Matrix x;
  std::vector<int> y;
  std::size_t n_classes = 0;
  // Encoded width of each source column, in order; one-hot blocks are never
  // split across guests.
  std::vector<std::size_t> block_widths;

  std::size_t rows() const { return x.rows(); }
  PreparedDataset take_rows(std::span<const std::size_t> idx) const;
};

// Numerical: (x−μ)/σ, σ < 1e-8 treated as 1. Binary: two lexicographic codes.
// Categorical: one-hot over the training vocabulary. Labels: codes 0..C−1 in
// numeric order when every label parses as a number, lexicographic otherwise.
Transform fit_transform(const RawTable& train);
PreparedDataset apply_transform(const Transform& t, const RawTable& table);

}  // namespace tabvfl::data
