#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "tabvfl/data/preprocess.hpp"
#include "tabvfl/data/sampling.hpp"
#include "tabvfl/data/table.hpp"

namespace tabvfl::data {

struct PrepareOptions {
  std::size_t target_rows = 0;  // 0 keeps every row
  std::array<double, 3> ratios{0.7, 0.15, 0.15};
  std::uint64_t seed = 0;
};

// Everything downstream needs: encoded rows in file order, which split each
// row belongs to, and the transform fitted on the training rows.
struct Prepared {
  PreparedDataset data;
  SplitIndices split;
  Transform transform;
  PrepareOptions options;
  std::size_t source_rows = 0;

  PreparedDataset train() const { return data.take_rows(split.train); }
  PreparedDataset validation() const { return data.take_rows(split.validation); }
  PreparedDataset test() const { return data.take_rows(split.test); }
};

// down-sample (stratified) -> split -> fit on train -> encode all rows
Prepared prepare_dataset(const RawTable& raw, const PrepareOptions& options);

// <dir>/prepared.bin (checkpoint layout: features, labels, split) and
// <dir>/manifest.json (transform and bookkeeping).
void save_prepared(const Prepared& p, const std::filesystem::path& dir);
Prepared load_prepared(const std::filesystem::path& dir);

// Standard-normal features x1..xd and y = 1 iff x1·x11 + x2·x12 > 0, so the
// signal crosses the guest boundary for any contiguous two-way split.
RawTable synthetic_cross_partition(std::size_t rows, std::size_t features, std::uint64_t seed);
DatasetSchema synthetic_schema(std::size_t features);

}  // namespace tabvfl::data
