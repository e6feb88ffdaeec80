#pragma once

#include <span>
#include <vector>

#include "tabvfl/nn/matrix.hpp"

namespace tabvfl::data {

struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const ColumnRange&, const ColumnRange&) = default;
};

// Contiguous ranges, one per guest in guest order.
struct VerticalPartition {
  std::vector<ColumnRange> ranges;

  std::vector<std::size_t> widths() const;
  std::vector<nn::Matrix> apply(const nn::Matrix& x) const;

  friend bool operator==(const VerticalPartition&, const VerticalPartition&) = default;
};

// Sizes differ by at most one, larger shares to lower guest ids.
VerticalPartition vertical_partition(std::size_t n_features, std::size_t k);

// Same, but cuts only between source-column blocks (one-hot groups). Each cut
// sits at the block boundary nearest the uniform target that still leaves a
// block for every later guest.
VerticalPartition vertical_partition_blocks(std::span<const std::size_t> block_widths, std::size_t k);

}  // namespace tabvfl::data
