#pragma once

#include <cstddef>
#include <vector>

namespace tabvfl::data {

struct BatchRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const BatchRange&, const BatchRange&) = default;
};

// Consecutive row ranges of `batch_size`; the last one may be short. With
// drop_singleton a trailing batch of one row is dropped (batch norm needs two).
std::vector<BatchRange> batch_ranges(std::size_t n_rows, std::size_t batch_size,
                                     bool drop_singleton = true);

}  // namespace tabvfl::data
