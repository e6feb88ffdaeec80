#include "tabvfl/data/batches.hpp"

#include <algorithm>

#include "tabvfl/errors.hpp"

namespace tabvfl::data {

std::vector<BatchRange> batch_ranges(std::size_t n_rows, std::size_t batch_size,
                                     bool drop_singleton) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  std::vector<BatchRange> out;
  for (std::size_t b = 0; b < n_rows; b += batch_size) {
    out.push_back({b, std::min(n_rows, b + batch_size)});
  }
  if (drop_singleton && !out.empty() && out.back().size() == 1) out.pop_back();
  return out;
}

}  // namespace tabvfl::data
