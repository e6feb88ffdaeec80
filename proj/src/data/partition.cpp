#include "tabvfl/data/partition.hpp"

#include <cstdlib>

#include "tabvfl/errors.hpp"

namespace tabvfl::data {

std::vector<std::size_t> VerticalPartition::widths() const {
  std::vector<std::size_t> w;
  for (const auto& r : ranges) w.push_back(r.size());
  return w;
}

std::vector<nn::Matrix> VerticalPartition::apply(const nn::Matrix& x) const {
  if (ranges.empty() || ranges.back().end != x.cols()) {
    throw DataError("partition covers " + std::to_string(ranges.empty() ? 0 : ranges.back().end) +
                    " columns, matrix has " + std::to_string(x.cols()));
  }
  std::vector<nn::Matrix> out;
  for (const auto& r : ranges) out.push_back(nn::slice_cols(x, r.begin, r.end));
  return out;
}

VerticalPartition vertical_partition(std::size_t n_features, std::size_t k) {
  if (k == 0) throw ConfigError("need at least one guest");
  if (n_features < k) {
    throw ConfigError(std::to_string(n_features) + " features cannot be split over " + std::to_string(k) + " guests");
  }
  VerticalPartition p;
  std::size_t at = 0;
  for (std::size_t g = 0; g < k; ++g) {
    const std::size_t w = n_features / k + (g < n_features % k ? 1 : 0);
    p.ranges.push_back({at, at + w});
    at += w;
  }
  return p;
}

VerticalPartition vertical_partition_blocks(std::span<const std::size_t> block_widths, std::size_t k) {
  if (k == 0) throw ConfigError("need at least one guest");
  if (block_widths.size() < k) {
    throw ConfigError(std::to_string(block_widths.size()) + " source columns cannot be split over " +
                      std::to_string(k) + " guests");
  }
  std::vector<std::size_t> cut{0};  // cut[i] = column offset before block i
  for (std::size_t w : block_widths) {
    if (w == 0) throw DataError("empty feature block");
    cut.push_back(cut.back() + w);
  }
  const std::size_t total = cut.back();
  const auto uniform = vertical_partition(total, std::min(k, total));

  VerticalPartition p;
  std::size_t block = 0;  // first block of the current guest
  for (std::size_t g = 0; g + 1 < k; ++g) {
    const std::size_t target = uniform.ranges[g].end;
    // candidate ends: block+1 .. blocks−(k−g−1)
    const std::size_t lo = block + 1, hi = block_widths.size() - (k - g - 1);
    std::size_t best = lo;
    for (std::size_t e = lo; e <= hi; ++e) {
      const auto d = [&](std::size_t i) { return cut[i] > target ? cut[i] - target : target - cut[i]; };
      if (d(e) < d(best)) best = e;
    }
    p.ranges.push_back({cut[block], cut[best]});
    block = best;
  }
  p.ranges.push_back({cut[block], total});
  return p;
}

}  // namespace tabvfl::data
