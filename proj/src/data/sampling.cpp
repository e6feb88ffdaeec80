#include "tabvfl/data/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabvfl/errors.hpp"
#include "tabvfl/nn/parameter.hpp"

namespace tabvfl::data {

namespace {

std::vector<std::size_t> largest_remainder(std::span<const double> exact, std::size_t total) {
  std::vector<std::size_t> out(exact.size());
  std::size_t used = 0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    out[i] = static_cast<std::size_t>(std::floor(exact[i]));
    used += out[i];
  }
  std::vector<std::size_t> order(exact.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return exact[a] - std::floor(exact[a]) > exact[b] - std::floor(exact[b]);
  });
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[order[k % order.size()]];
  return out;
}

}  // namespace

std::vector<std::size_t> stratified_quotas(std::span<const std::size_t> class_counts, std::size_t target_n) {
  const std::size_t n = std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
  if (target_n > n) throw DataError("cannot down-sample " + std::to_string(n) + " rows to " + std::to_string(target_n));
  if (n == 0) throw DataError("nothing to sample from");
  std::vector<double> exact;
  for (std::size_t c : class_counts) exact.push_back(static_cast<double>(c) * static_cast<double>(target_n) / static_cast<double>(n));
  auto q = largest_remainder(exact, target_n);
  for (std::size_t c = 0; c < q.size(); ++c) {
    if (class_counts[c] > 0 && q[c] == 0) {
      throw DataError("class " + std::to_string(c) + " would vanish when down-sampling to " + std::to_string(target_n));
    }
  }
  return q;
}

std::vector<std::size_t> stratified_indices(std::span<const int> labels, std::size_t n_classes,
                                            std::size_t target_n, std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) throw DataError("label out of range");
    by_class[labels[i]].push_back(i);
  }
  std::vector<std::size_t> counts;
  for (const auto& v : by_class) counts.push_back(v.size());
  const auto quota = stratified_quotas(counts, target_n);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& rows = by_class[c];
    std::shuffle(rows.begin(), rows.end(), rng);
    out.insert(out.end(), rows.begin(), rows.begin() + quota[c]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

PreparedDataset stratified_downsample(const PreparedDataset& d, std::size_t target_n, std::mt19937_64& rng) {
  const auto idx = stratified_indices(d.y, d.n_classes, target_n, rng);
  return d.take_rows(idx);
}

std::vector<std::size_t> split_sizes(std::size_t n, std::span<const double> ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  std::vector<double> exact;
  for (double r : ratios) exact.push_back(r * static_cast<double>(n));
  auto sizes = largest_remainder(exact, n);
  for (std::size_t s : sizes)
    if (s == 0) throw DataError("a split of " + std::to_string(n) + " rows came out empty");
  return sizes;
}

SplitIndices split_indices(std::size_t n, std::array<double, 3> ratios, std::mt19937_64& rng) {
  const auto sizes = split_sizes(n, ratios);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  SplitIndices s;
  auto take = [&](std::size_t from, std::size_t count) {
    std::vector<std::size_t> v(perm.begin() + from, perm.begin() + from + count);
    std::sort(v.begin(), v.end());
    return v;
  };
  s.train = take(0, sizes[0]);
  s.validation = take(sizes[0], sizes[1]);
  s.test = take(sizes[0] + sizes[1], sizes[2]);
  return s;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_two(std::size_t n, double first_ratio,
                                                                        std::mt19937_64& rng) {
  if (n == 0) throw DataError("nothing to split");
  const std::array<double, 2> r{first_ratio, 1.0 - first_ratio};
  const auto sizes = split_sizes(n, r);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return {std::vector<std::size_t>(perm.begin(), perm.begin() + sizes[0]),
          std::vector<std::size_t>(perm.begin() + sizes[0], perm.end())};
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint32_t epoch, bool shuffle, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::mt19937_64 rng(nn::derive_seed(seed, "epoch" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

}  // namespace tabvfl::data
