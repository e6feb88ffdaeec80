#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tabvfl/data/preprocess.hpp"

namespace tabvfl::data {

// Largest-remainder quotas: class c gets floor(n_c·target/n) and the leftover
// slots go to the largest fractional parts (lower class code on ties).
std::vector<std::size_t> stratified_quotas(std::span<const std::size_t> class_counts, std::size_t target_n);

// Row indices (ascending) of a stratified sample of `target_n` rows.
std::vector<std::size_t> stratified_indices(std::span<const int> labels, std::size_t n_classes,
                                            std::size_t target_n, std::mt19937_64& rng);

PreparedDataset stratified_downsample(const PreparedDataset& d, std::size_t target_n, std::mt19937_64& rng);

// Integer split sizes by largest remainder; every part must be non-empty.
std::vector<std::size_t> split_sizes(std::size_t n, std::span<const double> ratios);

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};

// Seeded shuffle, cut by split_sizes, each part re-sorted so rows keep their
// file order.
SplitIndices split_indices(std::size_t n, std::array<double, 3> ratios, std::mt19937_64& rng);

// Two-way 70/30 split used on latents.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_two(std::size_t n, double first_ratio,
                                                                        std::mt19937_64& rng);

// Row order for one epoch: identity unless shuffling is on.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint32_t epoch, bool shuffle, std::uint64_t seed);

}  // namespace tabvfl::data
