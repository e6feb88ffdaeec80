#pragma once

// Independent reference implementations used only by tests. None of these call
// into the library routine they are checked against.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "tabvfl/nn/matrix.hpp"

namespace tabvfl::testing {

inline nn::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  nn::Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

// Sort-and-threshold sparsemax: scan every prefix size k of the descending sort
// and keep the largest k with 1 + k·z_(k) > Σ_{j≤k} z_(j).
inline std::vector<double> sparsemax_sort_oracle(const std::vector<double>& z) {
  std::vector<double> sorted = z;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::size_t k_best = 1;
  double sum_best = sorted[0];
  double prefix = 0.0;
  for (std::size_t k = 1; k <= sorted.size(); ++k) {
    prefix += sorted[k - 1];
    if (1.0 + static_cast<double>(k) * sorted[k - 1] > prefix) {
      k_best = k;
      sum_best = prefix;
    }
  }
  const double tau = (sum_best - 1.0) / static_cast<double>(k_best);
  std::vector<double> p(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) p[j] = std::max(z[j] - tau, 0.0);
  return p;
}

// Distance of the row's coordinates to the sparsemax threshold; finite
// differences are only valid when this exceeds the perturbation size.
inline double sparsemax_kink_margin(const std::vector<double>& z) {
  std::vector<double> sorted = z;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::size_t k_best = 1;
  double sum_best = sorted[0];
  double prefix = 0.0;
  for (std::size_t k = 1; k <= sorted.size(); ++k) {
    prefix += sorted[k - 1];
    if (1.0 + static_cast<double>(k) * sorted[k - 1] > prefix) {
      k_best = k;
      sum_best = prefix;
    }
  }
  const double tau = (sum_best - 1.0) / static_cast<double>(k_best);
  double margin = INFINITY;
  for (double v : z) margin = std::min(margin, std::abs(v - tau));
  return margin;
}

inline double sparsemax_kink_margin(const nn::Matrix& z) {
  double margin = INFINITY;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    std::vector<double> row(z.row(i).begin(), z.row(i).end());
    margin = std::min(margin, sparsemax_kink_margin(row));
  }
  return margin;
}

// Macro F1 straight from a confusion matrix built with nested loops.
inline double macro_f1_bruteforce(const std::vector<int>& truth, const std::vector<int>& pred,
                                  int n_classes) {
  std::vector<std::vector<int>> cm(static_cast<std::size_t>(n_classes),
                                   std::vector<int>(static_cast<std::size_t>(n_classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++cm[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  double total = 0.0;
  int counted = 0;
  for (int c = 0; c < n_classes; ++c) {
    int support = 0;
    for (int p = 0; p < n_classes; ++p) support += cm[c][p];
    if (support == 0) continue;
    const int tp = cm[c][c];
    int fp = 0;
    int fn = 0;
    for (int o = 0; o < n_classes; ++o) {
      if (o == c) continue;
      fp += cm[o][c];
      fn += cm[c][o];
    }
    const double denom = 2.0 * tp + fp + fn;
    total += denom == 0.0 ? 0.0 : 2.0 * tp / denom;
    ++counted;
  }
  return counted == 0 ? 0.0 : total / counted;
}

// One-vs-rest AUC as the all-pairs rank statistic (ties count one half),
// averaged over classes that have both positives and negatives.
inline double macro_auc_bruteforce(const std::vector<int>& truth, const nn::Matrix& scores) {
  const auto n_classes = static_cast<int>(scores.cols());
  double total = 0.0;
  int counted = 0;
  for (int c = 0; c < n_classes; ++c) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] != c) continue;
      for (std::size_t j = 0; j < truth.size(); ++j) {
        if (truth[j] == c) continue;
        const double si = scores(i, static_cast<std::size_t>(c));
        const double sj = scores(j, static_cast<std::size_t>(c));
        wins += si > sj ? 1.0 : (si == sj ? 0.5 : 0.0);
        pairs += 1.0;
      }
    }
    if (pairs == 0.0) continue;
    total += wins / pairs;
    ++counted;
  }
  return counted == 0 ? 0.0 : total / counted;
}

// Tensor-wise relative error max|a−b| / max|b| (0 when both are zero).
inline double rel_error(const nn::Matrix& a, const nn::Matrix& b) {
  const double diff = nn::max_abs_diff(a, b);
  if (diff == 0.0) return 0.0;
  return diff / std::max(nn::max_abs(b), 1e-300);
}

}  // namespace tabvfl::testing
