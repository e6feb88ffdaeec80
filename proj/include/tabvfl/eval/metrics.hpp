#pragma once

#include <span>
#include <string>
#include <vector>

#include "tabvfl/nn/matrix.hpp"

namespace tabvfl::eval {

using nn::Matrix;

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;       // unweighted macro
  double roc_auc = 0.0;  // macro one-vs-rest
  std::vector<std::string> warnings;
};

double accuracy(std::span<const int> truth, std::span<const int> pred);

// Classes missing from `truth` are left out of the average (with a warning).
double macro_f1(std::span<const int> truth, std::span<const int> pred, std::size_t n_classes,
                std::vector<std::string>* warnings = nullptr);

// Trapezoid under each one-vs-rest ROC curve; tied scores move TPR and FPR
// together, which is the averaged-rank statistic. Classes without both
// positives and negatives are left out.
double roc_auc_binary(std::span<const int> is_positive, std::span<const double> scores);
double macro_roc_auc(std::span<const int> truth, const Matrix& scores,
                     std::vector<std::string>* warnings = nullptr);

std::vector<int> argmax_rows(const Matrix& scores);

Metrics compute_metrics(std::span<const int> truth, const Matrix& probabilities);

}  // namespace tabvfl::eval
