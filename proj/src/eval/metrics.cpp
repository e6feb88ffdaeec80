#include "tabvfl/eval/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "tabvfl/errors.hpp"

namespace tabvfl::eval {

double accuracy(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size() || truth.empty()) throw DataError("accuracy: need equal, non-empty label sets");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double macro_f1(std::span<const int> truth, std::span<const int> pred, std::size_t n_classes,
                std::vector<std::string>* warnings) {
  if (truth.size() != pred.size() || truth.empty()) throw DataError("f1: need equal, non-empty label sets");
  std::vector<std::size_t> tp(n_classes), fp(n_classes), fn(n_classes), support(n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]), p = static_cast<std::size_t>(pred[i]);
    if (t >= n_classes || p >= n_classes) throw DataError("f1: label out of range");
    ++support[t];
    if (t == p) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (support[c] == 0) {
      if (warnings) warnings->push_back("class " + std::to_string(c) + " absent from test labels; skipped in macro F1");
      continue;
    }
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    total += denom == 0.0 ? 0.0 : 2.0 * tp[c] / denom;
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

double roc_auc_binary(std::span<const int> is_positive, std::span<const double> scores) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double pos = 0, neg = 0;
  for (std::size_t i = 0; i < n; ++i) (is_positive[i] ? pos : neg) += 1.0;
  if (pos == 0 || neg == 0) throw DataError("ROC AUC needs positives and negatives");
  double area = 0.0, tpr = 0.0, fpr = 0.0;
  for (std::size_t i = 0; i < n;) {
    double dp = 0, dn = 0;
    std::size_t j = i;
    for (; j < n && scores[order[j]] == scores[order[i]]; ++j) (is_positive[order[j]] ? dp : dn) += 1.0;
    const double tpr2 = tpr + dp / pos, fpr2 = fpr + dn / neg;
    area += (fpr2 - fpr) * (tpr + tpr2) / 2.0;
    tpr = tpr2;
    fpr = fpr2;
    i = j;
  }
  return area;
}

double macro_roc_auc(std::span<const int> truth, const Matrix& scores, std::vector<std::string>* warnings) {
  if (truth.size() != scores.rows() || truth.empty()) throw DataError("auc: scores and labels disagree");
  double total = 0.0;
  std::size_t counted = 0;
  std::vector<int> pos(truth.size());
  std::vector<double> col(truth.size());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      pos[i] = truth[i] == static_cast<int>(c);
      n_pos += pos[i];
      col[i] = scores(i, c);
    }
    if (n_pos == 0 || n_pos == truth.size()) {
      if (warnings) warnings->push_back("class " + std::to_string(c) + " has no one-vs-rest contrast; skipped in macro AUC");
      continue;
    }
    total += roc_auc_binary(pos, col);
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto r = scores.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

Metrics compute_metrics(std::span<const int> truth, const Matrix& probabilities) {
  Metrics m;
  const auto pred = argmax_rows(probabilities);
  m.accuracy = accuracy(truth, pred);
  m.f1 = macro_f1(truth, pred, probabilities.cols(), &m.warnings);
  m.roc_auc = macro_roc_auc(truth, probabilities, &m.warnings);
  return m;
}

}  // namespace tabvfl::eval
