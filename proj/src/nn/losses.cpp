#include "tabvfl/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tabvfl/errors.hpp"

namespace tabvfl::nn {

double sparsity_loss(std::span<const Matrix> masks, double eps) {
  if (masks.empty()) throw ShapeError("sparsity_loss: no decision-step masks");
  double total = 0.0;
  const std::size_t rows = masks.front().rows();
  for (const Matrix& m : masks) {
    for (double v : m.values()) total += v * std::log(v + eps);
  }
  return total / (static_cast<double>(masks.size()) * static_cast<double>(rows));
}

Matrix sparsity_loss_grad(const Matrix& mask, std::size_t n_steps, double eps) {
  const double scale = 1.0 / (static_cast<double>(n_steps) * static_cast<double>(mask.rows()));
  Matrix g(mask.rows(), mask.cols());
  auto gv = g.values();
  auto mv = mask.values();
  for (std::size_t i = 0; i < mv.size(); ++i) {
    gv[i] = scale * (std::log(mv[i] + eps) + mv[i] / (mv[i] + eps));
  }
  return g;
}

ReconstructionLoss reconstruction_loss(const Matrix& x, const Matrix& x_hat, const Matrix& s) {
  require_same_shape(x, x_hat, "reconstruction_loss X/X_hat");
  require_same_shape(x, s, "reconstruction_loss X/S");
  for (double v : s.values()) {
    if (v != 0.0 && v != 1.0) throw ShapeError("reconstruction_loss: mask S is not binary");
  }
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  ReconstructionLoss out;
  out.d_reconstruction = Matrix(rows, cols);
  if (rows == 0) return out;

  const double n = static_cast<double>(rows);
  std::vector<double> inv_var(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mean += x(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < rows; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    const double sigma = std::sqrt(var / n);
    const double denom = sigma < 1e-8 ? 1.0 : sigma;
    inv_var[j] = 1.0 / (denom * denom);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      if (s(i, j) == 0.0) continue;
      const double diff = x_hat(i, j) - x(i, j);
      total += diff * diff * inv_var[j];
      out.d_reconstruction(i, j) = 2.0 * diff * inv_var[j] / n;
    }
  out.value = total / n;
  return out;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      p(i, j) = std::exp(row[j] - mx);
      sum += p(i, j);
    }
    for (std::size_t j = 0; j < row.size(); ++j) p(i, j) /= sum;
  }
  return p;
}

CrossEntropyLoss cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     logits.shape_str() + " logits");
  }
  const std::size_t classes = logits.cols();
  CrossEntropyLoss out;
  out.probabilities = softmax(logits);
  out.d_logits = out.probabilities;
  const double n = static_cast<double>(logits.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
    // log-sum-exp form keeps saturated logits finite.
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    total += (mx + std::log(sum)) - row[static_cast<std::size_t>(y)];
    out.d_logits(i, static_cast<std::size_t>(y)) -= 1.0;
  }
  out.d_logits *= 1.0 / n;
  out.value = total / n;
  return out;
}

}  // namespace tabvfl::nn
