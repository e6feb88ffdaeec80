#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tabvfl/nn/matrix.hpp"

namespace tabvfl::nn {

// M_loss = 1/(n_steps·B) Σ_steps Σ_rows Σ_cols M·log(M + eps). Always ≤ 0.
double sparsity_loss(std::span<const Matrix> masks, double eps);
// dM_loss/dM for one mask, given the total number of steps.
Matrix sparsity_loss_grad(const Matrix& mask, std::size_t n_steps, double eps);

struct ReconstructionLoss {
  double value = 0.0;
  Matrix d_reconstruction;  // dL/dX̂
};

// Masked, scale-normalised squared error:
// L = 1/B Σ_b Σ_j (S_bj·(X̂_bj − X_bj)/σ_j)², σ_j the population std of X's column j
// over the batch (1 when below 1e-8). S must be binary.
ReconstructionLoss reconstruction_loss(const Matrix& x, const Matrix& x_hat, const Matrix& s);

Matrix softmax(const Matrix& logits);

struct CrossEntropyLoss {
  double value = 0.0;
  Matrix probabilities;
  Matrix d_logits;
};

CrossEntropyLoss cross_entropy(const Matrix& logits, std::span<const int> labels);

}  // namespace tabvfl::nn
