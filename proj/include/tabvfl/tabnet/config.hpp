#pragma once

#include <cstddef>

namespace tabvfl::tabnet {

// Architecture hyperparameters shared by every design. latent_dim plays the
// role of both n_d and n_a.
struct TabNetConfig {
  std::size_t latent_dim = 8;
  std::size_t n_steps = 3;
  double gamma_relax = 1.3;
  double eps_mask = 1e-15;
  double lambda_sparse = 1e-3;
  std::size_t n_shared = 2;
  std::size_t n_independent = 2;
  std::size_t dec_n_shared = 1;
  std::size_t dec_n_independent = 1;
  double p_mask = 0.5;
  std::size_t n_classes = 2;
  double bn_momentum = 0.1;
  double bn_eps = 1e-10;

  // Throws ConfigError. n_guests = 0 skips the latent_dim ≥ K check.
  void validate(std::size_t n_guests) const;
};

}  // namespace tabvfl::tabnet
