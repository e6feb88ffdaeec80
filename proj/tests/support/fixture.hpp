#pragma once

// The cross-partition synthetic dataset, prepared, plus the desk-scale run
// settings used by the directional experiments.

#include "tabvfl/data/prepared.hpp"
#include "tabvfl/eval/experiment.hpp"

namespace tabvfl::testing {

inline data::Prepared synthetic_fixture(std::size_t rows = 4000, std::size_t features = 20, std::uint64_t seed = 7) {
  data::PrepareOptions po;
  po.seed = seed;
  return data::prepare_dataset(data::synthetic_cross_partition(rows, features, seed), po);
}

inline eval::ExperimentSpec fixture_spec() {
  eval::ExperimentSpec s;
  s.dataset = "synthetic_cross_partition";
  s.guests = 2;
  s.batch_size = 128;
  s.pretrain_epochs = 40;
  s.finetune_epochs = 40;
  s.tabnet.latent_dim = 8;
  s.seeds = {0, 1, 2, 3, 4};
  s.failures.p_grid = {0.5};
  s.failures.runs = 5;
  s.latent_sweep = {8, 16, 32};
  return s;
}

}  // namespace tabvfl::testing
