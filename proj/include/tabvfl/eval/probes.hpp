#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tabvfl/nn/layers.hpp"

namespace tabvfl::eval {

using nn::Matrix;

struct ProbeConfig {
  // logistic regression: full-batch gradient descent, step 1/L from a bound on
  // the loss curvature
  std::size_t logistic_max_iter = 500;
  double logistic_tol = 1e-6;  // on the largest gradient entry
  double logistic_l2 = 1e-4;
  // MLP: one ReLU hidden layer, Adam on shuffled mini-batches
  std::size_t mlp_hidden = 64;
  std::size_t mlp_epochs = 60;
  std::size_t mlp_batch = 128;
  double mlp_lr = 0.01;
};

// Column standardisation fitted on the probe's training rows.
struct Standardizer {
  Matrix mean, scale;  // 1×d
  void fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

class Probe {
 public:
  virtual ~Probe() = default;
  virtual std::string name() const = 0;
  virtual void fit(const Matrix& x, std::span<const int> y, std::size_t n_classes) = 0;
  virtual Matrix predict_proba(const Matrix& x) const = 0;
};

class LogisticRegressionProbe : public Probe {
 public:
  explicit LogisticRegressionProbe(ProbeConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override { return "logistic_regression"; }
  void fit(const Matrix& x, std::span<const int> y, std::size_t n_classes) override;
  Matrix predict_proba(const Matrix& x) const override;
  std::size_t iterations() const { return iterations_; }

 private:
  ProbeConfig cfg_;
  Standardizer std_;
  nn::Linear fc_;
  std::size_t iterations_ = 0;
};

class MlpProbe : public Probe {
 public:
  MlpProbe(ProbeConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {}
  std::string name() const override { return "mlp"; }
  void fit(const Matrix& x, std::span<const int> y, std::size_t n_classes) override;
  Matrix predict_proba(const Matrix& x) const override;

 private:
  ProbeConfig cfg_;
  std::uint64_t seed_;
  Standardizer std_;
  nn::Linear hidden_, out_;
};

// Both probes, fitted. Throws DataError on single-class labels.
std::vector<std::unique_ptr<Probe>> train_probes(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                                                 std::uint64_t seed, const ProbeConfig& cfg = {});

}  // namespace tabvfl::eval
