#include "tabvfl/eval/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "tabvfl/errors.hpp"
#include "tabvfl/nn/losses.hpp"
#include "tabvfl/nn/optim.hpp"
#include "tabvfl/nn/parameter.hpp"

namespace tabvfl::eval {

void Standardizer::fit(const Matrix& x) {
  const double n = static_cast<double>(x.rows());
  mean = nn::column_sums(x);
  mean *= 1.0 / n;
  scale = Matrix(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) scale(0, j) += (x(i, j) - mean(0, j)) * (x(i, j) - mean(0, j));
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt(scale(0, j) / n);
    scale(0, j) = sd < 1e-8 ? 1.0 : sd;
  }
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.cols()) throw ShapeError("probe input width changed since fitting");
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean(0, j)) / scale(0, j);
  return out;
}

namespace {

void check_labels(const Matrix& x, std::span<const int> y, std::size_t n_classes) {
  if (x.rows() != y.size() || y.empty()) throw DataError("probe: features and labels disagree");
  std::set<int> seen(y.begin(), y.end());
  if (seen.size() < 2) throw DataError("probe: training labels hold a single class");
  if (*seen.begin() < 0 || static_cast<std::size_t>(*seen.rbegin()) >= n_classes) {
    throw DataError("probe: label out of range");
  }
}

// Largest eigenvalue of [x 1]ᵀ[x 1]/n by power iteration.
double gram_top_eigenvalue(const Matrix& x) {
  const std::size_t d = x.cols() + 1;
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d))), w(d);
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double xv = v[d - 1];
      for (std::size_t j = 0; j + 1 < d; ++j) xv += x(i, j) * v[j];
      for (std::size_t j = 0; j + 1 < d; ++j) w[j] += x(i, j) * xv;
      w[d - 1] += xv;
    }
    double norm = 0.0;
    for (double& a : w) {
      a /= static_cast<double>(x.rows());
      norm += a * a;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = norm;
    for (std::size_t j = 0; j < d; ++j) v[j] = w[j] / norm;
  }
  return lambda;
}

}  // namespace

void LogisticRegressionProbe::fit(const Matrix& x_raw, std::span<const int> y, std::size_t n_classes) {
  check_labels(x_raw, y, n_classes);
  std_.fit(x_raw);
  const Matrix x = std_.apply(x_raw);
  fc_ = nn::Linear("probe.logistic", x.cols(), n_classes, true, 0);
  fc_.weight.value.fill(0.0);
  // softmax cross-entropy has curvature at most ½·λmax of the Gram matrix
  const double lipschitz = 0.5 * 1.1 * gram_top_eigenvalue(x) + cfg_.logistic_l2;
  const double step = 1.0 / std::max(lipschitz, 1e-12);
  for (iterations_ = 0; iterations_ < cfg_.logistic_max_iter; ++iterations_) {
    fc_.weight.zero_grad();
    fc_.bias->zero_grad();
    const auto ce = nn::cross_entropy(fc_.forward(x), y);
    fc_.backward(x, ce.d_logits);
    Matrix gw = fc_.weight.grad + fc_.weight.value * cfg_.logistic_l2;
    if (std::max(nn::max_abs(gw), nn::max_abs(fc_.bias->grad)) < cfg_.logistic_tol) break;
    fc_.weight.value -= gw * step;
    fc_.bias->value -= fc_.bias->grad * step;
  }
}

Matrix LogisticRegressionProbe::predict_proba(const Matrix& x) const {
  return nn::softmax(fc_.forward(std_.apply(x)));
}

void MlpProbe::fit(const Matrix& x_raw, std::span<const int> y, std::size_t n_classes) {
  check_labels(x_raw, y, n_classes);
  std_.fit(x_raw);
  const Matrix x = std_.apply(x_raw);
  hidden_ = nn::Linear("probe.mlp.hidden", x.cols(), cfg_.mlp_hidden, true, seed_);
  out_ = nn::Linear("probe.mlp.out", cfg_.mlp_hidden, n_classes, true, seed_);
  nn::ParamRefs params;
  hidden_.append_params(params);
  out_.append_params(params);
  nn::Adam opt(params, {cfg_.mlp_lr, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(nn::derive_seed(seed_, "probe.mlp.shuffle"));
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg_.mlp_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += cfg_.mlp_batch) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(cfg_.mlp_batch, order.size() - b));
      const Matrix xb = nn::gather_rows(x, idx);
      std::vector<int> yb;
      for (std::size_t i : idx) yb.push_back(y[i]);
      opt.zero_grad();
      const Matrix pre = hidden_.forward(xb);
      const Matrix h = nn::relu(pre);
      const auto ce = nn::cross_entropy(out_.forward(h), yb);
      Matrix dh = out_.backward(h, ce.d_logits);
      for (std::size_t i = 0; i < dh.size(); ++i)
        if (pre.values()[i] <= 0.0) dh.values()[i] = 0.0;
      hidden_.backward(xb, dh);
      opt.step();
    }
  }
}

Matrix MlpProbe::predict_proba(const Matrix& x) const {
  return nn::softmax(out_.forward(nn::relu(hidden_.forward(std_.apply(x)))));
}

std::vector<std::unique_ptr<Probe>> train_probes(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                                                 std::uint64_t seed, const ProbeConfig& cfg) {
  std::vector<std::unique_ptr<Probe>> out;
  out.push_back(std::make_unique<LogisticRegressionProbe>(cfg));
  out.push_back(std::make_unique<MlpProbe>(cfg, nn::derive_seed(seed, "probe.mlp")));
  for (auto& p : out) p->fit(x, y, n_classes);
  return out;
}

}  // namespace tabvfl::eval
