#include "tabvfl/nn/optim.hpp"

#include <algorithm>
#include <cmath>

#include "tabvfl/errors.hpp"

namespace tabvfl::nn {

Adam::Adam(ParamRefs params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.grad.same_shape(p.value) || !m_[k].same_shape(p.value)) {
      throw ShapeError("adam: moment/grad shape mismatch for " + p.id);
    }
    auto w = p.value.values();
    auto g = p.grad.values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Adam::zero_grad() { zero_grads(params_); }

namespace {

double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

}  // namespace

GradCheckResult grad_check(const std::function<double(const Matrix&)>& f, const Matrix& x,
                           const Matrix& analytic, double eps) {
  require_same_shape(x, analytic, "grad_check");
  GradCheckResult result;
  Matrix probe = x;
  auto pv = probe.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double orig = pv[i];
    pv[i] = orig + eps;
    const double fp = f(probe);
    pv[i] = orig - eps;
    const double fm = f(probe);
    pv[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: function is not finite near index " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = rel_error(analytic.values()[i], numeric);
    if (i == 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.analytic_at_worst = analytic.values()[i];
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

GradCheckResult grad_check_param(const std::function<double()>& f, Parameter& p,
                                 const Matrix& analytic, double eps) {
  Matrix saved = p.value;
  auto wrapped = [&](const Matrix& candidate) {
    p.value = candidate;
    return f();
  };
  GradCheckResult r = grad_check(wrapped, saved, analytic, eps);
  p.value = std::move(saved);
  return r;
}

}  // namespace tabvfl::nn
