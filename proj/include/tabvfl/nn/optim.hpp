#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tabvfl/nn/matrix.hpp"
#include "tabvfl/nn/parameter.hpp"

namespace tabvfl::nn {

struct AdamConfig {
  double lr = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are bound to the parameter list given at
// construction and indexed positionally.
class Adam {
 public:
  Adam() = default;
  Adam(ParamRefs params, AdamConfig config = {});

  void step();
  void zero_grad();

  std::uint64_t steps_taken() const { return t_; }
  const ParamRefs& params() const { return params_; }

 private:
  ParamRefs params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t t_ = 0;
};

inline void adam_step(Adam& optimizer) { optimizer.step(); }

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central finite differences of `f` around `x`, compared entrywise with
// `analytic`. Relative error uses max(|a|, |n|, 1e-8) as the denominator.
GradCheckResult grad_check(const std::function<double(const Matrix&)>& f, const Matrix& x,
                           const Matrix& analytic, double eps = 1e-6);

// Checks a parameter in place: `f` must re-run the forward pass reading p.value.
GradCheckResult grad_check_param(const std::function<double()>& f, Parameter& p,
                                 const Matrix& analytic, double eps = 1e-6);

}  // namespace tabvfl::nn
