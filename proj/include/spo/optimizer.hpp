#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "spo/policy.hpp"

namespace spo {

/// Adaptive-moment settings: linear warm-up to `learning_rate`, then constant.
struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW)
  int warmup_steps = 0;

  bool operator==(const AdamConfig&) const = default;
};

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(AdamConfig config, Eigen::Index param_count);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }
  double current_learning_rate() const;

  /// One update of `params` in place. Throws NumericalError (state untouched)
  /// when the gradient is not finite.
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad);

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t steps_ = 0;
};

/// Applies one optimizer step to a policy, advancing its version. `loss` is the
/// value the gradient came from; non-finite loss or gradient rejects the step.
void grad_step(Policy& policy, double loss, const Eigen::Ref<const Eigen::VectorXd>& grad, AdamOptimizer& optimizer);

}  // namespace spo
