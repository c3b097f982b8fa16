#include "spo/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace spo {

AdamOptimizer::AdamOptimizer(AdamConfig config, Eigen::Index param_count)
    : config_(config), m_(Eigen::VectorXd::Zero(param_count)), v_(Eigen::VectorXd::Zero(param_count)) {
  if (!(config.learning_rate > 0.0)) throw InputError("adam: learning rate must be positive");
  if (config.warmup_steps < 0) throw InputError("adam: warmup_steps must be non-negative");
}

double AdamOptimizer::current_learning_rate() const {
  if (config_.warmup_steps == 0) return config_.learning_rate;
  const double ramp = static_cast<double>(steps_ + 1) / static_cast<double>(config_.warmup_steps);
  return config_.learning_rate * std::min(1.0, ramp);
}

void AdamOptimizer::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw InputError("adam: size mismatch");
  if (!grad.allFinite()) throw NumericalError("adam: non-finite gradient, step rejected");
  const double lr = current_learning_rate();
  ++steps_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  if (config_.weight_decay != 0.0) params *= (1.0 - lr * config_.weight_decay);
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

void grad_step(Policy& policy, double loss, const Eigen::Ref<const Eigen::VectorXd>& grad, AdamOptimizer& optimizer) {
  if (!std::isfinite(loss)) throw NumericalError("grad_step: non-finite loss, step rejected");
  Eigen::VectorXd params = policy.params();
  optimizer.step(params, grad);
  policy.update(params);
}

}  // namespace spo
