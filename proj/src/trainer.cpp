#include "spo/trainer.hpp"

#include <cmath>

namespace spo {

Trainer::Trainer(const SequenceEnv& env, const Policy& reference, Policy initial, QZeroStore q0, double beta,
                 AdamConfig adam, PpoConfig ppo, std::vector<MixEntry> mix)
    : env_(&env),
      reference_(&reference),
      policy_(std::move(initial)),
      q0_(std::move(q0)),
      beta_(beta),
      ppo_(ppo),
      mix_(std::move(mix)),
      optimizer_(adam, policy_.param_count()) {
  if (!(beta > 0.0)) throw InputError("trainer: beta must be positive");
  q0_.require_prompts(env.prompt_count());
  bool needs_values = false;
  for (const auto& entry : mix_) {
    for (const auto& spec : entry.losses) {
      spec.validate();
      if (spec.variant == LossVariant::kPpo) needs_values = true;
    }
  }
  if (needs_values) {
    ppo_.validate();
    value_model_.emplace(env.prompt_count(), env.vocab_size(), env.horizon());
    value_optimizer_ = AdamOptimizer(adam, value_model_->params().size());
  }
}

double Trainer::evaluate_with(const Policy& policy, const std::vector<BatchItem>& batch, Eigen::VectorXd* policy_grad,
                              Eigen::VectorXd* value_grad, StepStats* stats) const {
  if (batch.empty()) throw InputError("trainer: empty batch");
  const double n = static_cast<double>(batch.size());
  if (policy_grad) *policy_grad = Eigen::VectorXd::Zero(policy.param_count());
  if (value_grad && value_model_) *value_grad = Eigen::VectorXd::Zero(value_model_->params().size());
  if (stats) {
    stats->source_loss.assign(mix_.size(), 0.0);
    stats->source_count.assign(mix_.size(), 0);
  }
  double total = 0.0;
  for (const auto& item : batch) {
    const Trajectory& traj = item.traj;
    const MixEntry& entry = mix_.at(item.mix_index);
    const Eigen::VectorXd lp = policy.logprob(traj.prompt, traj.tokens);
    const Eigen::VectorXd ref = reference_->logprob(traj.prompt, traj.tokens);
    const QView view = make_qview(lp, ref, q0_.q0(traj.prompt), beta_);
    double item_loss = 0.0;
    Eigen::VectorXd d_lp = Eigen::VectorXd::Zero(lp.size());
    for (const auto& spec : entry.losses) {
      if (spec.variant == LossVariant::kPpo) {
        const Eigen::VectorXd values = value_model_->values_along(traj.prompt, traj.tokens);
        const PpoLoss l = ppo_loss(traj, lp, ref, values, beta_, ppo_);
        item_loss += spec.weight * (l.policy_loss + ppo_.value_loss_weight * l.value_loss);
        d_lp += spec.weight * l.d_logprob;
        if (value_grad) {
          value_model_->accumulate_gradient(traj.prompt, traj.tokens,
                                            spec.weight * ppo_.value_loss_weight * l.d_values / n, *value_grad);
        }
      } else {
        const LossGrad l = spo_loss(view, traj, spec);
        item_loss += spec.weight * l.value;
        d_lp += spec.weight * l.d_logprob;
      }
    }
    total += item_loss / n;
    if (policy_grad) policy.accumulate_gradient(traj.prompt, traj.tokens, d_lp / n, *policy_grad);
    if (stats) {
      stats->source_loss[item.mix_index] += item_loss;
      ++stats->source_count[item.mix_index];
    }
  }
  if (stats) {
    stats->total_loss = total;
    for (std::size_t i = 0; i < mix_.size(); ++i) {
      if (stats->source_count[i]) stats->source_loss[i] /= static_cast<double>(stats->source_count[i]);
    }
  }
  return total;
}

double Trainer::evaluate(const std::vector<BatchItem>& batch, Eigen::VectorXd& policy_grad, Eigen::VectorXd* value_grad,
                         StepStats* stats) const {
  return evaluate_with(policy_, batch, &policy_grad, value_grad, stats);
}

double Trainer::loss_at(const Eigen::Ref<const Eigen::VectorXd>& params, const std::vector<BatchItem>& batch) const {
  Policy probe = policy_;
  probe.assign(params, policy_.version());
  return evaluate_with(probe, batch, nullptr, nullptr, nullptr);
}

StepStats Trainer::step(const std::vector<BatchItem>& batch) {
  StepStats stats;
  Eigen::VectorXd grad;
  Eigen::VectorXd value_grad;
  evaluate_with(policy_, batch, &grad, value_model_ ? &value_grad : nullptr, &stats);
  grad_step(policy_, stats.total_loss, grad, optimizer_);
  if (value_model_) value_optimizer_.step(value_model_->mutable_params(), value_grad);
  return stats;
}

}  // namespace spo
