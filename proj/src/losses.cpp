#include "spo/losses.hpp"

#include <algorithm>
#include <cmath>

#include "spo/softmax.hpp"

namespace spo {

namespace {

// d loss / d log-prob_s = beta * sum_{t >= s} d loss / d Q_t, with dq indexed t = 0..T.
Eigen::VectorXd backprop_values(const Eigen::Ref<const Eigen::VectorXd>& dq, double beta) {
  const Eigen::Index horizon = dq.size() - 1;
  Eigen::VectorXd d(horizon);
  double running = 0.0;
  for (Eigen::Index t = horizon; t >= 1; --t) {
    running += dq[t];
    d[t - 1] = beta * running;
  }
  return d;
}

ScalarLoss base_loss(const LossSpec& spec, double pred_q, double target_q, double beta) {
  if (spec.base == BaseLoss::kSquared) return squared_loss(pred_q, target_q);
  ScalarLoss l = bce(pred_q / beta, target_q / beta, spec.clip_threshold);
  l.grad /= beta;
  return l;
}

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

}  // namespace

std::string to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::kTerminalQ: return "terminal-q";
    case LossVariant::kNonterminalQ: return "nonterminal-q";
    case LossVariant::kAdvantageSigmoid: return "advantage-sigmoid";
    case LossVariant::kMcTarget: return "mc-target";
    case LossVariant::kPpo: return "ppo";
  }
  return "terminal-q";
}

std::string to_string(BaseLoss base) { return base == BaseLoss::kSquared ? "squared" : "cross-entropy"; }

LossVariant loss_variant_from_string(const std::string& name) {
  for (auto v : {LossVariant::kTerminalQ, LossVariant::kNonterminalQ, LossVariant::kAdvantageSigmoid,
                 LossVariant::kMcTarget, LossVariant::kPpo}) {
    if (to_string(v) == name) return v;
  }
  throw InputError("unknown loss variant '" + name + "'");
}

BaseLoss base_loss_from_string(const std::string& name) {
  if (name == "squared") return BaseLoss::kSquared;
  if (name == "cross-entropy") return BaseLoss::kCrossEntropy;
  throw InputError("unknown base loss '" + name + "'");
}

void LossSpec::validate() const {
  if (!(clip_threshold < 0.0)) throw InputError("loss: clip_threshold must be negative");
  if (warp_scale && !(*warp_scale > 0.0)) throw InputError("loss: warp_scale must be positive");
  if (variant == LossVariant::kAdvantageSigmoid && base != BaseLoss::kCrossEntropy) {
    throw InputError("loss: advantage-sigmoid is only defined with cross-entropy");
  }
  if (!std::isfinite(weight) || weight < 0.0) throw InputError("loss: weight must be finite and non-negative");
}

ScalarLoss squared_loss(double pred, double target) {
  const double e = pred - target;
  return {e * e, 2.0 * e};
}

ScalarLoss bce(double pred_logprob, double target_logprob, double clip_threshold) {
  const double y = std::min(target_logprob, 0.0);
  const double x = std::exp(y);
  const double p = std::min(pred_logprob, clip_threshold);
  // log(1 - e^p) and its derivative -e^p / (1 - e^p), stable near p = 0.
  const double one_minus = -std::expm1(p);
  ScalarLoss out;
  out.value = x * std::max(-p, 0.0) - (1.0 - x) * std::log(one_minus);
  out.grad = (pred_logprob < 0.0 ? -x : 0.0) + (1.0 - x) * std::exp(p) / one_minus;
  return out;
}

LossGrad terminal_q_loss(const QView& view, double reward, const LossSpec& spec) {
  const ScalarLoss l = base_loss(spec, view.terminal(), reward, view.beta);
  Eigen::VectorXd dq = Eigen::VectorXd::Zero(view.values.size());
  dq[dq.size() - 1] = l.grad;
  return {l.value, backprop_values(dq, view.beta)};
}

Eigen::VectorXd reverse_q_targets(const QView& view, double reward) {
  const int horizon = view.horizon();
  Eigen::VectorXd targets(horizon);
  double later = 0.0;
  for (int t = horizon; t >= 1; --t) {
    targets[t - 1] = reward - later;
    later += view.advantages[t - 1];
  }
  return targets;
}

Eigen::VectorXd reverse_q_errors(const QView& view, double reward) {
  return view.values.tail(view.horizon()) - reverse_q_targets(view, reward);
}

LossGrad nonterminal_q_loss(const QView& view, double reward, const LossSpec& spec) {
  const int horizon = view.horizon();
  const Eigen::VectorXd targets = reverse_q_targets(view, reward);
  Eigen::VectorXd dq = Eigen::VectorXd::Zero(horizon + 1);
  double total = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    const ScalarLoss l = base_loss(spec, view.values[t], targets[t - 1], view.beta);
    total += l.value;
    dq[t] = l.grad / horizon;
  }
  return {total / horizon, backprop_values(dq, view.beta)};
}

LossGrad advantage_sigmoid_loss(const QView& view, double reward, double q0, const LossSpec& spec) {
  const double scale = spec.warp_scale.value_or(view.beta);
  const double z_hat = view.advantages.sum() / scale;
  const double p = sigmoid((reward - q0) / scale);
  const double value = -p * log_sigmoid(z_hat) - (1.0 - p) * log_sigmoid(-z_hat);
  const double d_sum = (sigmoid(z_hat) - p) / scale;
  return {value, Eigen::VectorXd::Constant(view.horizon(), view.beta * d_sum)};
}

LossGrad advantage_squared_loss(const QView& view, double reward, double q0) {
  const ScalarLoss l = squared_loss(view.advantages.sum(), reward - q0);
  return {l.value, Eigen::VectorXd::Constant(view.horizon(), view.beta * l.grad)};
}

double success_to_log_target(double s_hat, double beta) {
  if (!(s_hat >= 0.0 && s_hat <= 1.0)) throw InputError("success estimate must lie in [0, 1]");
  return std::log(s_hat + (1.0 - s_hat) * std::exp(-1.0 / beta));
}

LossGrad mc_target_loss(const QView& view, std::span<const Annotation> annotations, double beta, const LossSpec& spec) {
  const int horizon = view.horizon();
  Eigen::VectorXd dq = Eigen::VectorXd::Zero(horizon + 1);
  if (annotations.empty()) return {0.0, Eigen::VectorXd::Zero(horizon)};
  double total = 0.0;
  const double n = static_cast<double>(annotations.size());
  for (const Annotation& a : annotations) {
    if (a.t < 1 || a.t > horizon) throw InputError("mc_target_loss: annotation step outside [1, T]");
    const double target_q = beta * success_to_log_target(a.s_hat, beta);
    const ScalarLoss l = base_loss(spec, view.values[a.t], target_q, beta);
    total += l.value;
    dq[a.t] += l.grad / n;
  }
  return {total / n, backprop_values(dq, view.beta)};
}

LossGrad spo_loss(const QView& view, const Trajectory& traj, const LossSpec& spec) {
  switch (spec.variant) {
    case LossVariant::kTerminalQ: return terminal_q_loss(view, traj.reward, spec);
    case LossVariant::kNonterminalQ: return nonterminal_q_loss(view, traj.reward, spec);
    case LossVariant::kAdvantageSigmoid: return advantage_sigmoid_loss(view, traj.reward, view.q0(), spec);
    case LossVariant::kMcTarget: {
      std::vector<Annotation> interior;
      for (const auto& a : traj.annotations) {
        if (a.t >= 1) interior.push_back(a);
      }
      return mc_target_loss(view, interior, view.beta, spec);
    }
    case LossVariant::kPpo: break;
  }
  throw InputError("spo_loss: ppo is not a cumulative-Q loss");
}

// ---------------------------------------------------------------------------

void PpoConfig::validate() const {
  if (!(gae_gamma >= 0.0 && gae_gamma <= 1.0)) throw InputError("ppo: gae_gamma must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw InputError("ppo: gae_lambda must lie in [0, 1]");
  if (!(clip_epsilon > 0.0)) throw InputError("ppo: clip_epsilon must be positive");
  if (!(importance_weight_clamp >= 1.0)) throw InputError("ppo: importance_weight_clamp must be >= 1");
}

Eigen::VectorXd gae(const Eigen::Ref<const Eigen::VectorXd>& rewards, const Eigen::Ref<const Eigen::VectorXd>& values,
                    double gamma, double lambda) {
  if (rewards.size() != values.size()) throw InputError("gae: length mismatch");
  const Eigen::Index horizon = rewards.size();
  Eigen::VectorXd adv(horizon);
  double running = 0.0;
  for (Eigen::Index t = horizon - 1; t >= 0; --t) {
    const double next_value = t + 1 < horizon ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next_value - values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

ValueModel::ValueModel(std::size_t prompts, int vocab, int horizon)
    : prompts_(prompts),
      index_(vocab, horizon),
      params_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(prompts * index_.interior_size()))) {}

double ValueModel::value(PromptId prompt, TokenSpan prefix) const {
  if (prompt >= prompts_) throw InputError("ValueModel: unknown prompt");
  return params_[static_cast<Eigen::Index>(prompt * index_.interior_size() + index_.id(prefix))];
}

Eigen::VectorXd ValueModel::values_along(PromptId prompt, TokenSpan tokens) const {
  const int horizon = index_.horizon();
  Eigen::VectorXd v(horizon);
  for (int t = 0; t < horizon; ++t) v[t] = value(prompt, tokens.first(t));
  return v;
}

void ValueModel::accumulate_gradient(PromptId prompt, TokenSpan tokens, const Eigen::Ref<const Eigen::VectorXd>& d_values,
                                     Eigen::Ref<Eigen::VectorXd> grad) const {
  for (int t = 0; t < index_.horizon(); ++t) {
    grad[static_cast<Eigen::Index>(prompt * index_.interior_size() + index_.id(tokens.first(t)))] += d_values[t];
  }
}

Eigen::VectorXd ppo_rewards(const Trajectory& traj, const Eigen::Ref<const Eigen::VectorXd>& ref_logprobs, double beta) {
  const Eigen::VectorXd& old_lp = traj.policy_logprobs ? *traj.policy_logprobs : *traj.behavior_logprobs;
  Eigen::VectorXd rewards = -beta * (old_lp - ref_logprobs);
  rewards[rewards.size() - 1] += traj.reward;
  return rewards;
}

PpoLoss ppo_loss(const Trajectory& traj, const Eigen::Ref<const Eigen::VectorXd>& new_logprobs,
                 const Eigen::Ref<const Eigen::VectorXd>& ref_logprobs, const Eigen::Ref<const Eigen::VectorXd>& values,
                 double beta, const PpoConfig& config, const Eigen::VectorXd* fixed_weights) {
  if (!traj.behavior_logprobs) throw InputError("ppo_loss: trajectory has no behavior log-probs");
  const Eigen::VectorXd& behavior = *traj.behavior_logprobs;
  const Eigen::Index horizon = new_logprobs.size();
  if (behavior.size() != horizon || ref_logprobs.size() != horizon || values.size() != horizon) {
    throw InputError("ppo_loss: length mismatch");
  }
  PpoLoss out;
  const Eigen::VectorXd rewards = ppo_rewards(traj, ref_logprobs, beta);
  out.advantages = gae(rewards, values, config.gae_gamma, config.gae_lambda);
  out.returns.resize(horizon);
  double running = 0.0;
  for (Eigen::Index t = horizon - 1; t >= 0; --t) {
    running = rewards[t] + config.gae_gamma * running;
    out.returns[t] = running;
  }
  const Eigen::VectorXd ratio = (new_logprobs - behavior).array().exp().matrix();
  const double c = config.importance_weight_clamp;
  out.weights = fixed_weights ? *fixed_weights : Eigen::VectorXd(ratio.array().min(c).max(1.0 / c).matrix());
  out.d_logprob = Eigen::VectorXd::Zero(horizon);
  const double n = static_cast<double>(horizon);
  for (Eigen::Index t = 0; t < horizon; ++t) {
    const double a = out.advantages[t];
    const double unclipped = ratio[t] * a;
    const double clipped = std::clamp(ratio[t], 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * a;
    const bool use_unclipped = unclipped <= clipped;
    out.policy_loss -= out.weights[t] * std::min(unclipped, clipped) / n;
    if (use_unclipped) out.d_logprob[t] = -out.weights[t] * unclipped / n;
  }
  const Eigen::VectorXd err = values - out.returns;
  out.value_loss = err.squaredNorm() / n;
  out.d_values = 2.0 * err / n;
  return out;
}

}  // namespace spo
