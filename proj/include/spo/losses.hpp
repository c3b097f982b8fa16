#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>

#include "spo/policy.hpp"
#include "spo/qparam.hpp"
#include "spo/trajectory.hpp"

namespace spo {

enum class LossVariant { kTerminalQ, kNonterminalQ, kAdvantageSigmoid, kMcTarget, kPpo };
enum class BaseLoss { kSquared, kCrossEntropy };

std::string to_string(LossVariant variant);
std::string to_string(BaseLoss base);
LossVariant loss_variant_from_string(const std::string& name);
BaseLoss base_loss_from_string(const std::string& name);

struct LossSpec {
  LossVariant variant = LossVariant::kTerminalQ;
  BaseLoss base = BaseLoss::kSquared;
  /// Cross-entropy predictions are clipped to at most this log-probability.
  double clip_threshold = -1e-4;
  /// Sigmoid warping scale; unset means beta.
  std::optional<double> warp_scale;
  double weight = 1.0;

  void validate() const;
  bool operator==(const LossSpec&) const = default;
};

/// Loss value and derivative with respect to a scalar prediction.
struct ScalarLoss {
  double value = 0.0;
  double grad = 0.0;
};

ScalarLoss squared_loss(double pred, double target);

/// Binary cross-entropy between log-probabilities, x = exp(target):
///   x * relu(-pred) - (1 - x) * log(1 - exp(pred)).
/// The prediction is clipped to `clip_threshold` on the forward pass and the
/// log term's derivative at the clipped point is passed straight through. The
/// relu term's derivative follows the unclipped prediction, so a prediction at
/// or above 0 gets no push upward.
ScalarLoss bce(double pred_logprob, double target_logprob, double clip_threshold = -1e-4);

/// Loss value and gradient with respect to the per-step policy log-probs.
struct LossGrad {
  double value = 0.0;
  Eigen::VectorXd d_logprob;
};

LossGrad terminal_q_loss(const QView& view, double reward, const LossSpec& spec);

/// R_t = r - sum_{t' > t} A_t' for t = 1..T (entry t-1); constants for differentiation.
Eigen::VectorXd reverse_q_targets(const QView& view, double reward);
/// Per-term prediction errors Q_t - R_t, t = 1..T.
Eigen::VectorXd reverse_q_errors(const QView& view, double reward);

/// Mean over t = 1..T of base_loss(Q_t, R_t) with R detached.
LossGrad nonterminal_q_loss(const QView& view, double reward, const LossSpec& spec);

/// Cross-entropy between sigmoid(sum A / s) and sigmoid((r - q0) / s).
LossGrad advantage_sigmoid_loss(const QView& view, double reward, double q0, const LossSpec& spec);

/// (sum A - (r - q0))^2; the unwarped advantage regression.
LossGrad advantage_squared_loss(const QView& view, double reward, double q0);

/// Log-probability target for a success estimate under binary rewards:
/// log(s + (1 - s) exp(-1/beta)).
double success_to_log_target(double s_hat, double beta);

/// Mean cross-entropy of Q_t / beta against success-derived targets at the
/// annotated steps (1 <= t <= T).
LossGrad mc_target_loss(const QView& view, std::span<const Annotation> annotations, double beta, const LossSpec& spec);

/// Dispatches an SPO variant on one trajectory's view.
LossGrad spo_loss(const QView& view, const Trajectory& traj, const LossSpec& spec);

// ---------------------------------------------------------------------------
// PPO baseline

struct PpoConfig {
  double gae_gamma = 1.0;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  double value_loss_weight = 0.5;
  double importance_weight_clamp = 10.0;

  void validate() const;
  bool operator==(const PpoConfig&) const = default;
};

/// delta_t = r_t + gamma V_{t+1} - V_t (V_T = 0), A_t = delta_t + gamma lambda A_{t+1}.
Eigen::VectorXd gae(const Eigen::Ref<const Eigen::VectorXd>& rewards, const Eigen::Ref<const Eigen::VectorXd>& values,
                    double gamma, double lambda);

/// Tabular state-value estimate over (prompt, prefix), separate from the policy.
class ValueModel {
 public:
  ValueModel() = default;
  ValueModel(std::size_t prompts, int vocab, int horizon);

  const PrefixIndex& index() const { return index_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& mutable_params() { return params_; }

  double value(PromptId prompt, TokenSpan prefix) const;
  /// V(a_{<t}) for t = 0..T-1 along a sequence.
  Eigen::VectorXd values_along(PromptId prompt, TokenSpan tokens) const;
  void accumulate_gradient(PromptId prompt, TokenSpan tokens, const Eigen::Ref<const Eigen::VectorXd>& d_values,
                           Eigen::Ref<Eigen::VectorXd> grad) const;

 private:
  std::size_t prompts_ = 0;
  PrefixIndex index_;
  Eigen::VectorXd params_;
};

struct PpoLoss {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  Eigen::VectorXd d_logprob;    // d policy_loss / d new log-probs
  Eigen::VectorXd d_values;     // d value_loss / d V(a_{<t})
  Eigen::VectorXd advantages;   // GAE
  Eigen::VectorXd returns;      // empirical discounted returns
  Eigen::VectorXd weights;      // clamped importance weights (constants)
};

/// Per-step KL-shaped rewards: -beta (log pi_old - log pi_0), plus the terminal reward at T.
Eigen::VectorXd ppo_rewards(const Trajectory& traj, const Eigen::Ref<const Eigen::VectorXd>& ref_logprobs, double beta);

/// Clipped surrogate on ratio pi_new / pi_behavior, scaled by a clamped
/// importance weight treated as a constant. When `fixed_weights` is given
/// those weights are used instead of being recomputed from the new log-probs.
PpoLoss ppo_loss(const Trajectory& traj, const Eigen::Ref<const Eigen::VectorXd>& new_logprobs,
                 const Eigen::Ref<const Eigen::VectorXd>& ref_logprobs, const Eigen::Ref<const Eigen::VectorXd>& values,
                 double beta, const PpoConfig& config, const Eigen::VectorXd* fixed_weights = nullptr);

}  // namespace spo
