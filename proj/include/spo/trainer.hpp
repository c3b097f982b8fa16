#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spo/env.hpp"
#include "spo/losses.hpp"
#include "spo/optimizer.hpp"
#include "spo/policy.hpp"
#include "spo/qparam.hpp"
#include "spo/trajectory.hpp"

namespace spo {

inline constexpr const char* kOnlineSource = "online";

/// One data stream in a training batch: where trajectories come from, what
/// fraction of the batch they fill, and which losses apply to them.
struct MixEntry {
  std::string source;  // "online" or the name of an offline dataset
  double proportion = 1.0;
  std::vector<LossSpec> losses;

  bool operator==(const MixEntry&) const = default;
};

struct BatchItem {
  Trajectory traj;
  std::size_t mix_index = 0;
};

struct StepStats {
  double total_loss = 0.0;
  std::vector<double> source_loss;  // mean per-trajectory loss, indexed like the mix
  std::vector<std::size_t> source_count;
};

/// Owns the trained parameters (and the PPO value model when one is needed)
/// and turns a batch into one optimizer step.
class Trainer {
 public:
  Trainer(const SequenceEnv& env, const Policy& reference, Policy initial, QZeroStore q0, double beta,
          AdamConfig adam, PpoConfig ppo, std::vector<MixEntry> mix);

  const Policy& policy() const { return policy_; }
  const std::vector<MixEntry>& mix() const { return mix_; }
  double beta() const { return beta_; }
  bool has_value_model() const { return value_model_.has_value(); }
  const ValueModel& value_model() const { return *value_model_; }

  /// Batch loss and its gradient with respect to the policy parameters; the
  /// value-model gradient is written to `value_grad` when present.
  double evaluate(const std::vector<BatchItem>& batch, Eigen::VectorXd& policy_grad, Eigen::VectorXd* value_grad,
                  StepStats* stats = nullptr) const;
  /// Same objective evaluated at arbitrary policy parameters (finite-difference probes).
  double loss_at(const Eigen::Ref<const Eigen::VectorXd>& params, const std::vector<BatchItem>& batch) const;

  StepStats step(const std::vector<BatchItem>& batch);

 private:
  double evaluate_with(const Policy& policy, const std::vector<BatchItem>& batch, Eigen::VectorXd* policy_grad,
                       Eigen::VectorXd* value_grad, StepStats* stats) const;

  const SequenceEnv* env_;
  const Policy* reference_;
  Policy policy_;
  QZeroStore q0_;
  double beta_;
  PpoConfig ppo_;
  std::vector<MixEntry> mix_;
  AdamOptimizer optimizer_;
  std::optional<ValueModel> value_model_;
  AdamOptimizer value_optimizer_;
};

}  // namespace spo
