#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "spo/env.hpp"
#include "spo/policy.hpp"

namespace spo {

/// Exact soft values Q_t for every prefix of every prompt at a fixed beta.
///
/// Q_T is the reward; shallower prefixes are the beta-softmax, under the
/// reference next-token row, of their children.
class SoftValueTable {
 public:
  SoftValueTable(PrefixIndex index, double beta, std::vector<Eigen::VectorXd> values)
      : index_(std::move(index)), beta_(beta), values_(std::move(values)) {}

  double beta() const { return beta_; }
  const PrefixIndex& index() const { return index_; }
  std::size_t prompt_count() const { return values_.size(); }

  double value(PromptId prompt, TokenSpan prefix) const { return values_.at(prompt)[index_.id(prefix)]; }
  double value_at(PromptId prompt, std::size_t prefix_id) const { return values_.at(prompt)[prefix_id]; }
  const Eigen::VectorXd& values(PromptId prompt) const { return values_.at(prompt); }

  /// Soft value of the prompt, Q_0 = beta log Z.
  double prompt_value(PromptId prompt) const { return values_.at(prompt)[0]; }
  double log_partition(PromptId prompt) const { return prompt_value(prompt) / beta_; }

 private:
  PrefixIndex index_;
  double beta_;
  std::vector<Eigen::VectorXd> values_;
};

/// Token-level optimal policy rows next to the reference rows they came from.
/// Rows are indexed by interior PrefixIndex id.
class OptimalPolicyTable {
 public:
  OptimalPolicyTable(PrefixIndex index, std::vector<Eigen::MatrixXd> log_optimal,
                     std::vector<Eigen::MatrixXd> log_reference);

  const PrefixIndex& index() const { return index_; }
  std::size_t prompt_count() const { return optimal_.size(); }

  Eigen::VectorXd row(PromptId prompt, TokenSpan prefix) const {
    return optimal_.at(prompt).row(static_cast<Eigen::Index>(index_.id(prefix))).transpose();
  }
  Eigen::VectorXd reference_row(PromptId prompt, TokenSpan prefix) const {
    return reference_.at(prompt).row(static_cast<Eigen::Index>(index_.id(prefix))).transpose();
  }
  const Eigen::MatrixXd& rows(PromptId prompt) const { return optimal_.at(prompt); }
  const Eigen::MatrixXd& reference_rows(PromptId prompt) const { return reference_.at(prompt); }
  const Eigen::MatrixXd& log_rows(PromptId prompt) const { return log_optimal_.at(prompt); }
  const Eigen::MatrixXd& log_reference_rows(PromptId prompt) const { return log_reference_.at(prompt); }

 private:
  PrefixIndex index_;
  std::vector<Eigen::MatrixXd> optimal_;
  std::vector<Eigen::MatrixXd> reference_;
  std::vector<Eigen::MatrixXd> log_optimal_;
  std::vector<Eigen::MatrixXd> log_reference_;
};

SoftValueTable soft_values(const SequenceEnv& env, const Policy& reference, double beta);

OptimalPolicyTable optimal_policy(const SoftValueTable& table, const Policy& reference);

/// Log-probability of every full sequence (lexicographic rank order) given
/// per-prefix log-prob rows.
Eigen::VectorXd sequence_log_probabilities(const PrefixIndex& index, const Eigen::Ref<const Eigen::MatrixXd>& rows);

struct ObjectiveReport {
  double objective = 0.0;        // E_pi[r] - beta KL[pi, pi0]
  double expected_reward = 0.0;
  double kl_to_reference = 0.0;
  double kl_to_optimal = 0.0;
  double soft_value = 0.0;       // Q_0 of the reference
  double entropy = 0.0;          // sequence-level, nats
  double success_probability = 0.0;
};

/// Exact expectations by enumeration. KL[pi, pi*] uses the optimal-policy rows.
ObjectiveReport objective_value(const SequenceEnv& env, PromptId prompt, const Policy& policy,
                                const Policy& reference, double beta);
ObjectiveReport objective_value(const SequenceEnv& env, PromptId prompt, const Policy& policy,
                                const SoftValueTable& values, const OptimalPolicyTable& optimal);
/// Same, from precomputed per-prefix log-prob rows of the evaluated policy.
ObjectiveReport objective_value(const SequenceEnv& env, PromptId prompt, const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                const SoftValueTable& values, const OptimalPolicyTable& optimal);

/// Line-delimited dump of both tables.
void write_oracle_records(std::ostream& out, const SoftValueTable& values, const OptimalPolicyTable& optimal);

}  // namespace spo
