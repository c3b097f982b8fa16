#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "spo/policy.hpp"
#include "spo/trajectory.hpp"

namespace spo {

/// A_t = beta * (log pi_theta(a_t) - log pi_0(a_t)).
template <typename Derived, typename OtherDerived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> advantages(const Eigen::MatrixBase<Derived>& policy_logprobs,
                                                                       const Eigen::MatrixBase<OtherDerived>& ref_logprobs,
                                                                       typename Derived::Scalar beta) {
  if (policy_logprobs.size() != ref_logprobs.size()) throw InputError("advantages: length mismatch");
  if (!(beta > 0)) throw InputError("advantages: beta must be positive");
  return beta * (policy_logprobs - ref_logprobs);
}

/// Q_0 = q0, Q_t = Q_{t-1} + A_t; length T + 1.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> cumulative_q(const Eigen::MatrixBase<Derived>& adv,
                                                                         typename Derived::Scalar q0) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> q(adv.size() + 1);
  q[0] = q0;
  for (Eigen::Index t = 0; t < adv.size(); ++t) q[t + 1] = q[t] + adv[t];
  return q;
}

/// Per-trajectory advantages and cumulative values.
///
/// `advantages[t-1]` is A_t for t = 1..T; `values[t]` is Q_t for t = 0..T with
/// values[0] = Q̂_0.
struct QView {
  Eigen::VectorXd advantages;
  Eigen::VectorXd values;
  double beta = 1.0;

  int horizon() const { return static_cast<int>(advantages.size()); }
  double q0() const { return values[0]; }
  double terminal() const { return values[values.size() - 1]; }
  /// Q_{t_k} - Q_{t_1 - 1} - sum_{t=t_1}^{t_k} A_t, for 1 <= t_1 <= t_k <= T.
  double path_residual(int first, int last) const;
  /// Largest |path_residual| over every interval.
  double max_path_residual() const;
};

QView make_qview(const Eigen::Ref<const Eigen::VectorXd>& policy_logprobs,
                 const Eigen::Ref<const Eigen::VectorXd>& ref_logprobs, double q0, double beta);

/// Q_t^theta - S^beta_{pi_0}[Q_{t+1}^theta] at `prefix`, expanding every next token.
double bellman_residual(const Policy& policy, const Policy& reference, PromptId prompt, TokenSpan prefix, double q0,
                        double beta);

enum class QZeroProvenance { kExactOracle, kMonteCarlo };

struct QZeroEntry {
  double q0 = 0.0;
  QZeroProvenance provenance = QZeroProvenance::kMonteCarlo;
  int sample_count = 0;
  int successes = 0;

  bool operator==(const QZeroEntry&) const = default;
};

/// Frozen per-prompt Q̂_0 estimates.
class QZeroStore {
 public:
  void set(PromptId prompt, QZeroEntry entry);
  bool contains(PromptId prompt) const { return entries_.count(prompt) != 0; }
  double q0(PromptId prompt) const;
  const QZeroEntry& entry(PromptId prompt) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<PromptId, QZeroEntry>& entries() const { return entries_; }

  /// Throws InputError naming the first prompt below `prompt_count` without an entry.
  void require_prompts(std::size_t prompt_count) const;

  void save(std::ostream& out) const;
  static QZeroStore load(std::istream& in);
  void save(const std::string& path) const;
  static QZeroStore load(const std::string& path);

  bool operator==(const QZeroStore&) const = default;

 private:
  std::map<PromptId, QZeroEntry> entries_;
};

}  // namespace spo
