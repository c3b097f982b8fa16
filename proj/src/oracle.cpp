#include "spo/oracle.hpp"

#include <cmath>
#include <ostream>

#include "spo/record_io.hpp"
#include "spo/softmax.hpp"

namespace spo {

namespace {

void check_compatible(const SequenceEnv& env, const Policy& policy) {
  if (policy.vocab_size() != env.vocab_size() || policy.horizon() != env.horizon() ||
      policy.shape().prompts < env.prompt_count()) {
    throw ConsistencyError("policy shape does not cover the environment");
  }
}

}  // namespace

OptimalPolicyTable::OptimalPolicyTable(PrefixIndex index, std::vector<Eigen::MatrixXd> log_optimal,
                                       std::vector<Eigen::MatrixXd> log_reference)
    : index_(std::move(index)), log_optimal_(std::move(log_optimal)), log_reference_(std::move(log_reference)) {
  for (const auto& m : log_optimal_) optimal_.push_back(m.array().exp().matrix());
  for (const auto& m : log_reference_) reference_.push_back(m.array().exp().matrix());
}

SoftValueTable soft_values(const SequenceEnv& env, const Policy& reference, double beta) {
  if (!(beta > 0.0)) throw InputError("soft_values: beta must be positive");
  check_compatible(env, reference);
  const PrefixIndex& index = env.index();
  const int horizon = env.horizon();
  const int vocab = env.vocab_size();
  std::vector<Eigen::VectorXd> all;
  all.reserve(env.prompt_count());
  for (PromptId p = 0; p < env.prompt_count(); ++p) {
    Eigen::VectorXd q(static_cast<Eigen::Index>(index.size()));
    const auto& rewards = env.reward_table(p);
    const std::size_t leaves = index.offset(horizon);
    for (std::size_t rank = 0; rank < rewards.size(); ++rank) q[static_cast<Eigen::Index>(leaves + rank)] = rewards[rank];
    const Eigen::MatrixXd ref_rows = reference.logprob_table(p).array().exp().matrix();
    for (int t = horizon - 1; t >= 0; --t) {
      for (std::size_t id = index.offset(t); id < index.offset(t + 1); ++id) {
        const auto first_child = static_cast<Eigen::Index>(index.child(id, t, 0));
        q[static_cast<Eigen::Index>(id)] = detail::softmax_operator_unchecked(
            ref_rows.row(static_cast<Eigen::Index>(id)), q.segment(first_child, vocab), beta);
      }
    }
    all.push_back(std::move(q));
  }
  return SoftValueTable(index, beta, std::move(all));
}

OptimalPolicyTable optimal_policy(const SoftValueTable& table, const Policy& reference) {
  const PrefixIndex& index = table.index();
  if (reference.vocab_size() != index.vocab_size() || reference.horizon() != index.horizon() ||
      reference.shape().prompts < table.prompt_count()) {
    throw ConsistencyError("optimal_policy: reference does not cover the value table's prefixes");
  }
  const int vocab = index.vocab_size();
  const double beta = table.beta();
  std::vector<Eigen::MatrixXd> optimal, refs;
  for (PromptId p = 0; p < table.prompt_count(); ++p) {
    Eigen::MatrixXd log_ref = reference.logprob_table(p);
    const Eigen::MatrixXd ref_rows = log_ref.array().exp().matrix();
    Eigen::MatrixXd rows(ref_rows.rows(), vocab);
    Eigen::MatrixXd log_rows(ref_rows.rows(), vocab);
    const Eigen::VectorXd& q = table.values(p);
    for (int t = 0; t < index.horizon(); ++t) {
      for (std::size_t id = index.offset(t); id < index.offset(t + 1); ++id) {
        const auto r = static_cast<Eigen::Index>(id);
        for (int a = 0; a < vocab; ++a) {
          const double advantage = q[static_cast<Eigen::Index>(index.child(id, t, a))] - q[r];
          log_rows(r, a) = advantage / beta + log_ref(r, a);
          rows(r, a) = std::exp(log_rows(r, a));
        }
        const double mass = rows.row(r).sum();
        if (std::abs(mass - 1.0) > 1e-9) throw ConsistencyError("optimal_policy: row mass deviates from 1");
        log_rows.row(r).array() -= std::log(mass);
      }
    }
    optimal.push_back(std::move(log_rows));
    refs.push_back(std::move(log_ref));
  }
  return OptimalPolicyTable(index, std::move(optimal), std::move(refs));
}

Eigen::VectorXd sequence_log_probabilities(const PrefixIndex& index, const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  const int vocab = index.vocab_size();
  Eigen::VectorXd level = Eigen::VectorXd::Zero(1);
  for (int t = 0; t < index.horizon(); ++t) {
    Eigen::VectorXd next(level.size() * vocab);
    const auto base = static_cast<Eigen::Index>(index.offset(t));
    for (Eigen::Index code = 0; code < level.size(); ++code) {
      for (int a = 0; a < vocab; ++a) next[code * vocab + a] = level[code] + rows(base + code, a);
    }
    level = std::move(next);
  }
  return level;
}

ObjectiveReport objective_value(const SequenceEnv& env, PromptId prompt, const Policy& policy,
                                const Policy& reference, double beta) {
  const SoftValueTable values = soft_values(env, reference, beta);
  const OptimalPolicyTable optimal = optimal_policy(values, reference);
  return objective_value(env, prompt, policy, values, optimal);
}

ObjectiveReport objective_value(const SequenceEnv& env, PromptId prompt, const Policy& policy,
                                const SoftValueTable& values, const OptimalPolicyTable& optimal) {
  check_compatible(env, policy);
  return objective_value(env, prompt, policy.logprob_table(prompt), values, optimal);
}

ObjectiveReport objective_value(const SequenceEnv& env, PromptId prompt, const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                const SoftValueTable& values, const OptimalPolicyTable& optimal) {
  env.validate_prompt(prompt);
  const PrefixIndex& index = env.index();
  const double beta = values.beta();
  const Eigen::VectorXd log_pi = sequence_log_probabilities(index, rows);
  const Eigen::VectorXd log_ref = sequence_log_probabilities(index, optimal.log_reference_rows(prompt));
  const Eigen::VectorXd log_opt = sequence_log_probabilities(index, optimal.log_rows(prompt));
  const auto& rewards = env.reward_table(prompt);

  ObjectiveReport report;
  report.soft_value = values.prompt_value(prompt);
  for (Eigen::Index i = 0; i < log_pi.size(); ++i) {
    const double p = std::exp(log_pi[i]);
    if (p == 0.0) continue;
    const double r = rewards[static_cast<std::size_t>(i)];
    report.expected_reward += p * r;
    report.kl_to_reference += p * (log_pi[i] - log_ref[i]);
    report.kl_to_optimal += p * (log_pi[i] - log_opt[i]);
    report.entropy -= p * log_pi[i];
    if (r == 0.0) report.success_probability += p;
  }
  report.objective = report.expected_reward - beta * report.kl_to_reference;
  return report;
}

void write_oracle_records(std::ostream& out, const SoftValueTable& values, const OptimalPolicyTable& optimal) {
  const PrefixIndex& index = values.index();
  out << "{\"record\":\"header\",\"beta\":" << format_double(values.beta()) << ",\"vocab\":" << index.vocab_size()
      << ",\"horizon\":" << index.horizon() << ",\"prompts\":" << values.prompt_count() << "}\n";
  for (PromptId p = 0; p < values.prompt_count(); ++p) {
    for (std::size_t id = 0; id < index.size(); ++id) {
      const TokenSeq prefix = index.tokens_of(id);
      out << "{\"record\":\"soft_value\",\"prompt\":" << p << ",\"prefix\":" << json_array(prefix)
          << ",\"q\":" << format_double(values.value_at(p, id)) << "}\n";
    }
    for (std::size_t id = 0; id < index.interior_size(); ++id) {
      const TokenSeq prefix = index.tokens_of(id);
      const auto r = static_cast<Eigen::Index>(id);
      out << "{\"record\":\"optimal_policy\",\"prompt\":" << p << ",\"prefix\":" << json_array(prefix)
          << ",\"pi_star\":" << json_array(optimal.rows(p).row(r).transpose())
          << ",\"pi_ref\":" << json_array(optimal.reference_rows(p).row(r).transpose()) << "}\n";
    }
  }
}

}  // namespace spo
