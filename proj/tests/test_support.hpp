#pragma once

// Brute-force reference computations shared by the tests. Nothing here goes
// through the library's dynamic programs: every quantity is summed directly
// over full sequences.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spo/env.hpp"
#include "spo/policy.hpp"

namespace spo::support {

inline SequenceEnv make_e1() { return SequenceEnv(2, 2, {TargetSetFamily{{{1, 1}}}}); }

inline PolicyShape shape_of(const SequenceEnv& env, PolicyKind kind = PolicyKind::kTabular, int hidden = 8) {
  return PolicyShape{kind, env.prompt_count(), env.vocab_size(), env.horizon(), hidden};
}

/// p(tokens) as a product of per-step softmax probabilities.
inline double brute_sequence_probability(const Policy& policy, PromptId prompt, const TokenSeq& tokens) {
  double p = 1.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const Eigen::VectorXd logits = policy.logits(prompt, TokenSpan(tokens.data(), t));
    const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
    p *= e[tokens[t]] / e.sum();
  }
  return p;
}

/// All full sequences extending `prefix`, in lexicographic order.
inline std::vector<TokenSeq> completions(const TokenSeq& prefix, int vocab, int horizon) {
  std::vector<TokenSeq> out{prefix};
  for (int t = static_cast<int>(prefix.size()); t < horizon; ++t) {
    std::vector<TokenSeq> next;
    for (const auto& s : out) {
      for (int a = 0; a < vocab; ++a) {
        TokenSeq c = s;
        c.push_back(a);
        next.push_back(c);
      }
    }
    out = std::move(next);
  }
  return out;
}

/// beta * log E_{pi0}[exp(r / beta) | prefix], summed over every completion.
inline double brute_soft_value(const SequenceEnv& env, const Policy& ref, PromptId prompt, const TokenSeq& prefix,
                               double beta) {
  const double p_prefix = brute_sequence_probability(ref, prompt, prefix);
  double z = 0.0;
  for (const auto& seq : completions(prefix, env.vocab_size(), env.horizon())) {
    z += brute_sequence_probability(ref, prompt, seq) / p_prefix * std::exp(env.reward(prompt, seq) / beta);
  }
  return beta * std::log(z);
}

struct BruteObjective {
  double expected_reward = 0.0;
  double kl_ref = 0.0;
  double kl_opt = 0.0;
  double soft_value = 0.0;
};

/// Both sides of the variational identity from sequence-level sums, with pi*
/// formed as pi0 exp(r / beta) / Z.
inline BruteObjective brute_objective(const SequenceEnv& env, const Policy& policy, const Policy& ref, PromptId prompt,
                                      double beta) {
  const auto seqs = completions({}, env.vocab_size(), env.horizon());
  double z = 0.0;
  for (const auto& s : seqs) z += brute_sequence_probability(ref, prompt, s) * std::exp(env.reward(prompt, s) / beta);
  BruteObjective out;
  out.soft_value = beta * std::log(z);
  for (const auto& s : seqs) {
    const double p = brute_sequence_probability(policy, prompt, s);
    const double p0 = brute_sequence_probability(ref, prompt, s);
    const double r = env.reward(prompt, s);
    const double pstar = p0 * std::exp(r / beta) / z;
    out.expected_reward += p * r;
    out.kl_ref += p * std::log(p / p0);
    out.kl_opt += p * std::log(p / pstar);
  }
  return out;
}

/// Central finite difference of f along each coordinate.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                        double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a|_inf, |b|_inf, floor).
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-3) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), floor});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace spo::support
