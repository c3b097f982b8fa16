#pragma once

#include <vector>

#include "spo/env.hpp"
#include "spo/policy.hpp"
#include "spo/sampling.hpp"

namespace spo {

/// Unbiased pass@k: 1 - C(n - c, k) / C(n, k).
double pass_at_k(int n, int c, int k);

struct EvalSpec {
  int samples = 20;  // n
  int k = 10;
  DecodingConfig decoding{0.4, 0.4, 0.95};

  void validate() const;
  bool operator==(const EvalSpec&) const = default;
};

struct PromptEval {
  PromptId prompt = 0;
  int samples = 0;
  int successes = 0;
  double pass_at_k = 0.0;
  /// Success mass of the decoding distribution by enumeration (temperature
  /// ranges integrated by midpoint quadrature).
  double exact_success_probability = 0.0;
  /// 1 - (1 - q)^k, the expectation of the estimator under i.i.d. draws.
  double exact_pass_at_k = 0.0;
};

struct EvalReport {
  std::vector<PromptEval> prompts;
  double mean_pass_at_k = 0.0;
  double mean_exact_pass_at_k = 0.0;
};

/// Success mass of `policy` under a fixed temperature and top-p.
double decoding_success_probability(const Policy& policy, const SequenceEnv& env, PromptId prompt,
                                    double temperature, double top_p);

EvalReport evaluate(const Policy& policy, const SequenceEnv& env, const EvalSpec& spec, Rng& rng);

}  // namespace spo
