#include "spo/evaluation.hpp"

#include <cmath>
#include <cstdint>

#include "spo/oracle.hpp"

namespace spo {

namespace {

// Exact binomial coefficient while it fits; n <= 62 never overflows.
std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

}  // namespace

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n || k < 1 || k > n) throw InputError("pass_at_k: requires 0 <= c <= n and 1 <= k <= n");
  if (n - c < k) return 1.0;
  if (n <= 62) {
    const std::uint64_t total = binomial(n, k);
    return static_cast<double>(total - binomial(n - c, k)) / static_cast<double>(total);
  }
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - miss;
}

void EvalSpec::validate() const {
  if (samples < 1) throw InputError("eval: samples must be positive");
  if (k < 1 || k > samples) throw InputError("eval: k must lie in [1, samples]");
  decoding.validate();
}

double decoding_success_probability(const Policy& policy, const SequenceEnv& env, PromptId prompt,
                                    double temperature, double top_p) {
  const PrefixIndex& index = env.index();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(index.interior_size()), env.vocab_size());
  for (std::size_t id = 0; id < index.interior_size(); ++id) {
    const Eigen::VectorXd probs = decode_distribution(policy.logits(prompt, index.tokens_of(id)), temperature, top_p);
    rows.row(static_cast<Eigen::Index>(id)) = probs.array().log().matrix().transpose();
  }
  const Eigen::VectorXd log_p = sequence_log_probabilities(index, rows);
  double mass = 0.0;
  for (Eigen::Index i = 0; i < log_p.size(); ++i) {
    if (env.reward_at(prompt, static_cast<std::size_t>(i)) == 0.0) mass += std::exp(log_p[i]);
  }
  return mass;
}

EvalReport evaluate(const Policy& policy, const SequenceEnv& env, const EvalSpec& spec, Rng& rng) {
  spec.validate();
  EvalReport report;
  constexpr int kQuadrature = 32;
  for (PromptId p = 0; p < env.prompt_count(); ++p) {
    PromptEval pe;
    pe.prompt = p;
    pe.samples = spec.samples;
    for (int i = 0; i < spec.samples; ++i) {
      if (sample(policy, env, p, spec.decoding, rng).reward == 0.0) ++pe.successes;
    }
    pe.pass_at_k = pass_at_k(spec.samples, pe.successes, spec.k);
    const auto& d = spec.decoding;
    if (d.temperature_max > d.temperature_min) {
      for (int q = 0; q < kQuadrature; ++q) {
        const double tau = d.temperature_min + (d.temperature_max - d.temperature_min) * (q + 0.5) / kQuadrature;
        pe.exact_success_probability += decoding_success_probability(policy, env, p, tau, d.top_p) / kQuadrature;
      }
    } else {
      pe.exact_success_probability = decoding_success_probability(policy, env, p, d.temperature_min, d.top_p);
    }
    pe.exact_pass_at_k = 1.0 - std::pow(1.0 - pe.exact_success_probability, spec.k);
    report.mean_pass_at_k += pe.pass_at_k / static_cast<double>(env.prompt_count());
    report.mean_exact_pass_at_k += pe.exact_pass_at_k / static_cast<double>(env.prompt_count());
    report.prompts.push_back(pe);
  }
  return report;
}

}  // namespace spo
