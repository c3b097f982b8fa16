#include "spo/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "spo/oracle.hpp"

namespace spo {

double q_from_success(double s_hat, double beta) {
  if (!(s_hat >= 0.0 && s_hat <= 1.0)) throw InputError("q_from_success: estimate must lie in [0, 1]");
  return beta * std::log(s_hat + (1.0 - s_hat) * std::exp(-1.0 / beta));
}

SuccessEstimate estimate_success(const SequenceEnv& env, PromptId prompt, TokenSpan prefix, const Policy& policy,
                                 int n_samples, Rng& rng) {
  if (n_samples < 1) throw InputError("estimate_success: need at least one sample");
  SuccessEstimate est{prompt, TokenSeq(prefix.begin(), prefix.end()), n_samples, 0};
  if (static_cast<int>(prefix.size()) == env.horizon()) {
    est.successes = env.reward(prompt, prefix) == 0.0 ? n_samples : 0;
    return est;
  }
  for (int i = 0; i < n_samples; ++i) {
    if (env.reward(prompt, sample_continuation(policy, prompt, prefix, rng)) == 0.0) ++est.successes;
  }
  return est;
}

QZeroEstimate estimate_q0(const SequenceEnv& env, PromptId prompt, const Policy& reference, int n_samples, double beta,
                          Rng& rng, bool general_rewards) {
  if (n_samples < 1) throw InputError("estimate_q0: need at least one sample");
  if (!(beta > 0.0)) throw InputError("estimate_q0: beta must be positive");
  if (!general_rewards && !env.is_binary()) {
    throw UnsupportedError("estimate_q0: rewards are not binary; enable the general-rewards estimator");
  }
  QZeroEstimate out;
  out.success = {prompt, {}, n_samples, 0};
  double mean_exp = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double r = env.reward(prompt, sample_continuation(reference, prompt, {}, rng));
    if (r == 0.0) ++out.success.successes;
    mean_exp += std::exp(r / beta) / n_samples;
  }
  out.q0 = general_rewards ? std::min(0.0, beta * std::log(mean_exp)) : q_from_success(out.success.s_hat(), beta);
  return out;
}

QZeroStore estimate_q0_store(const SequenceEnv& env, const Policy& reference, int n_samples, double beta,
                             std::uint64_t seed, bool general_rewards) {
  QZeroStore store;
  for (PromptId p = 0; p < env.prompt_count(); ++p) {
    Rng rng = make_stream(seed, 0x51e0, p);
    const QZeroEstimate est = estimate_q0(env, p, reference, n_samples, beta, rng, general_rewards);
    store.set(p, {est.q0, QZeroProvenance::kMonteCarlo, n_samples, est.success.successes});
  }
  return store;
}

QZeroStore exact_q0_store(const SequenceEnv& env, const Policy& reference, double beta) {
  const SoftValueTable table = soft_values(env, reference, beta);
  QZeroStore store;
  for (PromptId p = 0; p < env.prompt_count(); ++p) {
    store.set(p, {table.prompt_value(p), QZeroProvenance::kExactOracle, 0, 0});
  }
  return store;
}

bool PivotalAnnotation::contains(int t) const {
  return std::any_of(points.begin(), points.end(), [t](const Annotation& a) { return a.t == t; });
}

PivotalAnnotation pivotal_token_search(const SequenceEnv& env, const Trajectory& traj, const Policy& reference,
                                       const PtsParams& params, Rng& rng) {
  if (params.rollouts < 1) throw InputError("pts: K must be at least 1");
  if (!(params.threshold > 0.0 && params.threshold < 1.0)) throw InputError("pts: threshold must lie in (0, 1)");
  env.validate_tokens(traj.tokens);
  const int horizon = env.horizon();
  const TokenSpan tokens(traj.tokens);

  PivotalAnnotation out;
  out.params = params;
  std::vector<Annotation> points;
  auto probe = [&](int t) {
    const SuccessEstimate est = estimate_success(env, traj.prompt, tokens.first(t), reference, params.rollouts, rng);
    ++out.probes;
    points.push_back({t, est.s_hat(), params.rollouts});
    return est.s_hat();
  };

  const double s_left = probe(0);
  const double s_right = env.reward(traj.prompt, tokens) == 0.0 ? 1.0 : 0.0;
  points.push_back({horizon, s_right, 0});

  std::function<void(int, double, int, double, int)> bisect = [&](int lo, double s_lo, int hi, double s_hi, int depth) {
    out.max_depth = std::max(out.max_depth, depth);
    if (hi - lo <= 1 || std::abs(s_lo - s_hi) < params.threshold) return;
    const int mid = lo + (hi - lo) / 2;
    const double s_mid = probe(mid);
    bisect(lo, s_lo, mid, s_mid, depth + 1);
    bisect(mid, s_mid, hi, s_hi, depth + 1);
  };
  bisect(0, s_left, horizon, s_right, 1);

  std::sort(points.begin(), points.end(), [](const Annotation& a, const Annotation& b) { return a.t < b.t; });
  out.points = std::move(points);
  return out;
}

}  // namespace spo
