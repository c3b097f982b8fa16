#include "spo/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spo/softmax.hpp"

namespace spo {

Rng make_stream(std::uint64_t seed, std::uint64_t role, std::uint64_t substream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(role), static_cast<std::uint32_t>(role >> 32),
                    static_cast<std::uint32_t>(substream), static_cast<std::uint32_t>(substream >> 32)};
  return Rng(seq);
}

int sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng) {
  const double u = uniform01(rng) * probs.sum();
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = static_cast<int>(i);
    if (u < acc) return last_positive;
  }
  return last_positive;
}

void DecodingConfig::validate() const {
  if (!(temperature_min > 0.0)) throw InputError("decoding: temperature lower bound must be > 0");
  if (!(temperature_max >= temperature_min)) throw InputError("decoding: temperature range is inverted");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InputError("decoding: top_p must lie in (0, 1]");
}

Eigen::VectorXd decode_distribution(const Eigen::Ref<const Eigen::VectorXd>& logits, double temperature,
                                    double top_p) {
  Eigen::VectorXd probs = softmax(Eigen::VectorXd(logits / temperature));
  if (top_p >= 1.0) return probs;
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  Eigen::VectorXd kept = Eigen::VectorXd::Zero(probs.size());
  double mass = 0.0;
  for (int i : order) {
    kept[i] = probs[i];
    mass += probs[i];
    if (mass >= top_p) break;
  }
  return kept / mass;
}

Trajectory sample(const Policy& policy, const SequenceEnv& env, PromptId prompt, const DecodingConfig& config,
                  Rng& rng, Source source) {
  config.validate();
  const int horizon = policy.horizon();
  double temperature = config.temperature_min;
  if (config.temperature_max > config.temperature_min) {
    temperature += (config.temperature_max - config.temperature_min) * uniform01(rng);
  }
  Trajectory traj;
  traj.prompt = prompt;
  traj.source = source;
  traj.tokens.reserve(horizon);
  Eigen::VectorXd behavior(horizon);
  Eigen::VectorXd unmodified(horizon);
  for (int t = 0; t < horizon; ++t) {
    const Eigen::VectorXd z = policy.logits(prompt, traj.tokens);
    const Eigen::VectorXd probs = decode_distribution(z, temperature, config.top_p);
    const int a = sample_categorical(probs, rng);
    behavior[t] = std::log(probs[a]);
    unmodified[t] = log_softmax(z)[a];
    traj.tokens.push_back(a);
  }
  traj.reward = env.reward(prompt, traj.tokens);
  traj.behavior_logprobs = std::move(behavior);
  traj.policy_logprobs = std::move(unmodified);
  traj.policy_version = policy.version();
  return traj;
}

TokenSeq sample_continuation(const Policy& policy, PromptId prompt, TokenSpan prefix, Rng& rng) {
  TokenSeq tokens(prefix.begin(), prefix.end());
  while (static_cast<int>(tokens.size()) < policy.horizon()) {
    tokens.push_back(sample_categorical(softmax(policy.logits(prompt, tokens)), rng));
  }
  return tokens;
}

}  // namespace spo
