#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "spo/env.hpp"
#include "spo/policy.hpp"
#include "spo/trajectory.hpp"

namespace spo {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits; identical across platforms.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Independent stream for a (seed, role) pair.
Rng make_stream(std::uint64_t seed, std::uint64_t role, std::uint64_t substream = 0);

/// Draws an index from a probability vector.
int sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng);

/// Temperature and nucleus settings. When temperature_min < temperature_max a
/// temperature is drawn uniformly per rollout.
struct DecodingConfig {
  double temperature_min = 1.0;
  double temperature_max = 1.0;
  double top_p = 1.0;

  static DecodingConfig exact() { return {}; }
  void validate() const;
  bool is_exact() const { return temperature_min == 1.0 && temperature_max == 1.0 && top_p == 1.0; }
  bool operator==(const DecodingConfig&) const = default;
};

/// Next-token distribution after temperature scaling and nucleus truncation.
Eigen::VectorXd decode_distribution(const Eigen::Ref<const Eigen::VectorXd>& logits, double temperature, double top_p);

/// Autoregressive rollout. Records the log-probs of the sampling distribution
/// and of the unmodified policy, plus the policy version.
Trajectory sample(const Policy& policy, const SequenceEnv& env, PromptId prompt, const DecodingConfig& config,
                  Rng& rng, Source source = Source::kOnline);

/// Completes `prefix` to length T by ancestral sampling at temperature 1.
TokenSeq sample_continuation(const Policy& policy, PromptId prompt, TokenSpan prefix, Rng& rng);

}  // namespace spo
