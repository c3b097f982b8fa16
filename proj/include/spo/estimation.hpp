#pragma once

#include <vector>

#include "spo/env.hpp"
#include "spo/policy.hpp"
#include "spo/qparam.hpp"
#include "spo/sampling.hpp"
#include "spo/trajectory.hpp"

namespace spo {

struct SuccessEstimate {
  PromptId prompt = 0;
  TokenSeq prefix;
  int sample_count = 0;
  int successes = 0;

  double s_hat() const { return static_cast<double>(successes) / sample_count; }
};

/// Q̂_0 together with the success statistics it came from.
struct QZeroEstimate {
  double q0 = 0.0;
  SuccessEstimate success;
};

/// beta * log(s + (1 - s) exp(-1/beta)); exact for binary rewards {0, -1}.
double q_from_success(double s_hat, double beta);

/// Monte-Carlo success rate of `prefix` under `policy` rollouts.
SuccessEstimate estimate_success(const SequenceEnv& env, PromptId prompt, TokenSpan prefix, const Policy& policy,
                                 int n_samples, Rng& rng);

/// Samples `n_samples` rollouts from the reference. Binary environments use the
/// success-rate formula; `general_rewards` instead averages exp(r / beta)
/// (clipped to Q̂_0 <= 0) and is the only option for non-binary rewards.
QZeroEstimate estimate_q0(const SequenceEnv& env, PromptId prompt, const Policy& reference, int n_samples,
                          double beta, Rng& rng, bool general_rewards = false);

/// Q̂_0 for every prompt, each from its own seeded stream.
QZeroStore estimate_q0_store(const SequenceEnv& env, const Policy& reference, int n_samples, double beta,
                             std::uint64_t seed, bool general_rewards = false);
/// Q_0 from the exact oracle.
QZeroStore exact_q0_store(const SequenceEnv& env, const Policy& reference, double beta);

struct PtsParams {
  int rollouts = 10;       // K
  double threshold = 0.2;  // minimum |S_left - S_right| to bisect

  bool operator==(const PtsParams&) const = default;
};

struct PivotalAnnotation {
  std::vector<Annotation> points;  // strictly increasing t, endpoints included
  PtsParams params;
  int probes = 0;      // rollout batches spent (endpoints at 0 included)
  int max_depth = 0;   // deepest bisection level reached

  bool contains(int t) const;
};

/// Recursive bisection over [0, T]. The left endpoint is probed with K
/// reference rollouts from the empty prefix; the right endpoint is the
/// trajectory's own outcome.
PivotalAnnotation pivotal_token_search(const SequenceEnv& env, const Trajectory& traj, const Policy& reference,
                                       const PtsParams& params, Rng& rng);

}  // namespace spo
