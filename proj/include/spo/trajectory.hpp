#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spo/types.hpp"

namespace spo {

enum class Source { kOnline, kReference, kOfflineHuman, kOfflineExpert, kOfflinePrevRun, kPtsRollout };

std::string_view to_string(Source source);
Source source_from_string(std::string_view name);

/// Monte-Carlo success estimate after the first `t` tokens.
struct Annotation {
  int t = 0;
  double s_hat = 0.0;
  int samples = 0;

  bool operator==(const Annotation&) const = default;
};

struct Trajectory {
  PromptId prompt = 0;
  TokenSeq tokens;
  double reward = 0.0;
  Source source = Source::kOnline;
  /// Per-step log-probs under the distribution the tokens were drawn from.
  std::optional<Eigen::VectorXd> behavior_logprobs;
  /// Per-step log-probs under the unmodified (temperature 1, no truncation) policy.
  std::optional<Eigen::VectorXd> policy_logprobs;
  std::optional<std::uint64_t> policy_version;
  std::vector<Annotation> annotations;
};

/// Field-wise, bit-exact equality (NaN-free records assumed).
bool identical(const Trajectory& a, const Trajectory& b);

}  // namespace spo
