#include "spo/trajectory.hpp"

#include <array>
#include <utility>

namespace spo {

namespace {
constexpr std::array<std::pair<Source, std::string_view>, 6> kSourceNames{{
    {Source::kOnline, "online"},
    {Source::kReference, "reference"},
    {Source::kOfflineHuman, "offline-human"},
    {Source::kOfflineExpert, "offline-expert"},
    {Source::kOfflinePrevRun, "offline-prev-run"},
    {Source::kPtsRollout, "pts-rollout"},
}};

bool same_vector(const std::optional<Eigen::VectorXd>& a, const std::optional<Eigen::VectorXd>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->size() == b->size() && (a->array() == b->array()).all();
}
}  // namespace

std::string_view to_string(Source source) {
  for (const auto& [s, name] : kSourceNames) {
    if (s == source) return name;
  }
  return "online";
}

Source source_from_string(std::string_view name) {
  for (const auto& [s, n] : kSourceNames) {
    if (n == name) return s;
  }
  throw InputError("unknown trajectory source '" + std::string(name) + "'");
}

bool identical(const Trajectory& a, const Trajectory& b) {
  return a.prompt == b.prompt && a.tokens == b.tokens && a.reward == b.reward && a.source == b.source &&
         same_vector(a.behavior_logprobs, b.behavior_logprobs) && same_vector(a.policy_logprobs, b.policy_logprobs) &&
         a.policy_version == b.policy_version && a.annotations == b.annotations;
}

}  // namespace spo
