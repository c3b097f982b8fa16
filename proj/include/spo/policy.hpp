#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>

#include "spo/prefix_index.hpp"
#include "spo/types.hpp"

namespace spo {

enum class PolicyKind { kTabular, kTinyNet };

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

struct PolicyShape {
  PolicyKind kind = PolicyKind::kTabular;
  std::size_t prompts = 1;
  int vocab = 2;
  int horizon = 2;
  /// Hidden width of the tiny network; unused for tabular policies.
  int hidden = 16;

  bool operator==(const PolicyShape&) const = default;
};

/// Autoregressive next-token policy over a fixed horizon.
///
/// Parameters are a flat vector. Tabular policies hold one logit per
/// (prompt, prefix, token); tiny-net policies hold a one-hidden-layer tanh
/// network mapping a prefix encoding to V logits. Every next-token
/// distribution is a softmax and therefore strictly positive.
class Policy {
 public:
  Policy() = default;
  /// Zero-initialized: tabular is uniform, tiny-net outputs uniform until trained.
  explicit Policy(PolicyShape shape);

  static Policy uniform(PolicyShape shape) { return Policy(shape); }
  /// Tabular policy with i.i.d. N(0, scale^2) logits, or tiny-net with scaled random weights.
  static Policy random(PolicyShape shape, double scale, std::uint64_t seed);

  const PolicyShape& shape() const { return shape_; }
  PolicyKind kind() const { return shape_.kind; }
  int vocab_size() const { return shape_.vocab; }
  int horizon() const { return shape_.horizon; }
  const PrefixIndex& index() const { return index_; }

  const Eigen::VectorXd& params() const { return params_; }
  Eigen::Index param_count() const { return params_.size(); }
  std::uint64_t version() const { return version_; }

  /// Replaces the parameters and advances the version.
  void update(const Eigen::Ref<const Eigen::VectorXd>& params);
  /// Replaces parameters without touching the version (perturbation probes, deserialization).
  void assign(const Eigen::Ref<const Eigen::VectorXd>& params, std::uint64_t version);

  Eigen::VectorXd logits(PromptId prompt, TokenSpan prefix) const;
  Eigen::VectorXd next_logprobs(PromptId prompt, TokenSpan prefix) const;
  /// Entry t is log pi(a_t | a_{<t}); tokens must have length T.
  Eigen::VectorXd logprob(PromptId prompt, TokenSpan tokens) const;
  double sequence_logprob(PromptId prompt, TokenSpan tokens) const { return logprob(prompt, tokens).sum(); }

  /// Log-prob rows for every interior prefix of one prompt, ordered by PrefixIndex id.
  Eigen::MatrixXd logprob_table(PromptId prompt) const;

  /// grad += sum_t d_logprob[t] * d log pi(a_t | a_{<t}) / d params.
  void accumulate_gradient(PromptId prompt, TokenSpan tokens, const Eigen::Ref<const Eigen::VectorXd>& d_logprob,
                           Eigen::Ref<Eigen::VectorXd> grad) const;

  void save(std::ostream& out) const;
  static Policy load(std::istream& in);
  void save(const std::string& path) const;
  static Policy load(const std::string& path);

 private:
  void check_prompt(PromptId prompt) const;
  Eigen::Index tabular_row(PromptId prompt, std::size_t prefix_id) const {
    return static_cast<Eigen::Index>(prompt * index_.interior_size() + prefix_id);
  }
  Eigen::VectorXd encode(PromptId prompt, TokenSpan prefix) const;
  int input_width() const;

  PolicyShape shape_;
  PrefixIndex index_;
  Eigen::VectorXd params_;
  std::uint64_t version_ = 0;
};

/// Immutable, shareable view of a policy at one version.
class Snapshot {
 public:
  Snapshot() = default;
  explicit Snapshot(const Policy& policy) : policy_(std::make_shared<const Policy>(policy)) {}

  const Policy& policy() const { return *policy_; }
  std::uint64_t version() const { return policy_->version(); }
  explicit operator bool() const { return static_cast<bool>(policy_); }

 private:
  std::shared_ptr<const Policy> policy_;
};

}  // namespace spo
