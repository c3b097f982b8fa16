#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "spo/prefix_index.hpp"
#include "spo/types.hpp"

namespace spo {

/// Success iff the full sequence is one of an explicit list.
struct TargetSetFamily {
  std::vector<TokenSeq> accepting;
};

/// Success iff the sequence ends with `pattern`.
struct SuffixMatchFamily {
  TokenSeq pattern;
};

/// Reward table drawn from a seed. Binary tables succeed with probability
/// `success_rate` per sequence; non-binary tables are uniform on [-1, 0].
struct SeededRandomFamily {
  std::uint64_t seed = 0;
  double success_rate = 0.25;
  bool binary = true;
};

using EnvFamily = std::variant<TargetSetFamily, SuffixMatchFamily, SeededRandomFamily>;

std::string family_name(const EnvFamily& family);

/// Fixed-horizon token environment with a deterministic terminal reward in
/// [-1, 0]. Every prompt's reward table is materialized at construction, so
/// the object is immutable and freely shareable across threads.
class SequenceEnv {
 public:
  using RewardFn = std::function<double(PromptId, TokenSpan)>;

  /// One family per prompt.
  SequenceEnv(int vocab_size, int horizon, std::vector<EnvFamily> prompts);
  /// Arbitrary deterministic reward; `fn` is evaluated once per sequence.
  SequenceEnv(int vocab_size, int horizon, std::size_t prompt_count, const RewardFn& fn);

  int vocab_size() const { return index_.vocab_size(); }
  int horizon() const { return index_.horizon(); }
  std::size_t prompt_count() const { return tables_.size(); }
  const PrefixIndex& index() const { return index_; }

  double reward(PromptId prompt, TokenSpan tokens) const;
  /// Reward by lexicographic sequence rank.
  double reward_at(PromptId prompt, std::size_t rank) const { return tables_.at(prompt)[rank]; }
  const std::vector<double>& reward_table(PromptId prompt) const { return tables_.at(prompt); }

  /// Every sequence exactly once, lexicographic order.
  template <typename Visitor>
  void for_each_sequence(PromptId prompt, Visitor&& visit) const {
    const auto& table = tables_.at(prompt);
    for (std::size_t rank = 0; rank < table.size(); ++rank) visit(index_.sequence_at(rank), table[rank]);
  }
  std::vector<std::pair<TokenSeq, double>> enumerate(PromptId prompt) const;

  /// True when every reward is exactly 0 or -1.
  bool is_binary() const { return binary_; }

  void validate_tokens(TokenSpan tokens) const;
  void validate_prompt(PromptId prompt) const;

 private:
  void finish_construction();

  PrefixIndex index_;
  std::vector<std::vector<double>> tables_;
  bool binary_ = true;
};

}  // namespace spo
