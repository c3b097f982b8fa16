#include "spo/env.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace spo {

namespace {

std::vector<double> build_table(const PrefixIndex& index, const TargetSetFamily& family) {
  if (family.accepting.empty()) throw InputError("target-set: accepting set must be non-empty");
  std::vector<double> table(index.sequence_count(), -1.0);
  for (const auto& seq : family.accepting) table[index.sequence_rank(seq)] = 0.0;
  return table;
}

std::vector<double> build_table(const PrefixIndex& index, const SuffixMatchFamily& family) {
  const auto n = static_cast<int>(family.pattern.size());
  if (n < 1 || n > index.horizon()) throw InputError("suffix-match: pattern length must be in [1, T]");
  for (Token a : family.pattern) {
    if (a < 0 || a >= index.vocab_size()) throw InputError("suffix-match: pattern token out of vocabulary");
  }
  std::vector<double> table(index.sequence_count());
  for (std::size_t rank = 0; rank < table.size(); ++rank) {
    const TokenSeq seq = index.sequence_at(rank);
    const bool match = std::equal(family.pattern.begin(), family.pattern.end(), seq.end() - n);
    table[rank] = match ? 0.0 : -1.0;
  }
  return table;
}

std::vector<double> build_table(const PrefixIndex& index, const SeededRandomFamily& family,
                                PromptId prompt) {
  if (!(family.success_rate >= 0.0 && family.success_rate <= 1.0)) {
    throw InputError("seeded-random: success_rate must lie in [0, 1]");
  }
  std::seed_seq seq{static_cast<std::uint32_t>(family.seed), static_cast<std::uint32_t>(family.seed >> 32),
                    static_cast<std::uint32_t>(index.vocab_size()), static_cast<std::uint32_t>(index.horizon()),
                    static_cast<std::uint32_t>(prompt)};
  std::mt19937_64 rng(seq);
  std::vector<double> table(index.sequence_count());
  for (auto& r : table) {
    // 53-bit uniform in [0, 1), identical on every platform.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    r = family.binary ? (u < family.success_rate ? 0.0 : -1.0) : -u;
  }
  return table;
}

}  // namespace

std::string family_name(const EnvFamily& family) {
  switch (family.index()) {
    case 0: return "target-set";
    case 1: return "suffix-match";
    default: return "seeded-random";
  }
}

SequenceEnv::SequenceEnv(int vocab_size, int horizon, std::vector<EnvFamily> prompts)
    : index_(vocab_size, horizon) {
  if (prompts.empty()) throw InputError("SequenceEnv: at least one prompt required");
  tables_.reserve(prompts.size());
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    tables_.push_back(std::visit(
        [&](const auto& fam) {
          using F = std::decay_t<decltype(fam)>;
          if constexpr (std::is_same_v<F, SeededRandomFamily>) {
            return build_table(index_, fam, p);
          } else {
            return build_table(index_, fam);
          }
        },
        prompts[p]));
  }
  finish_construction();
}

SequenceEnv::SequenceEnv(int vocab_size, int horizon, std::size_t prompt_count, const RewardFn& fn)
    : index_(vocab_size, horizon) {
  if (prompt_count == 0) throw InputError("SequenceEnv: at least one prompt required");
  tables_.assign(prompt_count, std::vector<double>(index_.sequence_count()));
  for (std::size_t p = 0; p < prompt_count; ++p) {
    for (std::size_t rank = 0; rank < index_.sequence_count(); ++rank) {
      tables_[p][rank] = fn(p, index_.sequence_at(rank));
    }
  }
  finish_construction();
}

void SequenceEnv::finish_construction() {
  binary_ = true;
  for (const auto& table : tables_) {
    for (double r : table) {
      if (!(r >= -1.0 && r <= 0.0)) throw InputError("SequenceEnv: rewards must lie in [-1, 0]");
      if (r != 0.0 && r != -1.0) binary_ = false;
    }
  }
}

void SequenceEnv::validate_prompt(PromptId prompt) const {
  if (prompt >= tables_.size()) throw InputError("SequenceEnv: unknown prompt " + std::to_string(prompt));
}

void SequenceEnv::validate_tokens(TokenSpan tokens) const {
  if (static_cast<int>(tokens.size()) != horizon()) {
    throw InputError("SequenceEnv: expected " + std::to_string(horizon()) + " tokens, got " +
                     std::to_string(tokens.size()));
  }
  for (Token a : tokens) {
    if (a < 0 || a >= vocab_size()) throw InputError("SequenceEnv: token " + std::to_string(a) + " out of vocabulary");
  }
}

double SequenceEnv::reward(PromptId prompt, TokenSpan tokens) const {
  validate_prompt(prompt);
  validate_tokens(tokens);
  return tables_[prompt][index_.sequence_rank(tokens)];
}

std::vector<std::pair<TokenSeq, double>> SequenceEnv::enumerate(PromptId prompt) const {
  validate_prompt(prompt);
  std::vector<std::pair<TokenSeq, double>> out;
  out.reserve(index_.sequence_count());
  for_each_sequence(prompt, [&](TokenSeq seq, double r) { out.emplace_back(std::move(seq), r); });
  return out;
}

}  // namespace spo
