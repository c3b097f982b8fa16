#include "spo/prefix_index.hpp"

#include <limits>

namespace spo {

std::uint64_t saturating_power(std::uint64_t base, int exponent) {
  std::uint64_t result = 1;
  for (int i = 0; i < exponent; ++i) {
    if (base != 0 && result > std::numeric_limits<std::uint64_t>::max() / base) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    result *= base;
  }
  return result;
}

PrefixIndex::PrefixIndex(int vocab_size, int horizon) : vocab_(vocab_size), horizon_(horizon) {
  if (vocab_size < 1 || horizon < 1) throw InputError("PrefixIndex: vocab and horizon must be positive");
  if (saturating_power(vocab_size, horizon) > kEnumerationBudget) {
    throw CapacityError("PrefixIndex: V^T exceeds the enumeration budget");
  }
  offsets_.assign(horizon + 2, 0);
  std::size_t level = 1;
  for (int t = 0; t <= horizon; ++t) {
    offsets_[t + 1] = offsets_[t] + level;
    level *= static_cast<std::size_t>(vocab_size);
  }
}

std::size_t PrefixIndex::id(TokenSpan prefix) const {
  const int depth = static_cast<int>(prefix.size());
  if (depth > horizon_) throw InputError("PrefixIndex: prefix longer than horizon");
  std::size_t code = 0;
  for (Token a : prefix) {
    if (a < 0 || a >= vocab_) throw InputError("PrefixIndex: token out of vocabulary");
    code = code * vocab_ + a;
  }
  return offsets_[depth] + code;
}

int PrefixIndex::depth_of(std::size_t id) const {
  if (id >= size()) throw InputError("PrefixIndex: id out of range");
  int depth = 0;
  while (offsets_[depth + 1] <= id) ++depth;
  return depth;
}

TokenSeq PrefixIndex::tokens_of(std::size_t id) const {
  const int depth = depth_of(id);
  std::size_t code = id - offsets_[depth];
  TokenSeq out(depth);
  for (int t = depth - 1; t >= 0; --t) {
    out[t] = static_cast<Token>(code % vocab_);
    code /= vocab_;
  }
  return out;
}

std::size_t PrefixIndex::sequence_rank(TokenSpan tokens) const {
  if (static_cast<int>(tokens.size()) != horizon_) throw InputError("PrefixIndex: sequence length != horizon");
  return id(tokens) - offsets_[horizon_];
}

TokenSeq PrefixIndex::sequence_at(std::size_t rank) const { return tokens_of(offsets_[horizon_] + rank); }

}  // namespace spo
