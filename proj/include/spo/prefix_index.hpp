#pragma once

#include <cstdint>

#include "spo/types.hpp"

namespace spo {

/// Dense numbering of every prefix of length 0..T over a V-ary alphabet.
///
/// Prefixes of depth t occupy the contiguous block [offset(t), offset(t) + V^t),
/// ordered lexicographically, so a child id is computable from its parent id
/// without hashing.
class PrefixIndex {
 public:
  PrefixIndex() = default;
  PrefixIndex(int vocab_size, int horizon);

  int vocab_size() const { return vocab_; }
  int horizon() const { return horizon_; }

  /// Number of prefixes of every depth 0..T.
  std::size_t size() const { return offsets_.back(); }
  /// Number of prefixes with depth < T (the ones that own a next-token row).
  std::size_t interior_size() const { return offsets_[horizon_]; }
  /// V^T.
  std::size_t sequence_count() const { return level_size(horizon_); }

  std::size_t offset(int depth) const { return offsets_[depth]; }
  std::size_t level_size(int depth) const { return offsets_[depth + 1] - offsets_[depth]; }

  std::size_t id(TokenSpan prefix) const;
  std::size_t child(std::size_t parent, int parent_depth, Token next) const {
    return offsets_[parent_depth + 1] + (parent - offsets_[parent_depth]) * vocab_ + next;
  }
  int depth_of(std::size_t id) const;
  TokenSeq tokens_of(std::size_t id) const;

  /// Lexicographic rank of a full-length sequence.
  std::size_t sequence_rank(TokenSpan tokens) const;
  TokenSeq sequence_at(std::size_t rank) const;

 private:
  int vocab_ = 0;
  int horizon_ = 0;
  std::vector<std::size_t> offsets_{0};
};

/// V^T with overflow saturation; used by the enumerability budget check.
std::uint64_t saturating_power(std::uint64_t base, int exponent);

}  // namespace spo
