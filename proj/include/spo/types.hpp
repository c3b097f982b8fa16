#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spo {

using Token = int;
using TokenSeq = std::vector<Token>;
using TokenSpan = std::span<const Token>;
using PromptId = std::size_t;

// Error taxonomy shared by all modules.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Largest per-prompt sequence space that enumeration-based code will accept.
inline constexpr std::uint64_t kEnumerationBudget = 1'000'000;

}  // namespace spo
