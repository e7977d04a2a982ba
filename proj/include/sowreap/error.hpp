#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sowreap {

// Malformed external input (tree bracketing, dependency lines, JSON records).
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit FormatError(const std::string& what) : std::runtime_error(what), offset_(0) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// A caller broke an operation's precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Training or inference produced a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SOWREAP_REQUIRE(cond, msg)                        \
  do {                                                    \
    if (!(cond)) throw ::sowreap::ContractViolation(msg); \
  } while (0)

}  // namespace sowreap
