#pragma once

#include <stdexcept>
#include <string>

namespace pertucker {

/// Caller supplied something malformed: bad shape, mode out of range, infeasible ranks.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well-formed but numerically degenerate (e.g. rank deficient).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model invariant does not hold at the point an operation requires it.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite value produced or encountered.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file or stream.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ArgumentError(what);
}

}  // namespace detail
}  // namespace pertucker
