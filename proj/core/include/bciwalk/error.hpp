#pragma once

#include <stdexcept>
#include <string>

namespace bciwalk {

/// Caller supplied arguments that violate an operation's preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input was well formed but too degenerate to process (e.g. every channel
/// rejected, a labeled segment too short to hold its trials).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file or message did not parse, or failed its checksum.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A live segment source ran dry before the session finished.
class SourceUnderrun : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bciwalk
