#pragma once

#include <stdexcept>
#include <string>

namespace travag {

/// Malformed input content (CSV/TSV/JSON). Messages carry file/line context
/// where the parser has it.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An operation that needs a non-empty log received an empty one.
class EmptyLogError : public std::runtime_error {
 public:
  explicit EmptyLogError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric domain violation or a non-finite value that must not propagate.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training aborted: the loss became non-finite.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

/// The privacy target cannot be met inside the noise-multiplier bracket.
class CalibrationError : public std::runtime_error {
 public:
  explicit CalibrationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Run configuration violates the schema. Reported field by field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace travag
