#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace twsc {

/// Malformed configuration text. Carries the 1-based line of the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& what)
      : std::runtime_error("config line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A configuration parsed fine but violates an invariant.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::runtime_error("invalid '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IngestionError : public std::runtime_error {
 public:
  IngestionError(std::string file, const std::string& what)
      : std::runtime_error(file + ": " + what), file_(std::move(file)) {}
  const std::string& file() const noexcept { return file_; }

 private:
  std::string file_;
};

/// Non-finite activation or gradient; names the layer where it appeared.
class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(std::string layer)
      : std::runtime_error("non-finite values in " + layer), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

class DegenerateInput : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape or argument mismatch between collaborating operations.
class ContractError : public std::logic_error {
  using std::logic_error::logic_error;
};

/// Raised when anything tries to move a gradient back across the inter-node link.
class FeedbackViolation : public std::logic_error {
  using std::logic_error::logic_error;
};

class TrainingFault : public std::runtime_error {
 public:
  TrainingFault(long step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class DivergenceError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace twsc
