#pragma once

#include <stdexcept>
#include <string>

namespace sepformer {

// Shape or dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Signal shorter than the encoder kernel.
class InputTooShortError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Sequence longer than a length-bound attention variant supports.
class SequenceTooLongError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Metric target with zero energy after mean removal.
class UndefinedTargetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed file contents (WAV, checkpoint, CSV).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration key, value, or combination.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sepformer
