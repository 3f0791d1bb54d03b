#pragma once

#include <stdexcept>
#include <string>

namespace advtext {

// Shape mismatch between tensor operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller violated an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input file or record.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A benchmark manifest entry that cannot be resolved.
class ManifestError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace advtext
