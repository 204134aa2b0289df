#pragma once

#include <stdexcept>
#include <string>

namespace pararank {

/// Malformed input data: embedding files, corpus/QA records, index files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Corpus records that violate document invariants.
class IngestError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Checkpoint files that cannot be decoded into a model.
class CheckpointError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Shape or argument mismatches between tensors, parameters and inputs.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values produced during training or scoring.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pararank
