#pragma once

#include <stdexcept>
#include <string>

namespace mlml {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input is too close to zero (or otherwise degenerate) for the operation.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A numeric evaluation produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or checkpoint file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid synthetic spec or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The sampler could not produce a valid group or batch.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// A group had an empty positive or negative set.
class DegenerateGroupError : public SamplingError {
 public:
  using SamplingError::SamplingError;
};

/// Training aborted (non-finite loss or gradient, sampler exhaustion).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace mlml
