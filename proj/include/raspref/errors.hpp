#pragma once

#include <stdexcept>

namespace raspref {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A documented precondition was violated by the caller.
struct Precondition : Error {
  using Error::Error;
};

// Vector math / index
struct DimensionMismatch : Error {
  using Error::Error;
};
struct ZeroVector : Error {
  using Error::Error;
};

// Scoring
struct InsufficientSamples : Error {
  using Error::Error;
};
struct MissingScore : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct OutOfRange : Error {
  using Error::Error;
};
struct ZeroWeightSum : Error {
  using Error::Error;
};

// Prompt editing
struct InvalidEditIndex : Error {
  using Error::Error;
};

// Trajectory store
struct StorageFailure : Error {
  using Error::Error;
};

// Model backend
struct BackendUnavailable : Error {
  using Error::Error;
};
struct EmptyCompletion : Error {
  using Error::Error;
};
struct UnparsableScore : Error {
  using Error::Error;
};
struct UnparsableEdits : Error {
  using Error::Error;
};

// Datasets / config files
struct ParseError : Error {
  using Error::Error;
};
struct MissingField : Error {
  using Error::Error;
};

}  // namespace raspref
