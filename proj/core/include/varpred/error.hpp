#pragma once

#include <stdexcept>
#include <string>

namespace varpred {

// Base of every error raised by the library. The CLI maps ConfigError and
// ArgumentError to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Pair sampling could not satisfy the minimum gap.
class SamplingError : public Error {
 public:
  using Error::Error;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class PersistenceError : public Error {
 public:
  using Error::Error;
};

class ModelKindError : public PersistenceError {
 public:
  using PersistenceError::PersistenceError;
};

// A command asked a model for something it cannot provide, e.g. the
// FactorVAE metric on a checkpoint without an encoder.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class DegenerateEncoderError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace varpred
