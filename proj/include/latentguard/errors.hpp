#pragma once

#include <stdexcept>
#include <string>

namespace latentguard {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Raised when a computation produces or receives a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A parameter required by a training step is missing from the model.
class LifecycleError : public Error {
 public:
  using Error::Error;
};

class StreamStalledError : public Error {
 public:
  using Error::Error;
};

class SearchFailedError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace latentguard
