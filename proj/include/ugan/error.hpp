#pragma once

#include <stdexcept>
#include <string>

namespace ugan {

// Base for every error raised by the library. The CLI maps UsageError
// subclasses to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input supplied by the caller: invalid flags, configs, datasets.
class UsageError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

class DatasetError : public UsageError {
 public:
  using UsageError::UsageError;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace ugan
