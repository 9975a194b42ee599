#pragma once

#include <stdexcept>
#include <string>

namespace metsyn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or violated preconditions.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Run configuration failed schema validation.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Missing, unreadable or malformed input files, including manifest hash mismatches.
class InputError : public Error {
public:
  using Error::Error;
};

/// Divergence or non-finite values.
class NumericError : public Error {
public:
  using Error::Error;
};

/// A rejection-sampling loop ran out of attempts.
class ExhaustedError : public Error {
public:
  using Error::Error;
};

} // namespace metsyn
