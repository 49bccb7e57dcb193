#pragma once

#include <stdexcept>
#include <string>

namespace swav {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible matrix or vector shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration value or malformed config file.
struct ConfigError : Error {
  using Error::Error;
};

// Overflow, divergence or non-finite values inside a numeric routine.
struct NumericError : Error {
  using Error::Error;
};

// Input outside an operation's domain (zero-norm rows and the like).
struct DegenerateInputError : Error {
  using Error::Error;
};

// File format or I/O failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace swav
