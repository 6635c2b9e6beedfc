#pragma once

#include <stdexcept>
#include <string>

namespace wdro {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed measures, unknown catalog ids, violated preconditions.
/// The CLI maps it to exit status 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine failed to reach its tolerance or detected an
/// ill-posed instance (singular Hessian, unbounded inner supremum, ...).
/// The CLI maps it to exit status 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace wdro
