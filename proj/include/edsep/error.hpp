#pragma once

#include <stdexcept>
#include <string>

namespace edsep {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition or shape violation on a call.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf appeared where the math guarantees finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace edsep
