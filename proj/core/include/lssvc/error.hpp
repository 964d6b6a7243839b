#pragma once

#include <stdexcept>
#include <string>

namespace lssvc {

// Base for every failure raised by the library. Callers that only care about
// "something in lssvc went wrong" catch this; the subclasses below let tests
// and the CLI tell contract violations apart from numerical aborts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller handed in something that violates a precondition (shape, range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf surfaced during computation.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lssvc
