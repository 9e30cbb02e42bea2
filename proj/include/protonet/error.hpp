#pragma once

#include <stdexcept>
#include <string>

namespace protonet {

// Base of every error the library raises. Subclasses name the failure class
// so callers (and the CLI) can react without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not compose.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition on the caller was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation (log of a
// non-positive value, sqrt of a negative value).
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf appeared in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Input for which the quantity is undefined, e.g. cosine of a zero vector.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace protonet
