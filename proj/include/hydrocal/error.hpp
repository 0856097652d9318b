#pragma once

#include <stdexcept>
#include <string>

namespace hydrocal {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally broken network description (unknown node, duplicate id, ...).
class NetworkError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix sizes that do not match the network / sensor layout.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input value outside its admissible range (negative demand, sigma < 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Friction law evaluated outside its validity range (Re < 4000).
class RegimeError : public Error {
 public:
  using Error::Error;
};

/// Evaluation at a point where the flow law is not differentiable (zero head loss).
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Iterative method failed to converge or produced non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Least-squares system too ill-conditioned to yield a Newton direction.
class DegeneracyError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Malformed input document.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace hydrocal
