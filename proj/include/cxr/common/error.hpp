#pragma once

#include <stdexcept>
#include <string>

namespace cxr {

// Base of every error thrown by the toolkit. The CLI maps these to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Data that is well-formed but unusable (empty corpus, zero batch, ...).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf reached a place that requires finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

// AUC and friends on a label set lacking positives or negatives.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cxr
