#pragma once

#include <stdexcept>

namespace dastack {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix or batch dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its documented range (negative bandwidth, label out
/// of range, progress outside [0,1], ...).
class InvalidParameterError : public Error {
 public:
  using Error::Error;
};

/// Input is structurally valid but too small or too uniform to work with
/// (covariance of a single row, evaluation of an empty set, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A numeric procedure failed: iteration cap without convergence, non-finite
/// loss, failed linear solve.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Class-conditional discrepancy found no class present in both domains.
class NoOverlappingClassError : public Error {
 public:
  using Error::Error;
};

/// A group is larger than any split could hold.
class InfeasibleSplitError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV or checkpoint content.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// The requested experiment is inconsistent with the stacking protocol
/// (empty validation split, missing labels, wrong base count, ...).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration outside the protocol itself: unknown files, bad keys,
/// unsupported checkpoint versions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dastack
