// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace abench {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// exit codes, so each class corresponds to one failure category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside its documented valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Array dimensions disagree between two arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input data cannot be processed (degenerate image, empty ROI, bad file).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numeric transform or optimization produced non-finite values.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace abench
