// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every module. The CLI maps DataError
// subclasses to exit code 2 and everything else to exit code 3.

#pragma once

#include <stdexcept>
#include <string>

namespace velopick {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidCurveError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class MissingFileError : public DataError {
 public:
  using DataError::DataError;
};

class DomainError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyPickError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace velopick
