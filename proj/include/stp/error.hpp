// Copyright 2026 The STP Authors. Apache 2.0 License.
//
// Exception hierarchy shared by every module. The CLI maps these onto exit
// codes (config -> 2, io/format -> 3, numeric -> 4).

#pragma once

#include <stdexcept>
#include <string>

namespace stp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid user-facing configuration (odd kernel sizes, bad slots, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Reference to a node that is not on the tape.
class GraphError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, unsupported version, truncated payload).
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// Non-finite values showed up during a run.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace stp
