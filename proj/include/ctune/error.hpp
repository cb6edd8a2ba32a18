#pragma once

#include <stdexcept>
#include <string>

namespace ctune {

// Every error raised by the library derives from Error. The CLI maps IoError
// to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// Raised when training produces a non-finite loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// A persisted artifact does not match the structure it is loaded into.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctune
