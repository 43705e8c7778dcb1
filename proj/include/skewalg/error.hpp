#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skewalg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression source; `offset` is the byte offset of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Unbound variable or a domain error (sqrt of a negative, log of a
/// non-positive number, division by zero, non-finite result).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Model file or object construction rejected.
class ModelError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Two independent routes to the same quantity disagree beyond tolerance.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Time integration failed; `time` is the time of the failing step.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double time)
      : Error(what + " at t=" + std::to_string(time)), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

}  // namespace skewalg
