#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedstl {

// Base of every error the library throws. The C API maps each subclass to a
// distinct status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// A temporal window or variable reference that does not fit the trace.
class RangeError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class MiningError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t param_index)
      : Error(what + " (parameter " + std::to_string(param_index) + ")"),
        param_index_(param_index) {}
  std::size_t param_index() const { return param_index_; }

 private:
  std::size_t param_index_;
};

}  // namespace fedstl
