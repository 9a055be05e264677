#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sncbf {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Pointwise evaluation hit an undefined operation (division by zero).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Interval evaluation cannot proceed on this box; the caller should bisect.
class SplitRequired : public Error {
 public:
  using Error::Error;
};

// Configuration or model file does not match its schema.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sncbf
