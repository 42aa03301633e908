#pragma once

#include <stdexcept>
#include <string>

namespace hdsurv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input violates a documented invariant (negative time, duplicate id, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: rank deficiency, undefined statistic, failed fit.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete pipeline configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hdsurv
