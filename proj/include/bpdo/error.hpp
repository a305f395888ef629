#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bpdo {

/// Root of every error the library throws. The CLI maps usage problems to
/// exit code 2 and everything deriving from Error to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Annotation text that cannot be parsed. `line()` is 1-based, 0 when the
/// problem is not tied to a single line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DegenerateComponent : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace bpdo
