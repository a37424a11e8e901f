#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace headprune {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Two objects that must agree on head count (or input width) do not.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Hyperparameters or bounds that cannot be satisfied.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Input data is structurally valid but unusable (empty groups, zero tokens, degenerate targets).
class DataError : public Error {
public:
  using Error::Error;
};

/// A value lies outside its documented domain, e.g. toxicity outside [0,1].
class ValidationError : public DataError {
public:
  using DataError::DataError;
};

/// The bounded neighborhood of a state is empty.
class NeighborhoodError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when one applies (0 otherwise).
class ParseError : public Error {
public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(format(source, line, what)), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  static std::string format(const std::string& source, std::size_t line, const std::string& what) {
    std::string out = source;
    if (line > 0) out += ":" + std::to_string(line);
    out += ": " + what;
    return out;
  }

  std::size_t line_;
};

} // namespace headprune
