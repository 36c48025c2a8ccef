#pragma once

#include <stdexcept>
#include <string>

namespace talbot
{

/// Base for all errors raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Precondition violation: an argument lies outside the operation's domain.
class DomainError : public Error
{
public:
  using Error::Error;
};

/// Inconsistent, missing or unusable data (images, sidecars, fits).
class DataError : public Error
{
public:
  using Error::Error;
};

/// A numerical check failed (imaginary residue, rank deficiency, ...).
class NumericalError : public Error
{
public:
  using Error::Error;
};

/// Invalid run configuration; carries the offending line when known.
class ConfigError : public Error
{
public:
  explicit ConfigError(const std::string& message, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), mLine(line)
  {
  }

  int line() const { return mLine; }

private:
  int mLine;
};

} // namespace talbot
