#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dialogsim {

/// Base class for every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line` and `column` are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column = 0)
      : Error(format(message, line, column)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& message, std::size_t line, std::size_t column) {
    if (line == 0) return message;
    std::string out = "line " + std::to_string(line);
    if (column != 0) out += ", column " + std::to_string(column);
    return out + ": " + message;
  }

  std::size_t line_;
  std::size_t column_;
};

/// A schema bundle that fails validation (dangling reference, duplicate name, ...).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A `$var` reference that does not resolve to an earlier definition.
class ReferenceError : public ParseError {
 public:
  ReferenceError(const std::string& var, std::size_t line)
      : ParseError("unresolved reference $" + var, line), var_(var) {}
  const std::string& var() const noexcept { return var_; }

 private:
  std::string var_;
};

class SamplerError : public Error {
 public:
  using Error::Error;
};

class RealizationError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

enum class Severity { warning, error };

struct Diagnostic {
  Severity severity = Severity::error;
  std::string location;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

inline std::string to_string(const Diagnostic& d) {
  std::string out = d.severity == Severity::error ? "error" : "warning";
  if (!d.location.empty()) out += " [" + d.location + "]";
  return out + ": " + d.message;
}

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags)
    if (d.severity == Severity::error) return true;
  return false;
}

}  // namespace dialogsim
