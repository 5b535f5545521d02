#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sempipes {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " at line " + std::to_string(line) + ", column " +
              std::to_string(column)),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class TypeError : public Error {
 public:
  using Error::Error;
};

class JoinError : public Error {
 public:
  using Error::Error;
};

// Raised by the DSL interpreter when a sandbox budget runs out.
class LimitExceeded : public Error {
 public:
  explicit LimitExceeded(std::string limit)
      : Error("resource limit exceeded: " + limit), limit_(std::move(limit)) {}
  const std::string& limit() const { return limit_; }

 private:
  std::string limit_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class SchemaDriftError : public Error {
 public:
  explicit SchemaDriftError(std::vector<std::string> missing)
      : Error(build_message(missing)), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing_columns() const { return missing_; }

 private:
  static std::string build_message(const std::vector<std::string>& missing) {
    std::string msg = "schema drift: missing columns";
    for (const auto& m : missing) msg += " '" + m + "'";
    return msg;
  }
  std::vector<std::string> missing_;
};

/// Network-level failure talking to a synthesizer endpoint.
class TransportError : public Error {
 public:
  using Error::Error;
};

class AuthError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// The synthesizer replied, but no program could be extracted from the reply.
class ExtractionError : public Error {
 public:
  using Error::Error;
};

class SearchError : public Error {
 public:
  using Error::Error;
};

}  // namespace sempipes
