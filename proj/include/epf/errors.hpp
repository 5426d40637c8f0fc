#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace epf {

// Base of every error thrown by the toolkit. The pipeline attaches these to
// the failing cell and keeps going.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (also used for bad hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input file does not match the expected column layout.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::string column)
      : Error(what), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class DuplicateKeyError : public Error {
 public:
  using Error::Error;
};

// A single data row could not be parsed. Carries the 1-based file line.
class RowError : public Error {
 public:
  RowError(const std::string& what, std::size_t line) : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InsufficientHistoryError : public Error {
 public:
  InsufficientHistoryError(std::size_t required, std::size_t available)
      : Error("insufficient history: required " + std::to_string(required) + ", available " +
              std::to_string(available)),
        required_(required),
        available_(available) {}
  std::size_t required() const noexcept { return required_; }
  std::size_t available() const noexcept { return available_; }

 private:
  std::size_t required_;
  std::size_t available_;
};

// Issue-then-reveal ordering was violated by a caller.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Numeric precondition failures (non-finite losses, degenerate designs, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace epf
