#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hetfx {

// Every error raised by the library derives from Error so callers can catch
// one type; the CLI maps the concrete kinds onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A required CSV column is absent.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::string column)
      : Error(what), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

// A cell holds a value the model cannot accept. `row` is 1-based and counts
// data rows (the header is row 0).
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t row) : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class SingularDesign : public Error {
 public:
  using Error::Error;
};

// All kernel weights at an evaluation point are zero.
class EmptyNeighborhood : public Error {
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

}  // namespace hetfx
