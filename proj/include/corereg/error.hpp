#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace corereg {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  ok = 0,
  config = 2,
  data = 3,
  numeric = 4,
};

/// Base class for every error raised by the library. Each error carries the
/// exit code the CLI should report for it.
class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ExitCode::config, "config error: " + what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ExitCode::data, "data error: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ExitCode::numeric, "numeric error: " + what) {}
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public DataError {
 public:
  DimensionError(std::size_t expected, std::size_t actual,
                 const std::string& where)
      : DataError("dimension mismatch at " + where + ": expected " +
                  std::to_string(expected) + ", got " +
                  std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class EmptyDatasetError : public DataError {
 public:
  explicit EmptyDatasetError(const std::string& where)
      : DataError("empty dataset: " + where) {}
};

class InsufficientExemplarsError : public DataError {
 public:
  InsufficientExemplarsError(std::size_t available, std::size_t requested)
      : DataError("insufficient exemplars: " + std::to_string(available) +
                  " eligible, " + std::to_string(requested) + " requested"),
        available_(available) {}

  std::size_t available() const noexcept { return available_; }

 private:
  std::size_t available_;
};

class SplitError : public DataError {
 public:
  explicit SplitError(const std::string& what) : DataError("split: " + what) {}
};

/// Raised when quantile bounds collapse into a zero-width group.
class DegeneratePartitionError : public NumericError {
 public:
  DegeneratePartitionError(double value, std::size_t group)
      : NumericError("degenerate partition: group " + std::to_string(group) +
                     " has zero width at duplicate delta " +
                     std::to_string(value)),
        value_(value) {}

  double value() const noexcept { return value_; }

 private:
  double value_;
};

}  // namespace corereg
