#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace drnn {

// Root of the error hierarchy. The CLI maps the three families below onto
// exit codes 2 (validation), 3 (I/O) and 4 (numerical).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class RankDeficiencyError : public NumericalError {
 public:
  RankDeficiencyError(const std::string& what, std::size_t column)
      : NumericalError(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::size_t iteration,
                  std::vector<double> trace_prefix)
      : NumericalError(what),
        iteration_(iteration),
        trace_prefix_(std::move(trace_prefix)) {}
  std::size_t iteration() const noexcept { return iteration_; }
  const std::vector<double>& trace_prefix() const noexcept {
    return trace_prefix_;
  }

 private:
  std::size_t iteration_;
  std::vector<double> trace_prefix_;
};

class BandwidthError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class FileNotFoundError : public IoError {
 public:
  using IoError::IoError;
};

class MissingColumnError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NoUsableRowsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateColumnError : public ValidationError {
 public:
  DegenerateColumnError(const std::string& what, std::string column)
      : ValidationError(what), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

}  // namespace drnn
