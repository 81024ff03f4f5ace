#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlfuzz {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments: out-of-range orders, malformed matrices, grid mismatches.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A special-function request outside the region where accuracy is guaranteed.
class AccuracyError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset, std::vector<std::string> expected)
      : Error(message), offset_(offset), expected_(std::move(expected)) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

// An operation produced inf or NaN from finite inputs (overflow).
class NonFiniteResult : public EvalError {
 public:
  using EvalError::EvalError;
};

// Failures of the time integrators. Mapped to exit status 3 by the CLI.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class OrderingViolation : public NumericalError {
 public:
  OrderingViolation(const std::string& message, double t) : NumericalError(message), t_(t) {}
  double time() const noexcept { return t_; }

 private:
  double t_;
};

class NonFiniteError : public NumericalError {
 public:
  NonFiniteError(const std::string& message, double t) : NumericalError(message), t_(t) {}
  double time() const noexcept { return t_; }

 private:
  double t_;
};

class UnsupportedMatrix : public Error {
 public:
  using Error::Error;
};

// Certificates that do not apply to the given data. These are not system
// failures; the harness reports them as "not applicable".
class NotApplicable : public Error {
 public:
  using Error::Error;
};

class NotHurwitz : public NotApplicable {
 public:
  using NotApplicable::NotApplicable;
};

class GainTooLarge : public NotApplicable {
 public:
  using NotApplicable::NotApplicable;
};

class ConverseNotApplicable : public NotApplicable {
 public:
  using NotApplicable::NotApplicable;
};

// Schema or I/O problems with a configuration document.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& file, int line, const std::string& message)
      : Error(format(file, line, message)), file_(file), line_(line) {}

  const std::string& file() const noexcept { return file_; }
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& file, int line, const std::string& message) {
    std::string out = file.empty() ? std::string("<config>") : file;
    if (line > 0) out += ":" + std::to_string(line);
    return out + ": " + message;
  }

  std::string file_;
  int line_;
};

}  // namespace mlfuzz
