#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nidda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Malformed input text: wrong column count, bad UTF-8, unreadable file.
class ParseError : public Error {
 public:
  ParseError(std::string what, std::size_t line, std::size_t column = 0)
      : Error(std::move(what)), line_(line), column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// A numeric column failed to parse, or a label is unknown.
class EncodeError : public Error {
 public:
  EncodeError(std::string what, std::size_t column)
      : Error(std::move(what)), column_(column) {}
  std::size_t column() const noexcept { return column_; }
  const char* kind() const noexcept override { return "encode"; }

 private:
  std::size_t column_;
};

class LabelError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "label"; }
};

/// Invalid distribution parameter or argument outside an operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

/// Adversarial training produced a non-finite or exploding objective.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string what, std::string history_path = {})
      : Error(std::move(what)), history_path_(std::move(history_path)) {}
  const std::string& history_path() const noexcept { return history_path_; }
  void set_history_path(std::string p) { history_path_ = std::move(p); }
  const char* kind() const noexcept override { return "divergence"; }

 private:
  std::string history_path_;
};

/// Missing prerequisite artifact or invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

}  // namespace nidda
