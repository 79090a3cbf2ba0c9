#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace charmem {

// Base of every domain error (bad data, bad config, provider failure).
// The CLI maps anything derived from Error to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. line is 1-based; 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), message_(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t line_;
};

// Invalid configuration. path points at the offending key, e.g. "strategies[1]".
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class RosterError : public Error {
 public:
  using Error::Error;
};

class PerturbError : public Error {
 public:
  using Error::Error;
};

class PoolExhaustedError : public PerturbError {
 public:
  using PerturbError::PerturbError;
};

// Inverting a name map found text that does not match its bookkeeping.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class IncompleteDescriptionsError : public Error {
 public:
  explicit IncompleteDescriptionsError(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0, int attempts = 0)
      : Error(what), status_(status), attempts_(attempts) {}
  int status() const noexcept { return status_; }
  int attempts() const noexcept { return attempts_; }

 private:
  int status_;
  int attempts_;
};

// Authentication rejected or credentials missing; never retried.
class CredentialError : public TransportError {
 public:
  using TransportError::TransportError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace charmem
