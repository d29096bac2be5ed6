#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace augflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A dataset line that cannot be parsed or violates the one-turn invariant.
class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& what)
      : Error("malformed record at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A validation-split sample (or its content) was about to reach training data.
class ValidationLeak : public Error {
 public:
  using Error::Error;
};

class DuplicateId : public Error {
 public:
  explicit DuplicateId(const std::string& id) : Error("duplicate sample id: " + id), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

/// Retryable transport failure (connection error, 429, 5xx). Thrown after
/// the retry budget is exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Non-retryable provider rejection (4xx other than 429).
class ProviderRejected : public Error {
 public:
  ProviderRejected(int status, const std::string& body)
      : Error("provider rejected request with status " + std::to_string(status) + ": " + body),
        status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Model output contained no parseable JSON (or JSON of the wrong shape).
class MalformedOutput : public Error {
 public:
  using Error::Error;
};

/// Replay provider has no fixture for the request digest.
class ReplayMiss : public Error {
 public:
  explicit ReplayMiss(const std::string& digest)
      : Error("no replay fixture for request digest " + digest), digest_(digest) {}
  const std::string& digest() const noexcept { return digest_; }

 private:
  std::string digest_;
};

class NoAnswerFound : public Error {
 public:
  using Error::Error;
};

class HookFailed : public Error {
 public:
  HookFailed(int exit_code, std::string stderr_tail)
      : Error("fine-tune hook exited with code " + std::to_string(exit_code) + ": " + stderr_tail),
        exit_code_(exit_code),
        stderr_tail_(std::move(stderr_tail)) {}
  int exit_code() const noexcept { return exit_code_; }
  const std::string& stderr_tail() const noexcept { return stderr_tail_; }

 private:
  int exit_code_;
  std::string stderr_tail_;
};

class HookProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace augflow
