#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace regionkit {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateBoxError : public Error {
 public:
  using Error::Error;
};

class InvalidRegionError : public Error {
 public:
  using Error::Error;
};

/// A `<Region>` opener whose body does not parse. Carries the byte span.
class MarkupError : public Error {
 public:
  MarkupError(const std::string& what, std::size_t begin, std::size_t end)
      : Error(what), begin_(begin), end_(end) {}
  std::size_t begin() const { return begin_; }
  std::size_t end() const { return end_; }

 private:
  std::size_t begin_;
  std::size_t end_;
};

class ConversionError : public Error {
 public:
  using Error::Error;
};

class ContextError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseFailure : public Error {
 public:
  using Error::Error;
};

/// Network-level failure, or retries exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Non-retryable HTTP status from the chat-completion service.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& body_excerpt)
      : Error("service returned HTTP " + std::to_string(status) + ": " +
              body_excerpt),
        status_(status),
        body_excerpt_(body_excerpt) {}
  int status() const { return status_; }
  const std::string& body_excerpt() const { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class ProviderContractError : public EvaluationError {
 public:
  using EvaluationError::EvaluationError;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace regionkit
