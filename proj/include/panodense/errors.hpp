#pragma once

#include <stdexcept>
#include <string>

namespace panodense {

enum class ErrorCategory { config, io, domain, ordering };

inline const char* to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::ordering: return "ordering";
  }
  return "unknown";
}

/// Base class for every error raised by the library. The category drives the
/// CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::domain, what) {}
};

class OrderingError : public Error {
 public:
  explicit OrderingError(const std::string& what) : Error(ErrorCategory::ordering, what) {}
};

}  // namespace panodense
