#pragma once

#include <stdexcept>
#include <string>

namespace stir {

enum class ErrorKind {
  kInvalidInput,
  kDegenerateInput,
  kBackend,
  kCacheCorruption,
  kFormat,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InvalidInputError : Error {
  explicit InvalidInputError(const std::string& what) : Error(ErrorKind::kInvalidInput, what) {}
};

struct DegenerateInputError : Error {
  explicit DegenerateInputError(const std::string& what)
      : Error(ErrorKind::kDegenerateInput, what) {}
};

struct BackendError : Error {
  explicit BackendError(const std::string& what) : Error(ErrorKind::kBackend, what) {}
};

struct CacheCorruptionError : Error {
  explicit CacheCorruptionError(const std::string& what)
      : Error(ErrorKind::kCacheCorruption, what) {}
};

// Malformed serialized artifacts (graph containers, manifests, configs).
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::kFormat, what) {}
};

}  // namespace stir
