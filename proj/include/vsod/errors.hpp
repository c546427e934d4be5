#pragma once

#include <stdexcept>
#include <string>

namespace vsod {

// Every error the library raises derives from Error so that callers (the CLI
// in particular) can report a stable machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message) : Error("invalid-argument", message) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

class ResourceError : public Error {
 public:
  explicit ResourceError(const std::string& message) : Error("resource", message) {}
};

}  // namespace vsod
