#pragma once

#include <stdexcept>
#include <string>

namespace layoutgraph {

// Error taxonomy shared by the library and the CLI. Each category maps to a
// stable process exit code so callers can dispatch on failures mechanically.
class Error : public std::runtime_error {
public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

  int exit_code() const noexcept {
    if (category_ == "usage") return 2;
    if (category_ == "config") return 3;
    if (category_ == "io") return 4;
    if (category_ == "data") return 5;
    if (category_ == "checkpoint") return 6;
    return 7;
  }

private:
  std::string category_;
};

class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& message) : Error("data", message) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

class DataError : public Error {
public:
  explicit DataError(const std::string& message) : Error("data", message) {}
};

class CheckpointError : public Error {
public:
  explicit CheckpointError(const std::string& message) : Error("checkpoint", message) {}
};

class UsageError : public Error {
public:
  explicit UsageError(const std::string& message) : Error("usage", message) {}
};

}  // namespace layoutgraph
