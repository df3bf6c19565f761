#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace raoc {

// Error classes map one-to-one onto the CLI's machine-readable error tags.
enum class ErrorClass { kData, kConfig, kNumeric, kIo };

std::string_view to_string(ErrorClass cls);

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorClass::kData, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorClass::kConfig, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorClass::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorClass::kIo, what) {}
};

// Raised when a density or threshold cannot be fitted from the data at hand.
class CalibrationError : public DataError {
 public:
  explicit CalibrationError(const std::string& what) : DataError(what) {}
};

}  // namespace raoc
