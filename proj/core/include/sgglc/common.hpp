#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sgglc {

using i64 = std::int64_t;

// Base error class; subclasses distinguish contract violations from I/O and
// numeric failures so callers can map them to exit codes / messages.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error("format: " + msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

// Raised when a primitive produces a non-finite value while debug checks are
// enabled. Primitives never propagate NaN/Inf silently in that mode.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

// Debug-mode finite checks on primitive outputs. Defaults to on in debug
// builds, off in release; tests flip it explicitly.
inline bool& debug_checks() {
#ifdef NDEBUG
  static bool enabled = false;
#else
  static bool enabled = true;
#endif
  return enabled;
}

}  // namespace sgglc
