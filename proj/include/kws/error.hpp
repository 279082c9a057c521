#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kws {

// Base of every error thrown by the toolkit. The CLI maps the subclasses
// onto process exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, bad arguments, mismatched model/spec.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad or missing input data (audio, manifests, labels, dimensions).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed binary container. Carries the byte offset where decoding failed.
class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// NaN/Inf during training or scoring.
class NumericError : public Error {
 public:
  using Error::Error;
};

enum class ExitCode : int { kSuccess = 0, kConfig = 2, kData = 3, kNumeric = 4 };

inline ExitCode exit_code(const Error& e) {
  if (dynamic_cast<const NumericError*>(&e)) return ExitCode::kNumeric;
  if (dynamic_cast<const DataError*>(&e)) return ExitCode::kData;
  return ExitCode::kConfig;
}

}  // namespace kws
