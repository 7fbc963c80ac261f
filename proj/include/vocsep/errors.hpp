// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace vocsep {

// Base of every exception thrown by the library. The CLI maps the concrete
// subclasses onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed or unsupported WAV content.
class WavError : public IoError {
 public:
  enum class Kind { kMalformedHeader, kUnsupportedEncoding, kTruncatedData };

  WavError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Raised when a signal has no block surviving the loudness gates, so that no
// normalization gain can be derived from it.
class ImmeasurableLoudnessError : public Error {
 public:
  using Error::Error;
};

class WeightsError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace vocsep
