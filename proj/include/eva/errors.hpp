#pragma once

#include <stdexcept>
#include <string>

namespace eva {

struct EvaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Generator configuration has an empty or inverted range.
struct InvalidParams : EvaError {
  using EvaError::EvaError;
};

// Query generation asked for a video with no events.
struct NoEvents : EvaError {
  using EvaError::EvaError;
};

// An observation timestamp lies outside the video.
struct OutOfRange : EvaError {
  using EvaError::EvaError;
};

struct EmptyCorpus : EvaError {
  using EvaError::EvaError;
};

struct SingleLabelCorpus : EvaError {
  using EvaError::EvaError;
};

struct EmptyPool : EvaError {
  using EvaError::EvaError;
};

// sah_ratio with in_acc == 1.
struct DegenerateDenominator : EvaError {
  using EvaError::EvaError;
};

struct ActionNotInSpace : EvaError {
  using EvaError::EvaError;
};

// Chat endpoint unreachable or malformed after all retries.
struct ExternalEndpointError : EvaError {
  using EvaError::EvaError;
};

struct NoToolRounds : EvaError {
  using EvaError::EvaError;
};

struct ConfigError : EvaError {
  using EvaError::EvaError;
};

}  // namespace eva
