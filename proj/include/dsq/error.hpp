#pragma once

#include <stdexcept>
#include <string>

namespace dsq {

/// Malformed arguments or data. Maps to CLI exit code 1.
class InvalidInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing external tooling or artifacts (codec binaries, embedding stores). Exit code 2.
class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loudness could not be measured because every gating block was gated out.
class Unmeasurable : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

}  // namespace dsq
