// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace kdx {

enum class ErrorCode {
  invalid_input,
  training_failure,
  io,
  config,
  undefined_improvement,
};

/// Exception type thrown by every kdx component. The code survives the C API
/// boundary as a status value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

const char* error_code_name(ErrorCode code) noexcept;

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::invalid_input, message);
}

}  // namespace kdx
