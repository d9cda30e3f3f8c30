#pragma once

#include <stdexcept>
#include <string>

namespace coneflow {

enum class ErrorCode {
  InvalidArgument,
  DegenerateBoundary,
  NonConvex,
  MixedSignature,
  MeshQuality,
  NotSpacelike,
  NonGraphical,
  BoundarySolve,
  ObliquenessLoss,
  StepFailure,
  ValidationFailed,
  NonConvergence,
  Existence,
  Config,
  Data,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorCode::InvalidArgument, what);
}

}  // namespace coneflow
