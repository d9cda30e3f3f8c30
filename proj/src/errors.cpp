#include "errors.hpp"

namespace coneflow {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::DegenerateBoundary: return "degenerate-boundary";
    case ErrorCode::NonConvex: return "non-convex";
    case ErrorCode::MixedSignature: return "mixed-signature";
    case ErrorCode::MeshQuality: return "mesh-quality";
    case ErrorCode::NotSpacelike: return "not-spacelike";
    case ErrorCode::NonGraphical: return "non-graphical";
    case ErrorCode::BoundarySolve: return "boundary-solve";
    case ErrorCode::ObliquenessLoss: return "obliqueness-loss";
    case ErrorCode::StepFailure: return "step-failure";
    case ErrorCode::ValidationFailed: return "validation-failed";
    case ErrorCode::NonConvergence: return "non-convergence";
    case ErrorCode::Existence: return "existence";
    case ErrorCode::Config: return "config";
    case ErrorCode::Data: return "data";
  }
  return "unknown";
}

}  // namespace coneflow
