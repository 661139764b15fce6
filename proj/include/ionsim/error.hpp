#pragma once

#include <stdexcept>
#include <string>

namespace ionsim {

enum class ErrorCode {
  InvalidInput,
  SolverFailure,
  UnstableConfiguration,
  ConvergenceFailure,
  AccuracyLoss,
  InvalidCalibration,
  UnphysicalEscape,
  DegenerateFit,
  SamplingError,
  DomainError,
  IncompleteData,
  JoinFailure,
  OptimizationFailure,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::SolverFailure: return "solver-failure";
    case ErrorCode::UnstableConfiguration: return "linear-configuration-unstable";
    case ErrorCode::ConvergenceFailure: return "convergence";
    case ErrorCode::AccuracyLoss: return "accuracy";
    case ErrorCode::InvalidCalibration: return "invalid-calibration";
    case ErrorCode::UnphysicalEscape: return "unphysical-escape";
    case ErrorCode::DegenerateFit: return "degenerate-fit";
    case ErrorCode::SamplingError: return "sampling";
    case ErrorCode::DomainError: return "domain";
    case ErrorCode::IncompleteData: return "incomplete-data";
    case ErrorCode::JoinFailure: return "join-failure";
    case ErrorCode::OptimizationFailure: return "optimization";
    case ErrorCode::IoError: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }
  const char* code_name() const { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace ionsim
