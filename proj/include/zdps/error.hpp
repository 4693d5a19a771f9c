#pragma once

#include <stdexcept>
#include <string>

namespace zdps {

enum class ErrorCode {
  ArityMismatch,
  UnknownColumn,
  UnknownId,
  Stuck,
  CyclicSwitch,
  IllTimedSwitch,
  NoSnapshot,
  EffectStuck,
  IncompletePropagation,
  UpstreamGap,
  TopologyGap,
  HypothesisViolation,
  DomainMismatch,
  SyntaxError,
  AnnotationError,
  CyclicWiring,
  IndivisiblePeriod,
  UnknownClass,
  DuplicateId,
  Internal,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::Stuck: return "Stuck";
    case ErrorCode::CyclicSwitch: return "CyclicSwitch";
    case ErrorCode::IllTimedSwitch: return "IllTimedSwitch";
    case ErrorCode::NoSnapshot: return "NoSnapshot";
    case ErrorCode::EffectStuck: return "EffectStuck";
    case ErrorCode::IncompletePropagation: return "IncompletePropagation";
    case ErrorCode::UpstreamGap: return "UpstreamGap";
    case ErrorCode::TopologyGap: return "TopologyGap";
    case ErrorCode::HypothesisViolation: return "HypothesisViolation";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::AnnotationError: return "AnnotationError";
    case ErrorCode::CyclicWiring: return "CyclicWiring";
    case ErrorCode::IndivisiblePeriod: return "IndivisiblePeriod";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

// Single error type for the whole library; `code` identifies the contract
// violation, `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace zdps
