#pragma once

#include <stdexcept>
#include <string>

namespace rotenc {

enum class ErrorCode {
  InvalidConfig,
  InvalidInput,
  InvalidQuaternion,
  NotCentered,
  TooFewPoints,
  ShapeError,
  NotScalar,
  UnknownElement,
  DegenerateCloud,
  NoData,
  ParseError,
  DuplicateId,
  EmptyMolecule,
  ConstantTarget,
  InvalidSplit,
  StaleGradient,
  Diverged,
  TaskMismatch,
  IoError,
  FormatError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::InvalidQuaternion: return "InvalidQuaternion";
    case ErrorCode::NotCentered: return "NotCentered";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::UnknownElement: return "UnknownElement";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyMolecule: return "EmptyMolecule";
    case ErrorCode::ConstantTarget: return "ConstantTarget";
    case ErrorCode::InvalidSplit: return "InvalidSplit";
    case ErrorCode::StaleGradient: return "StaleGradient";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::TaskMismatch: return "TaskMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch on the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rotenc
