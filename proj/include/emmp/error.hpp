#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emmp {

enum class ErrorCode {
  DuplicateId,
  DanglingReference,
  ArityMismatch,
  EmptyFactor,
  InvalidValue,
  OutOfRangeObservation,
  UnknownVariable,
  MissingObservation,
  DegreeViolation,
  NotATree,
  DegenerateEvidence,
  UnparameterizedNode,
  FamilyMismatch,
  ZeroRow,
  ZeroWeight,
  AllNegInf,
  PriorZero,
  MonotonicityViolation,
  TooLarge,
  SchemaError,
  LengthMismatch,
};

constexpr std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::EmptyFactor: return "EmptyFactor";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::OutOfRangeObservation: return "OutOfRangeObservation";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::MissingObservation: return "MissingObservation";
    case ErrorCode::DegreeViolation: return "DegreeViolation";
    case ErrorCode::NotATree: return "NotATree";
    case ErrorCode::DegenerateEvidence: return "DegenerateEvidence";
    case ErrorCode::UnparameterizedNode: return "UnparameterizedNode";
    case ErrorCode::FamilyMismatch: return "FamilyMismatch";
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::ZeroWeight: return "ZeroWeight";
    case ErrorCode::AllNegInf: return "AllNegInf";
    case ErrorCode::PriorZero: return "PriorZero";
    case ErrorCode::MonotonicityViolation: return "MonotonicityViolation";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// message is a single line suitable for a diagnostic stream.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace emmp
