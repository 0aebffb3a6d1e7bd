#pragma once

#include <stdexcept>
#include <string>

namespace fmo {

enum class ErrorCode {
    DimensionMismatch,
    NonPositiveWeight,
    NegativeMatrixEntry,
    EmptyStructure,
    InvalidArgument,
    RegionOutOfGrid,
    ParseError,
    IndexOutOfRange,
    NegativeEntry,
    IoError,
    SchemaVersionMismatch,
    ConflictingConstraints,
    DimensionTooLarge,
    NonFiniteValue,
    StaleInnerSolution,
    Infeasible,
};

/// Library-wide exception carrying a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
        case ErrorCode::NegativeMatrixEntry: return "NegativeMatrixEntry";
        case ErrorCode::EmptyStructure: return "EmptyStructure";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::RegionOutOfGrid: return "RegionOutOfGrid";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::NegativeEntry: return "NegativeEntry";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
        case ErrorCode::ConflictingConstraints: return "ConflictingConstraints";
        case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::StaleInnerSolution: return "StaleInnerSolution";
        case ErrorCode::Infeasible: return "Infeasible";
    }
    return "Unknown";
}

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
    throw Error(code, std::string(error_code_name(code)) + ": " + what);
}

}  // namespace fmo
