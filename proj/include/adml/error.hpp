#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adml {

/// Failure categories raised by the library. Each maps to a stable name that
/// the CLI prints, so scripts can match on it.
enum class ErrorCode {
    MalformedRow,
    NonNumericFeature,
    EmptyFile,
    InvalidK,
    NoBetweenClass,
    SubsetDegenerate,
    BadDimension,
    GramIllConditioned,
    ShapeMismatch,
    SingularAggregate,
    ZeroAggregate,
    MissingDense,
    EmptyReference,
    DegenerateData,
    NotOrthonormal,
    BadFormat,
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonNumericFeature: return "NonNumericFeature";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::NoBetweenClass: return "NoBetweenClass";
    case ErrorCode::SubsetDegenerate: return "SubsetDegenerate";
    case ErrorCode::BadDimension: return "BadDimension";
    case ErrorCode::GramIllConditioned: return "GramIllConditioned";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SingularAggregate: return "SingularAggregate";
    case ErrorCode::ZeroAggregate: return "ZeroAggregate";
    case ErrorCode::MissingDense: return "MissingDense";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::NotOrthonormal: return "NotOrthonormal";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace adml
