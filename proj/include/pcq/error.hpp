#pragma once

#include <stdexcept>
#include <string>

namespace pcq {

enum class ErrorCode {
    IoError,
    ParseError,
    UnsupportedFormat,
    DegenerateCloud,
    InsufficientDensity,
    SingularPatch,
    EmptyTensor,
    ReferenceMismatch,
    ShapeError,
    ConfigError,
    InsufficientData,
    InsufficientBatch,
    DegenerateTarget,
    ModelStatsMismatch,
    UnsupportedVersion,
    ChecksumError,
};

/// Exception carrying a stable error class. The CLI maps each class to a
/// distinct exit code so harnesses can tell failure modes apart.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

/// Exit-code contract: 0 success, then one code per error family.
inline int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::IoError:
            return 2;
        case ErrorCode::ParseError:
        case ErrorCode::UnsupportedFormat:
            return 3;
        case ErrorCode::DegenerateCloud:
        case ErrorCode::InsufficientDensity:
        case ErrorCode::SingularPatch:
        case ErrorCode::EmptyTensor:
            return 4;
        case ErrorCode::ShapeError:
        case ErrorCode::ConfigError:
        case ErrorCode::InsufficientData:
        case ErrorCode::InsufficientBatch:
        case ErrorCode::DegenerateTarget:
        case ErrorCode::ReferenceMismatch:
            return 5;
        case ErrorCode::ModelStatsMismatch:
        case ErrorCode::UnsupportedVersion:
        case ErrorCode::ChecksumError:
            return 6;
    }
    return 1;
}

const char* error_code_name(ErrorCode code);

}  // namespace pcq
