#pragma once

#include <stdexcept>
#include <string>

namespace sicnm {

enum class ErrorCode {
    MissingSection,
    MalformedRow,
    NoSlack,
    DanglingBranch,
    ZeroImpedanceBranch,
    InvalidCase,
    NonFinite,
    Singular,
    ShapeMismatch,
    CycleDetected,
    Io,
    InvalidArgument,
};

[[nodiscard]] constexpr const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MissingSection: return "MissingSection";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::NoSlack: return "NoSlack";
        case ErrorCode::DanglingBranch: return "DanglingBranch";
        case ErrorCode::ZeroImpedanceBranch: return "ZeroImpedanceBranch";
        case ErrorCode::InvalidCase: return "InvalidCase";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::Singular: return "Singular";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::Io: return "Io";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Exception carrying a structured error code. `line` is the 1-based source
/// line for parse errors and 0 otherwise.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what, int line = 0)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), line_(line) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] int line() const noexcept { return line_; }

private:
    ErrorCode code_;
    int line_;
};

}  // namespace sicnm
