#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wr {

enum class ErrorCode {
    MalformedFrame,
    ParseError,
    InvalidArgument,
    InvalidConstraints,
    InfeasibleConstraints,
    IndexOutOfRange,
    InvalidLevel,
    IllegalMode,
    OutOfOrderEntry,
    DigestMismatch,
    ReplayDivergence,
    UnknownChannel,
    TraceParseError,
    BridgeDisconnected,
    UnknownProfile,
    UnknownLevel,
    UnknownSession,
    ValidationFailed,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure the library raises carries a machine-readable code; the
/// message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace wr
