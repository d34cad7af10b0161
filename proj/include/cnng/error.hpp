#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cnng {

enum class ErrorCode {
    DimensionMismatch,
    EmptyInput,
    OutOfRange,
    InvalidArgument,
    NothingToReflect,   // the general network made no mistakes
    TooFewErrors,       // fewer error cases than requested specialists
    Io,
    BadMagic,
    VersionMismatch,
    Truncated,
    ChecksumMismatch,
    Malformed,
};

inline std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::EmptyInput: return "empty input";
    case ErrorCode::OutOfRange: return "out of range";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::NothingToReflect: return "nothing to reflect";
    case ErrorCode::TooFewErrors: return "too few error cases";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::BadMagic: return "bad magic";
    case ErrorCode::VersionMismatch: return "version mismatch";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::ChecksumMismatch: return "checksum mismatch";
    case ErrorCode::Malformed: return "malformed";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorCode code, const std::string& what)
{
    throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const char* what)
{
    if (!ok)
        throw Error(code, what);
}

} // namespace detail
} // namespace cnng
