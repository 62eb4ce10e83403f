#pragma once

#include <stdexcept>
#include <string>

namespace mandi {

/// Coarse error categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
    InvalidArgument,
    InvalidConfig,
    MissingInput,
    VersionMismatch,
    LayoutMismatch,
    DataError,
    Io,
};

inline const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::InvalidConfig: return "invalid_config";
        case ErrorKind::MissingInput: return "missing_input";
        case ErrorKind::VersionMismatch: return "version_mismatch";
        case ErrorKind::LayoutMismatch: return "layout_mismatch";
        case ErrorKind::DataError: return "data_error";
        case ErrorKind::Io: return "io_error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, const std::string& what) {
    if (!condition) fail(ErrorKind::InvalidArgument, what);
}

}  // namespace mandi
