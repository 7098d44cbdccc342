#pragma once

#include <stdexcept>
#include <string>

namespace paq {

// Broad class of a failure; the CLI maps these onto exit codes
// (domain -> 1, io/usage -> 2).
enum class ErrorKind { usage, io, domain };

enum class ErrorCode {
    generic,
    bad_magic,
    bad_version,
    dim_mismatch,
    truncated,
    malformed,
    duplicate_id,
    not_found,
    empty_input,
    precondition,
    backend,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, ErrorCode code, const std::string& what)
        : std::runtime_error(what), kind_(kind), code_(code) {}
    Error(ErrorKind kind, const std::string& what) : Error(kind, ErrorCode::generic, what) {}

    ErrorKind kind() const noexcept { return kind_; }
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    ErrorCode code_;
};

[[noreturn]] inline void throw_usage(const std::string& msg,
                                     ErrorCode code = ErrorCode::precondition) {
    throw Error(ErrorKind::usage, code, msg);
}

[[noreturn]] inline void throw_io(const std::string& msg, ErrorCode code = ErrorCode::generic) {
    throw Error(ErrorKind::io, code, msg);
}

[[noreturn]] inline void throw_domain(const std::string& msg,
                                      ErrorCode code = ErrorCode::generic) {
    throw Error(ErrorKind::domain, code, msg);
}

}  // namespace paq
