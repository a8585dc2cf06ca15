#pragma once

#include <stdexcept>
#include <string>

namespace celldiv {

enum class ErrorKind {
    invalid_spec,
    invalid_argument,
    empty_mask,
    degenerate_pattern,
    degenerate_mask,
    non_orthonormal,
    shape_mismatch,
    io,
    corrupt_file,
    version_mismatch,
    numeric_failure,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_spec: return "invalid-spec";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::empty_mask: return "empty-mask";
    case ErrorKind::degenerate_pattern: return "degenerate-pattern";
    case ErrorKind::degenerate_mask: return "degenerate-mask";
    case ErrorKind::non_orthonormal: return "non-orthonormal";
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::io: return "io";
    case ErrorKind::corrupt_file: return "corrupt-file";
    case ErrorKind::version_mismatch: return "version-mismatch";
    case ErrorKind::numeric_failure: return "numeric-failure";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

} // namespace celldiv
