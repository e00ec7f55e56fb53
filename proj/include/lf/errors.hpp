#pragma once

#include <stdexcept>
#include <string>

namespace lf {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Violated precondition or invalid argument (CLI exit code 2).
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

/// Matrix is singular (or effectively so) after the ridge floor.
struct SingularMatrixError : ValidationError {
    explicit SingularMatrixError(const std::string& msg) : ValidationError(msg) {}
};

/// Input exceeds a hard size cap (e.g. exact Wasserstein beyond 512 elements).
struct SizeLimitError : ValidationError {
    explicit SizeLimitError(const std::string& msg) : ValidationError(msg) {}
};

/// Malformed, corrupt or truncated on-disk container (CLI exit code 3).
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

} // namespace lf
