#pragma once

#include <stdexcept>
#include <string>

namespace dsnot {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes disagree (e.g. W.cols != A.channels).
class DimensionError : public Error {
public:
    using Error::Error;
};

// Input violates a value invariant (non-finite entry, zero extent, out-of-domain mask bit).
class InputError : public Error {
public:
    using Error::Error;
};

// Mask or request is incompatible with an N:M pattern.
class PatternError : public Error {
public:
    using Error::Error;
};

// Caller broke an operation precondition (e.g. a swap on the wrong mask bits).
class ContractViolation : public Error {
public:
    using Error::Error;
};

// Problem too large for an exhaustive routine.
class SizeError : public Error {
public:
    using Error::Error;
};

enum class LoadErrorKind {
    missing_file,
    size_mismatch,
    mask_domain,
    unknown_version,
    malformed_manifest,
    io_failure,
};

const char* to_string(LoadErrorKind kind);

// Bundle persistence failure. `path()` names the offending file.
class LoadError : public Error {
public:
    LoadError(LoadErrorKind kind, std::string path, const std::string& detail)
        : Error(std::string(to_string(kind)) + ": " + path + (detail.empty() ? "" : " (" + detail + ")")),
          kind_(kind),
          path_(std::move(path)) {}

    LoadErrorKind kind() const noexcept { return kind_; }
    const std::string& path() const noexcept { return path_; }

private:
    LoadErrorKind kind_;
    std::string path_;
};

} // namespace dsnot
