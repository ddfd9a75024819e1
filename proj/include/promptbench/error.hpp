#pragma once

#include <stdexcept>
#include <string>

namespace promptbench {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller handed in something that violates a precondition (bad dims, bad k, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// File exists but its content is not in a supported layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// External segmenter failed: nonzero exit, timeout, or bad output.
class BackendError : public Error {
public:
    BackendError(const std::string& what, std::string diagnostics = {})
        : Error(what), diagnostics_(std::move(diagnostics)) {}

    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

}  // namespace promptbench
