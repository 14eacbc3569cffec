#pragma once

#include <stdexcept>
#include <string>

namespace gcp {

// Every failure carries a short machine-readable code ("generation-exhausted",
// "disconnected-graph", ...) next to the human message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Bad input data or a request the domain cannot satisfy.
class DataError : public Error {
public:
    using Error::Error;
};

// Generator/scorer backend failures.
class BackendError : public Error {
public:
    using Error::Error;
};

// Worth retrying: timeouts, 429, 5xx, dropped connections.
class TransientError : public BackendError {
public:
    using BackendError::BackendError;
};

// Never retried.
class AuthError : public BackendError {
public:
    using BackendError::BackendError;
};

}  // namespace gcp
