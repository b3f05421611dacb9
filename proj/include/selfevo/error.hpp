#pragma once

#include <stdexcept>
#include <string>

namespace selfevo {

// Two families map onto the CLI exit-code contract: ValidationError -> 1,
// RuntimeFailure -> 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class RuntimeFailure : public Error {
public:
    using Error::Error;
};

/// A caller violated an operation's precondition (bad argument, empty input).
class PreconditionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Input file does not match its schema. Carries the 1-based line when known.
class SchemaError : public ValidationError {
public:
    SchemaError(const std::string& message, std::size_t line = 0)
        : ValidationError(line ? message + " (line " + std::to_string(line) + ")" : message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public RuntimeFailure {
public:
    using RuntimeFailure::RuntimeFailure;
};

class BackendError : public RuntimeFailure {
public:
    using RuntimeFailure::RuntimeFailure;
};

/// Connection failures and retryable statuses that survived every attempt.
class TransportError : public BackendError {
public:
    TransportError(const std::string& message, int status, int attempts)
        : BackendError(message), status_(status), attempts_(attempts) {}

    int status() const noexcept { return status_; }
    int attempts() const noexcept { return attempts_; }

private:
    int status_;
    int attempts_;
};

/// Non-retryable HTTP 4xx; the response body is part of the message.
class HttpStatusError : public BackendError {
public:
    HttpStatusError(const std::string& message, int status)
        : BackendError(message), status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

class EmptyCompletionError : public BackendError {
public:
    using BackendError::BackendError;
};

/// Backend cannot echo prompt logprobs.
class CapabilityError : public BackendError {
public:
    using BackendError::BackendError;
};

/// Continuation boundary could not be located in the echoed tokens, or the two
/// scoring routes disagree on the answer's token count.
class AlignmentError : public BackendError {
public:
    using BackendError::BackendError;
};

class TrainerError : public RuntimeFailure {
public:
    TrainerError(const std::string& message, int exit_code = 0)
        : RuntimeFailure(message), exit_code_(exit_code) {}

    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

/// Artifact on disk no longer matches the digest recorded in the manifest.
class DigestError : public RuntimeFailure {
public:
    using RuntimeFailure::RuntimeFailure;
};

/// Too many per-item failures in a batch phase.
class FailureGateError : public RuntimeFailure {
public:
    using RuntimeFailure::RuntimeFailure;
};

}  // namespace selfevo
