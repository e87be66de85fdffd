#pragma once

#include <stdexcept>
#include <string>

namespace msad {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-domain input data (empty image, window larger than grid, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A caller or provider broke an interface contract (shape mismatch, dim mismatch, non-unit embedding).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Configuration that cannot be run (empty prompt set, negative weight, ...).
class InvalidConfig : public Error {
public:
    using Error::Error;
};

/// A metric is undefined for the given labels (e.g. only one class present).
class UndefinedMetric : public Error {
public:
    using Error::Error;
};

/// Bank or map file could not be loaded (bad magic, version, checksum, truncation).
class LoadError : public Error {
public:
    using Error::Error;
};

/// Remote provider failure. Carries enough metadata for the caller to decide on a retry.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int status, int attempts, int retry_after_ms)
        : Error(what), status_(status), attempts_(attempts), retry_after_ms_(retry_after_ms) {}

    /// HTTP status, or 0 when no response was received.
    int status() const noexcept { return status_; }
    int attempts() const noexcept { return attempts_; }
    /// Suggested delay before retrying; negative when the failure is not retryable.
    int retry_after_ms() const noexcept { return retry_after_ms_; }
    bool retryable() const noexcept { return retry_after_ms_ >= 0; }

private:
    int status_;
    int attempts_;
    int retry_after_ms_;
};

}  // namespace msad
