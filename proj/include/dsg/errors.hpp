#pragma once

#include <stdexcept>
#include <string>

namespace dsg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant (bad value, duplicate id, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// File does not match the expected binary layout (magic, version, header).
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Too few samples for a statistical fit.
class SampleSizeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Distance sample has no spread, so no histogram can be fitted.
class DegenerateDistributionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Dense N x N materialization requested above the configured cap.
class CapacityError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Unreadable/unwritable file or truncated payload.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace dsg
