#pragma once

#include <stdexcept>
#include <string>

namespace neuzip {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed container or stream: bad magic, version mismatch, truncation,
/// length mismatch, decoder desynchronization.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Payload checksum mismatch (corruption).
class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};

/// NaN or Inf encountered where only finite values are allowed
/// (lossy compression, perturbation).
class NonFiniteError : public Error {
public:
    using Error::Error;
};

} // namespace neuzip
