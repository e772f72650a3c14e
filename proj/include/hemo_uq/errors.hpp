#pragma once

#include <stdexcept>
#include <string>

namespace hemo_uq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, malformed configuration, violated preconditions.
/// The CLI maps these to exit code 2.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Unreadable or unwritable file (exit code 2, like configuration errors).
class IoError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// Solver or estimator failure on otherwise valid input (exit code 1).
class NumericalFailure : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw InvalidInput(message);
    }
}

}  // namespace detail
}  // namespace hemo_uq
