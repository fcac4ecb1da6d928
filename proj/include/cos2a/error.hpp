#pragma once

#include <stdexcept>
#include <string>

namespace cos2a {

// Base of every error thrown by the library. The subclass decides the CLI
// exit code (see pipeline.hpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user input: unreadable files, malformed headers, inconsistent shapes,
// invalid configuration values.
class InputError : public Error {
public:
    using Error::Error;
};

// A computation produced a non-finite value or hit a degenerate operator.
class NumericalError : public Error {
public:
    using Error::Error;
};

// An internal guarantee was broken, e.g. a monotone solver increased its
// objective. Always a bug, never a user error.
class ContractViolation : public Error {
public:
    using Error::Error;
};

} // namespace cos2a
