#pragma once

#include <stdexcept>
#include <string>

namespace coalflow {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: unsorted starts, bad drift expression, too few samples.
class InputError : public Error {
public:
    using Error::Error;
};

/// Query outside a window, grid or lattice extent.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Tabulated drift evaluated outside its table.
class ExtrapolationError : public Error {
public:
    using Error::Error;
};

/// Parameters outside the range where a bound or procedure is valid.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Quadrature or other numerical routine failed to converge.
class NumericError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

/// Live-particle cap exceeded.
class ResourceError : public Error {
public:
    using Error::Error;
};

/// Internal contract violated (e.g. merging non-adjacent particles).
class LogicError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace coalflow
