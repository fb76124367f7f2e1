#pragma once

#include <stdexcept>
#include <string>

namespace opcalc {

/// Root of every exception thrown by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the interval or range an operation is defined on.
class DomainError : public Error {
public:
    using Error::Error;
};

class InvalidMeasure : public Error {
public:
    using Error::Error;
};

class InvalidFamily : public Error {
public:
    using Error::Error;
};

class InvalidProblem : public Error {
public:
    using Error::Error;
};

/// Raised when a merge-pattern enumeration would exceed the configured budget.
class CombinatorialExplosion : public Error {
public:
    using Error::Error;
};

class DegenerateContour : public Error {
public:
    using Error::Error;
};

/// A fixed-point or series computation did not reach its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_residual)
        : Error(what), last_residual_(last_residual) {}
    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Malformed input document (CLI exit code 2).
class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace opcalc
