#pragma once

#include <stdexcept>
#include <string>

namespace imargin {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inputs outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

// Root-finding, quadrature or factorization failed to converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

enum class BoundSide { below_intrinsic, above_upper };

class BoundViolation : public DomainError {
public:
    BoundViolation(BoundSide side, const std::string& what)
        : DomainError(what), side_(side) {}
    BoundSide side() const noexcept { return side_; }

private:
    BoundSide side_;
};

}  // namespace imargin
