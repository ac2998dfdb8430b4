#pragma once

#include <stdexcept>
#include <string>

namespace xdiff {

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the operation (negative density,
/// non-monotone quantiles, shift larger than the box, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Inconsistent or invalid configuration (inadmissible parameters, schema
/// violations, Jacobian bound of the Gamma map violated).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An iterative method failed to converge or produced non-finite values.
/// `last_residual` carries the last observed defect.
class NumericError : public Error {
public:
    NumericError(const std::string& what, double last_residual)
        : Error(what), last_residual_(last_residual) {}

    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

}  // namespace xdiff
