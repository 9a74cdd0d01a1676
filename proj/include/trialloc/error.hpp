#pragma once

#include <stdexcept>
#include <string>

namespace trialloc {

// Exit codes are part of the CLI contract.
enum class ExitCode : int {
    Success = 0,
    Validation = 2,
    Infeasible = 3,
    Numerical = 4,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Inputs violate a documented invariant (dimensions, ranges, sums).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ExitCode::Validation, what) {}
};

/// The constraint set admits no design; the message names the violated aggregate.
class InfeasibleError : public Error {
public:
    explicit InfeasibleError(const std::string& what) : Error(ExitCode::Infeasible, what) {}
};

/// A factorization failed or a quantity that must be positive definite is not.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ExitCode::Numerical, what) {}
};

}  // namespace trialloc
