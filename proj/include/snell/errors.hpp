#ifndef SNELL_ERRORS_HPP
#define SNELL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace snell {

// Base class for all toolkit errors. The CLI maps these onto exit codes:
// config/usage problems -> 2, numerical failures -> 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Coefficient evaluation produced a non-finite value.
class EvalError : public Error {
public:
    using Error::Error;
};

// Mismatched lengths, shapes, or indices out of range.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A simulated state left the finite range.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Scheme constraint violated (probability outside [0,1], CFL breach, ...).
class StabilityError : public Error {
public:
    using Error::Error;
};

// Finite-difference stencil applied where it does not fit (boundary node).
class StencilError : public Error {
public:
    using Error::Error;
};

// Iterative solver exhausted its budget.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& msg, double residual)
        : Error(msg), final_residual(residual) {}
    double final_residual;
};

// A table claimed to be a stopping time is not adapted.
class AdaptednessError : public Error {
public:
    using Error::Error;
};

// Product structure (G, H) missing or inconsistent.
class StructureError : public Error {
public:
    using Error::Error;
};

// Enumeration would exceed the configured cap.
class SizeError : public Error {
public:
    SizeError(const std::string& msg, unsigned long long count)
        : Error(msg), predicted_count(count) {}
    unsigned long long predicted_count;
};

// Regression matrix numerically singular.
class ConditioningError : public Error {
public:
    using Error::Error;
};

// Too many paths left the rule surface's box.
class CoverageError : public Error {
public:
    using Error::Error;
};

// Expression or file syntax problem; position is a byte offset when known.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t position)
        : Error(msg), offset(position) {}
    std::size_t offset;
};

// Run configuration incomplete or inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace snell

#endif  // SNELL_ERRORS_HPP
