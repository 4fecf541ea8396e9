#pragma once

#include <stdexcept>
#include <string>

namespace dalp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector or index dimensions do not agree with the model.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A numeric parameter is outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Problem too large for an exact (enumerating) routine.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// An iterative routine stopped before reaching its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Internal consistency check failed (e.g. a sample drawn where q = 0).
class InvariantError : public Error {
public:
    using Error::Error;
};

/// Malformed input document or configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Largest number of state-action pairs accepted by enumerating oracles.
inline constexpr std::size_t kExactCapacity = 1'000'000;

}  // namespace dalp
