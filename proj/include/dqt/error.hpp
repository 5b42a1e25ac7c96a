#pragma once

#include <stdexcept>
#include <string>

namespace dqt {

/// Base class for every error raised by the simulator.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid ChainSpec / NoiseModel / sweep configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A stored state broke trace, Hermiticity, positivity or norm bounds.
/// Usually means the step size is too large for the rates in play.
class InvariantViolation : public Error {
public:
    using Error::Error;
};

/// A stochastic trajectory hit a branch it cannot continue from
/// (renormalising a numerically zero state).
class TrajectoryError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

} // namespace dqt
