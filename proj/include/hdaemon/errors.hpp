#pragma once

#include <stdexcept>
#include <string>

namespace hdaemon {

/// Base class for every error raised by the library.
class DaemonError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation.
class DomainError : public DaemonError {
public:
    using DaemonError::DaemonError;
};

/// A quantum-only quantity was requested for a classical (L/hbar = inf) model.
class UnsupportedModeError : public DaemonError {
public:
    using DaemonError::DaemonError;
};

/// Derivative evaluated exactly at a pole of the L-sphere.
class PoleSingularityError : public DaemonError {
public:
    using DaemonError::DaemonError;
};

/// No unstable fixed point, hence no separatrix, at the requested time.
class NoSeparatrixError : public DaemonError {
public:
    using DaemonError::DaemonError;
};

/// Gauss-Hermite quadrature did not converge under node doubling.
class QuadratureError : public DaemonError {
public:
    using DaemonError::DaemonError;
};

/// Run configuration failed validation.
class ValidationError : public DaemonError {
public:
    using DaemonError::DaemonError;
};

} // namespace hdaemon
