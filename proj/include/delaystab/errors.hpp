#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace delaystab {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A scalar or vector argument violates a precondition (negative delay,
/// empty grid, bad window ordering, ...).
struct InvalidParameterError : Error {
    using Error::Error;
};

/// Adjacency matrix is not square, has negative weights or a nonzero diagonal.
struct InvalidTopologyError : Error {
    using Error::Error;
};

/// Topology is structurally valid but outside what an operation supports
/// (e.g. classification requires real Laplacian eigenvalues).
struct UnsupportedTopologyError : Error {
    using Error::Error;
};

/// Parameters are structurally valid but outside what an operation supports
/// (e.g. crossing frequencies require real effective gains).
struct UnsupportedParametersError : Error {
    using Error::Error;
};

/// Generic numerical breakdown (non-convergence, overflow guard, ...).
struct NumericalFailureError : Error {
    using Error::Error;
};

/// Two independent computation routes that must agree produced different
/// answers outside the tolerance collar.
struct InternalConsistencyError : NumericalFailureError {
    using NumericalFailureError::NumericalFailureError;
};

/// Root finder and winding count disagree after all escalation stages.
struct IncompleteSpectrumError : NumericalFailureError {
    IncompleteSpectrumError(std::size_t found_, std::size_t expected_, const std::string& what_)
        : NumericalFailureError(what_), found(found_), expected(expected_) {}
    std::size_t found;
    std::size_t expected;
};

/// Contour phase tracking could not reach the required resolution.
struct ContourResolutionError : NumericalFailureError {
    using NumericalFailureError::NumericalFailureError;
};

/// The delayed feedback channel vanishes where a formula divides by it
/// (k0_tau + i omega h0_tau == 0).
struct DegenerateDelayChannelError : Error {
    using Error::Error;
};

/// Operation is defined only for certain stability classes (switching delays
/// need class I or II).
struct InapplicableClassError : Error {
    using Error::Error;
};

/// Structural hypotheses of the large-delay reduction are violated
/// (requires M_tau = P = 0, k0 > 0, h0 > 0, k_tau != 0).
struct TheoremHypothesisError : Error {
    using Error::Error;
};

/// lambda(mu) evaluated exactly at a pole of the mode-number function.
struct PoleOfLambdaError : Error {
    using Error::Error;
};

/// Every grid sample of a parametric curve was skipped (denominator
/// degenerate along the whole grid).
struct EmptyCurveError : NumericalFailureError {
    using NumericalFailureError::NumericalFailureError;
};

/// Self-intersection refinement did not converge near a seed.
struct IntersectionNotFoundError : NumericalFailureError {
    using NumericalFailureError::NumericalFailureError;
};

/// Curve tangent too short to define an angle at a crossing.
struct DegenerateTangentError : NumericalFailureError {
    using NumericalFailureError::NumericalFailureError;
};

/// Decay-rate fit could not find a usable window in the log.
struct FitWindowExhaustedError : NumericalFailureError {
    using NumericalFailureError::NumericalFailureError;
};

}  // namespace delaystab
