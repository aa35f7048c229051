#pragma once

#include <stdexcept>
#include <string>

namespace rglab {

/// Base class for all toolkit errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input value outside the mathematical domain of an operation.
struct domain_error : error {
    using error::error;
};

/// Malformed specification (bad coupling map, constant term in a beta
/// function, unknown config key, ...).
struct validation_error : error {
    using error::error;
};

/// Operation invoked outside the regime where its formula is valid.
struct regime_error : error {
    using error::error;
};

/// Problem size exceeds a hard capacity limit.
struct capacity_error : error {
    using error::error;
};

/// A stated precondition does not hold (e.g. wrong number of unstable
/// directions at a fixed point).
struct precondition_error : error {
    using error::error;
};

/// Classification was refused because required metadata is missing.
struct classification_error : error {
    using error::error;
};

/// A sum rule or normalization condition failed; the message names it.
struct normalization_error : error {
    using error::error;
};

/// An integrand has a root of the denominator inside the requested range.
struct singularity_error : error {
    using error::error;
};

/// Runs handed to a comparison are not comparable (dimension mismatch,
/// disjoint coupling windows, missing observables).
struct incomparable_error : error {
    using error::error;
};

} // namespace rglab
