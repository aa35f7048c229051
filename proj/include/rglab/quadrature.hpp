#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>

namespace rglab::quad {

struct Estimate {
    double value = 0.0;
    double error = 0.0;
};

/// Adaptive Gauss-Kronrod (15-point rule). b may be +infinity.
template <class F>
Estimate integrate(const F& f, double a, double b, double tol = 1e-11) {
    using rule = boost::math::quadrature::gauss_kronrod<double, 15>;
    Estimate est;
    est.value = rule::integrate(f, a, b, 15, tol, &est.error);
    return est;
}

inline constexpr double infinity = std::numeric_limits<double>::infinity();

} // namespace rglab::quad
