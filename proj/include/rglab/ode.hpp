#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace rglab::ode {

/// Right-hand side callback: f(t, y, dydt). dydt is pre-sized to y.size().
using Rhs = std::function<void(double, const std::vector<double>&, std::vector<double>&)>;

/// Called after every accepted step with (t, y); return false to stop.
using StepObserver = std::function<bool(double, const std::vector<double>&)>;

struct Options {
    double rtol = 1e-10;
    double atol = 1e-12;
    double safety = 0.9;
    double shrink_limit = 0.2;   // max step reduction per rejection
    double grow_limit = 5.0;     // max step growth per acceptance
    long max_steps = 10'000'000;
};

enum class Status {
    ReachedTarget,   // integrated all the way to t_end
    ObserverStop,    // observer returned false
    StepUnderflow,   // step shrank below representable resolution
    MaxSteps,
};

struct Result {
    Status status = Status::ReachedTarget;
    double t = 0.0;
    std::vector<double> y;
    long accepted = 0;
    long rejected = 0;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// 4th-order embedded weights (for the error estimate).
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Workspace {
    std::vector<double> k1, k2, k3, k4, k5, k6, k7, ytmp, ynew;
    void resize(std::size_t n) {
        for (auto* v : {&k1, &k2, &k3, &k4, &k5, &k6, &k7, &ytmp, &ynew}) v->resize(n);
    }
};

// One Dormand-Prince attempt from (t, y) with step h. Returns the scaled
// error norm; fills ws.ynew. Non-finite values map to an infinite norm.
inline double dp_step(const Rhs& f, double t, const std::vector<double>& y, double h,
                      const Options& opt, Workspace& ws) {
    const std::size_t n = y.size();
    f(t, y, ws.k1);
    for (std::size_t i = 0; i < n; ++i) ws.ytmp[i] = y[i] + h * a21 * ws.k1[i];
    f(t + c2 * h, ws.ytmp, ws.k2);
    for (std::size_t i = 0; i < n; ++i)
        ws.ytmp[i] = y[i] + h * (a31 * ws.k1[i] + a32 * ws.k2[i]);
    f(t + c3 * h, ws.ytmp, ws.k3);
    for (std::size_t i = 0; i < n; ++i)
        ws.ytmp[i] = y[i] + h * (a41 * ws.k1[i] + a42 * ws.k2[i] + a43 * ws.k3[i]);
    f(t + c4 * h, ws.ytmp, ws.k4);
    for (std::size_t i = 0; i < n; ++i)
        ws.ytmp[i] =
            y[i] + h * (a51 * ws.k1[i] + a52 * ws.k2[i] + a53 * ws.k3[i] + a54 * ws.k4[i]);
    f(t + c5 * h, ws.ytmp, ws.k5);
    for (std::size_t i = 0; i < n; ++i)
        ws.ytmp[i] = y[i] + h * (a61 * ws.k1[i] + a62 * ws.k2[i] + a63 * ws.k3[i] +
                                 a64 * ws.k4[i] + a65 * ws.k5[i]);
    f(t + h, ws.ytmp, ws.k6);
    for (std::size_t i = 0; i < n; ++i)
        ws.ynew[i] = y[i] + h * (b1 * ws.k1[i] + b3 * ws.k3[i] + b4 * ws.k4[i] +
                                 b5 * ws.k5[i] + b6 * ws.k6[i]);
    f(t + h, ws.ynew, ws.k7);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ei = h * (e1 * ws.k1[i] + e3 * ws.k3[i] + e4 * ws.k4[i] +
                               e5 * ws.k5[i] + e6 * ws.k6[i] + e7 * ws.k7[i]);
        const double scale =
            opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(ws.ynew[i]));
        if (!std::isfinite(ws.ynew[i]) || !std::isfinite(ei))
            return std::numeric_limits<double>::infinity();
        err = std::max(err, std::abs(ei) / scale);
    }
    return err;
}

inline double initial_step(const Rhs& f, double t0, const std::vector<double>& y0,
                           double direction, const Options& opt) {
    std::vector<double> dy(y0.size());
    f(t0, y0, dy);
    double ynorm = 0.0, dnorm = 0.0;
    for (std::size_t i = 0; i < y0.size(); ++i) {
        ynorm = std::max(ynorm, std::abs(y0[i]));
        dnorm = std::max(dnorm, std::abs(dy[i]));
    }
    double h = (dnorm > 0.0) ? 0.01 * (opt.atol + opt.rtol * ynorm) / (opt.rtol * dnorm + opt.atol)
                             : 1e-3;
    if (!(h > 0.0) || !std::isfinite(h)) h = 1e-6;
    return direction * std::min(h, 1.0);
}

} // namespace detail

/// Adaptive Dormand-Prince 5(4) integration of y' = f(t, y) from t0 to t1
/// (either direction). The observer sees every accepted step, including
/// the initial state.
inline Result integrate(const Rhs& f, double t0, std::vector<double> y0, double t1,
                        const Options& opt = {}, const StepObserver& observer = {}) {
    Result res;
    res.t = t0;
    res.y = std::move(y0);
    if (observer && !observer(res.t, res.y)) {
        res.status = Status::ObserverStop;
        return res;
    }
    if (t1 == t0) return res;

    const double direction = (t1 > t0) ? 1.0 : -1.0;
    detail::Workspace ws;
    ws.resize(res.y.size());
    double h = detail::initial_step(f, t0, res.y, direction, opt);

    for (long step = 0; step < opt.max_steps; ++step) {
        if ((res.t + h - t1) * direction > 0.0) h = t1 - res.t;
        const double err = detail::dp_step(f, res.t, res.y, h, opt, ws);
        const double hmin = 16.0 * std::numeric_limits<double>::epsilon() *
                            std::max(std::abs(res.t), 1.0);
        if (err <= 1.0) {
            res.t += h;
            res.y = ws.ynew;
            ++res.accepted;
            if (observer && !observer(res.t, res.y)) {
                res.status = Status::ObserverStop;
                return res;
            }
            if ((res.t - t1) * direction >= 0.0) {
                res.status = Status::ReachedTarget;
                return res;
            }
            const double factor =
                (err == 0.0) ? opt.grow_limit
                             : std::clamp(opt.safety * std::pow(err, -0.2),
                                          opt.shrink_limit, opt.grow_limit);
            h *= factor;
        } else {
            ++res.rejected;
            const double factor = std::isfinite(err)
                                      ? std::clamp(opt.safety * std::pow(err, -0.2),
                                                   opt.shrink_limit, 0.9)
                                      : opt.shrink_limit;
            h *= factor;
            if (std::abs(h) < hmin) {
                res.status = Status::StepUnderflow;
                return res;
            }
        }
    }
    res.status = Status::MaxSteps;
    return res;
}

/// Single accepted step of at most |h_request| from (t, y); shrinks the
/// step until the error test passes. Used for event refinement.
inline bool try_step(const Rhs& f, double& t, std::vector<double>& y, double h_request,
                     const Options& opt = {}) {
    detail::Workspace ws;
    ws.resize(y.size());
    double h = h_request;
    for (int attempt = 0; attempt < 60; ++attempt) {
        if (detail::dp_step(f, t, y, h, opt, ws) <= 1.0) {
            t += h;
            y = ws.ynew;
            return true;
        }
        h *= 0.5;
    }
    return false;
}

} // namespace rglab::ode
