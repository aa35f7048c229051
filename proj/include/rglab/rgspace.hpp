#pragma once

#include "rglab/errors.hpp"
#include "rglab/ode.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rglab::space {

/// One term coeff * prod_k p_k^{e_k} of a polynomial vector-field component.
struct Monomial {
    double coeff = 0.0;
    std::vector<int> exponents;
};

/// Polynomial many-parameter flow field F_i{p_k}. The flow convention is
/// dp/dt = -F(p) with t = ln(l/a), so directions with positive flow-map
/// eigenvalue grow with the length scale.
class FlowField {
public:
    FlowField(int dim, std::vector<std::vector<Monomial>> components)
        : dim_(dim), components_(std::move(components)) {
        if (dim_ < 1) throw validation_error("flow field: dimension must be >= 1");
        if (static_cast<int>(components_.size()) != dim_)
            throw validation_error("flow field: one component list per parameter required");
        for (const auto& comp : components_)
            for (const auto& m : comp) {
                if (static_cast<int>(m.exponents.size()) != dim_)
                    throw validation_error("flow field: multi-exponent length must equal dim");
                for (int e : m.exponents)
                    if (e < 0)
                        throw validation_error("flow field: exponents must be nonnegative");
            }
    }

    int dim() const { return dim_; }
    const std::vector<std::vector<Monomial>>& components() const { return components_; }

    void eval(const std::vector<double>& p, std::vector<double>& out) const {
        out.assign(dim_, 0.0);
        for (int i = 0; i < dim_; ++i)
            for (const auto& m : components_[i]) out[i] += m.coeff * power_product(p, m.exponents);
    }

    std::vector<double> eval(const std::vector<double>& p) const {
        std::vector<double> out;
        eval(p, out);
        return out;
    }

    /// Analytic Jacobian dF_i/dp_j.
    Eigen::MatrixXd jacobian(const std::vector<double>& p) const {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim_, dim_);
        for (int i = 0; i < dim_; ++i)
            for (const auto& m : components_[i])
                for (int j = 0; j < dim_; ++j) {
                    const int e = m.exponents[j];
                    if (e == 0) continue;
                    double term = m.coeff * e;
                    for (int k = 0; k < dim_; ++k) {
                        const int ek = (k == j) ? m.exponents[k] - 1 : m.exponents[k];
                        term *= ipow(p[k], ek);
                    }
                    J(i, j) += term;
                }
        return J;
    }

    FlowField scaled(double factor) const {
        if (!(factor > 0.0)) throw domain_error("flow field scaling factor must be positive");
        auto comps = components_;
        for (auto& comp : comps)
            for (auto& m : comp) m.coeff *= factor;
        return FlowField(dim_, std::move(comps));
    }

private:
    static double ipow(double x, int e) {
        double r = 1.0;
        for (int k = 0; k < e; ++k) r *= x;
        return r;
    }
    static double power_product(const std::vector<double>& p, const std::vector<int>& e) {
        double r = 1.0;
        for (std::size_t k = 0; k < e.size(); ++k) r *= ipow(p[k], e[k]);
        return r;
    }

    int dim_;
    std::vector<std::vector<Monomial>> components_;
};

struct SpaceOptions {
    double root_tolerance = 1e-10;   // |F|_inf accepted at a fixed point
    int newton_max_iter = 80;
    double merge_radius = 1e-7;
    double marginal_tolerance = 1e-9; // relative to the spectral radius
    double launch_offset = 1e-6;
    double p_max = 1e8;
    ode::Options ode{};
};

enum class FixedPointClass { Saddle, Sink, Source, Degenerate };

inline const char* to_string(FixedPointClass c) {
    switch (c) {
    case FixedPointClass::Saddle: return "saddle";
    case FixedPointClass::Sink: return "sink";
    case FixedPointClass::Source: return "source";
    case FixedPointClass::Degenerate: return "degenerate";
    }
    return "unknown";
}

struct EigenPair {
    std::complex<double> value; // eigenvalue of the flow map -J
    std::vector<std::complex<double>> vector;
};

struct FixedPointInfo {
    std::vector<double> location;
    std::vector<EigenPair> flow_eigen; // sorted by decreasing real part
    int n_relevant = 0;   // Re > 0: grows with length scale
    int n_irrelevant = 0; // Re < 0
    int n_marginal = 0;
    FixedPointClass classification = FixedPointClass::Degenerate;
    std::string diagnostic;
};

namespace detail {

inline double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

/// Phase-normalize an eigenvector so its largest component is real and
/// positive; returns the residual imaginary fraction after rotation.
inline double realize(std::vector<std::complex<double>>& v) {
    std::size_t imax = 0;
    double amax = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) > amax) { amax = std::abs(v[i]); imax = i; }
    if (amax == 0.0) return 0.0;
    const std::complex<double> phase = std::conj(v[imax]) / std::abs(v[imax]);
    double imag_res = 0.0, norm = 0.0;
    for (auto& x : v) {
        x *= phase;
        imag_res = std::max(imag_res, std::abs(x.imag()));
        norm += std::norm(x);
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return imag_res / amax;
}

inline std::vector<double> real_part(const std::vector<std::complex<double>>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i].real();
    return r;
}

} // namespace detail

/// Linearize the flow at a point that is (within tolerance) a zero of F.
/// Eigenvalues reported are those of the flow map -J.
inline FixedPointInfo linearize_at(const FlowField& field, const std::vector<double>& p_star,
                                   const SpaceOptions& opt = {}) {
    if (static_cast<int>(p_star.size()) != field.dim())
        throw validation_error("linearize_at: point dimension mismatch");
    const double residual = detail::inf_norm(field.eval(p_star));
    if (residual > opt.root_tolerance)
        throw precondition_error("linearize_at: |F(p)| = " + std::to_string(residual) +
                                 " exceeds the root tolerance");

    FixedPointInfo info;
    info.location = p_star;
    const Eigen::MatrixXd M = -field.jacobian(p_star);
    Eigen::EigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success) {
        info.classification = FixedPointClass::Degenerate;
        info.diagnostic = "eigen-decomposition did not converge";
        return info;
    }

    const int n = field.dim();
    for (int i = 0; i < n; ++i) {
        EigenPair pair;
        pair.value = es.eigenvalues()[i];
        pair.vector.resize(n);
        for (int k = 0; k < n; ++k) pair.vector[k] = es.eigenvectors()(k, i);
        detail::realize(pair.vector);
        info.flow_eigen.push_back(std::move(pair));
    }
    std::sort(info.flow_eigen.begin(), info.flow_eigen.end(),
              [](const EigenPair& a, const EigenPair& b) {
                  if (a.value.real() != b.value.real()) return a.value.real() > b.value.real();
                  return a.value.imag() > b.value.imag();
              });

    double rho = 0.0;
    for (const auto& e : info.flow_eigen) rho = std::max(rho, std::abs(e.value));
    const double tol = opt.marginal_tolerance * std::max(1.0, rho);
    for (const auto& e : info.flow_eigen) {
        if (e.value.real() > tol)
            ++info.n_relevant;
        else if (e.value.real() < -tol)
            ++info.n_irrelevant;
        else
            ++info.n_marginal;
    }

    // Near-defective eigenvector bases get flagged rather than trusted.
    Eigen::MatrixXcd V(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) V(k, i) = info.flow_eigen[i].vector[k];
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
    const double smin = svd.singularValues()(n - 1);
    const double smax = svd.singularValues()(0);

    if (info.n_marginal > 0) {
        info.classification = FixedPointClass::Degenerate;
        info.diagnostic = "marginal direction within tolerance of zero";
    } else if (smin <= 0.0 || smax / smin > 1e10) {
        info.classification = FixedPointClass::Degenerate;
        info.diagnostic = "near-defective Jacobian (eigenvector condition " +
                          std::to_string(smin > 0 ? smax / smin : 0.0) + ")";
    } else if (info.n_relevant == field.dim()) {
        info.classification = FixedPointClass::Source;
    } else if (info.n_irrelevant == field.dim()) {
        info.classification = FixedPointClass::Sink;
    } else {
        info.classification = FixedPointClass::Saddle;
    }
    return info;
}

struct Box {
    std::vector<double> lo, hi;
};

/// Multi-start Newton search for zeros of F over an axis-aligned box.
/// Roots are merged within the merge radius and reported sorted by
/// location; every reported root satisfies |F|_inf <= root_tolerance.
inline std::vector<FixedPointInfo> find_fixed_points(const FlowField& field, const Box& box,
                                                     int seeds_per_axis,
                                                     const SpaceOptions& opt = {}) {
    const int n = field.dim();
    if (static_cast<int>(box.lo.size()) != n || static_cast<int>(box.hi.size()) != n)
        throw validation_error("find_fixed_points: box dimension mismatch");
    for (int i = 0; i < n; ++i)
        if (!(box.lo[i] < box.hi[i]))
            throw validation_error("find_fixed_points: box is degenerate");
    if (seeds_per_axis < 2) throw validation_error("find_fixed_points: need >= 2 seeds per axis");
    double total = 1.0;
    for (int i = 0; i < n; ++i) total *= seeds_per_axis;
    if (total > 2e6) throw capacity_error("find_fixed_points: seed grid too large");

    std::vector<std::vector<double>> roots;
    std::vector<int> idx(n, 0);
    std::vector<double> p(n), F(n);
    Eigen::VectorXd step(n), Fv(n);

    const auto try_seed = [&](std::vector<double> x) {
        for (int it = 0; it < opt.newton_max_iter; ++it) {
            field.eval(x, F);
            const double r0 = detail::inf_norm(F);
            if (r0 <= 1e-14) break;
            Eigen::MatrixXd J = field.jacobian(x);
            for (int i = 0; i < n; ++i) Fv(i) = F[i];
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
            step = lu.solve(Fv);
            if (!step.allFinite()) return;
            // Damped update: backtrack while the residual grows.
            double lambda = 1.0;
            std::vector<double> xn(n);
            for (int bt = 0; bt < 40; ++bt, lambda *= 0.5) {
                for (int i = 0; i < n; ++i) xn[i] = x[i] - lambda * step(i);
                field.eval(xn, F);
                if (detail::inf_norm(F) < r0) break;
                if (bt == 39) return;
            }
            x = xn;
        }
        field.eval(x, F);
        if (detail::inf_norm(F) > opt.root_tolerance) return;
        for (int i = 0; i < n; ++i) {
            const double margin = 1e-8 * (1.0 + box.hi[i] - box.lo[i]);
            if (x[i] < box.lo[i] - margin || x[i] > box.hi[i] + margin) return;
        }
        for (const auto& r : roots)
            if (detail::distance(r, x) < opt.merge_radius * (1.0 + detail::inf_norm(x))) return;
        roots.push_back(std::move(x));
    };

    for (;;) {
        for (int i = 0; i < n; ++i)
            p[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * idx[i] / double(seeds_per_axis - 1);
        try_seed(p);
        int ax = 0;
        while (ax < n && ++idx[ax] == seeds_per_axis) idx[ax++] = 0;
        if (ax == n) break;
    }

    std::sort(roots.begin(), roots.end());
    std::vector<FixedPointInfo> out;
    out.reserve(roots.size());
    for (const auto& r : roots) out.push_back(linearize_at(field, r, opt));
    return out;
}

struct TrajectorySample {
    double t = 0.0;
    std::vector<double> p;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    std::optional<std::vector<double>> kappa; // arc-length coordinate per sample
};

namespace detail {

struct ManifoldState {
    Trajectory traj;
    bool budget_reached = false;
};

/// Integrate dp/dt = -F augmented with arc length, from p0, stopping when
/// stop(arc, p) says so or t exceeds t_cap.
template <class Stop>
ManifoldState run_arclength_flow(const FlowField& field, const std::vector<double>& p0,
                                 double kappa0, double t_cap, const SpaceOptions& opt,
                                 const Stop& stop) {
    const int n = field.dim();
    ManifoldState st;
    std::vector<double> y0(p0);
    y0.push_back(0.0); // arc length slot

    const ode::Rhs rhs = [&field, n](double, const std::vector<double>& y,
                                     std::vector<double>& dy) {
        static thread_local std::vector<double> p, F;
        p.assign(y.begin(), y.begin() + n);
        field.eval(p, F);
        double norm = 0.0;
        for (int i = 0; i < n; ++i) {
            dy[i] = -F[i];
            norm += F[i] * F[i];
        }
        dy[n] = std::sqrt(norm);
    };

    const ode::StepObserver obs = [&](double t, const std::vector<double>& y) {
        std::vector<double> p(y.begin(), y.begin() + n);
        st.traj.samples.push_back({t, std::move(p)});
        st.traj.kappa->push_back(kappa0 + y[n]);
        if (stop(y[n], st.traj.samples.back().p)) {
            st.budget_reached = true;
            return false;
        }
        return true;
    };

    st.traj.kappa.emplace();
    ode::integrate(rhs, 0.0, y0, t_cap, opt.ode, obs);
    return st;
}

} // namespace detail

/// Trace the unstable manifold (the ideal one-parameter scaling
/// trajectory) of a fixed point with exactly one relevant direction.
/// kappa measures arc length in parameter space from the fixed point.
inline Trajectory trace_unstable_manifold(const FlowField& field, const FixedPointInfo& fp,
                                          double arc_budget, const SpaceOptions& opt = {},
                                          int branch = +1) {
    if (fp.n_relevant != 1)
        throw precondition_error(
            "trace_unstable_manifold: fixed point has " + std::to_string(fp.n_relevant) +
            " relevant and " + std::to_string(fp.n_irrelevant) +
            " irrelevant directions; exactly one relevant direction is required");
    if (!(arc_budget > 0.0))
        throw domain_error("trace_unstable_manifold: arc budget must be positive");

    const auto& pair = fp.flow_eigen.front(); // sorted: largest real part first
    if (std::abs(pair.value.imag()) > 1e-9 * std::max(1.0, std::abs(pair.value)))
        throw precondition_error("trace_unstable_manifold: unstable eigenvalue is complex");
    std::vector<double> v = detail::real_part(pair.vector);

    const double eps = opt.launch_offset;
    std::vector<double> p0(fp.location);
    for (std::size_t i = 0; i < p0.size(); ++i) p0[i] += branch * eps * v[i];

    auto st = detail::run_arclength_flow(
        field, p0, eps, 1e6, opt,
        [&](double arc, const std::vector<double>&) { return eps + arc >= arc_budget; });

    // Trim the final step onto the arc budget.
    if (st.budget_reached && st.traj.samples.size() >= 2) {
        const int n = field.dim();
        auto& samples = st.traj.samples;
        auto& kap = *st.traj.kappa;
        double t = samples[samples.size() - 2].t;
        std::vector<double> y = samples[samples.size() - 2].p;
        y.push_back(kap[samples.size() - 2] - eps);
        const ode::Rhs rhs = [&field, n](double, const std::vector<double>& yy,
                                         std::vector<double>& dy) {
            std::vector<double> p(yy.begin(), yy.begin() + n), F;
            field.eval(p, F);
            double norm = 0.0;
            for (int i = 0; i < n; ++i) {
                dy[i] = -F[i];
                norm += F[i] * F[i];
            }
            dy[n] = std::sqrt(norm);
        };
        for (int it = 0; it < 60; ++it) {
            const double remaining = arc_budget - (eps + y[n]);
            if (std::abs(remaining) <= 1e-9 * (1.0 + arc_budget)) break;
            std::vector<double> F;
            std::vector<double> p(y.begin(), y.begin() + n);
            field.eval(p, F);
            double speed = 0.0;
            for (double f : F) speed += f * f;
            speed = std::sqrt(speed);
            if (!(speed > 0.0)) break;
            if (!ode::try_step(rhs, t, y, remaining / speed, opt.ode)) break;
        }
        if (t > samples[samples.size() - 2].t) {
            samples.back() = {t, std::vector<double>(y.begin(), y.end() - 1)};
            kap.back() = eps + y[field.dim()];
        }
    }
    return st.traj;
}

struct TraceResult {
    Trajectory trajectory;
    bool truncated = false;
    std::string diagnostic;
    std::vector<double> distance_to_reference; // per sample, when a reference was given
};

namespace detail {

inline double point_segment_distance(const std::vector<double>& x, const std::vector<double>& a,
                                     const std::vector<double>& b) {
    double ab2 = 0.0, apab = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ab2 += (b[i] - a[i]) * (b[i] - a[i]);
        apab += (x[i] - a[i]) * (b[i] - a[i]);
    }
    const double s = (ab2 > 0.0) ? std::clamp(apab / ab2, 0.0, 1.0) : 0.0;
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double proj = a[i] + s * (b[i] - a[i]);
        d2 += (x[i] - proj) * (x[i] - proj);
    }
    return std::sqrt(d2);
}

inline double distance_to_polyline(const std::vector<double>& x, const Trajectory& ref) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < ref.samples.size(); ++k)
        best = std::min(best,
                        point_segment_distance(x, ref.samples[k].p, ref.samples[k + 1].p));
    if (ref.samples.size() == 1) best = distance(x, ref.samples.front().p);
    return best;
}

} // namespace detail

/// Plain flow integration over a time span (either direction), with an
/// optional reference trajectory to measure the approach toward it.
inline TraceResult trace_trajectory(const FlowField& field, const std::vector<double>& p_init,
                                    double t_span, const SpaceOptions& opt = {},
                                    const Trajectory* reference = nullptr) {
    if (static_cast<int>(p_init.size()) != field.dim())
        throw validation_error("trace_trajectory: initial point dimension mismatch");
    if (t_span == 0.0) throw domain_error("trace_trajectory: time span must be nonzero");

    TraceResult res;
    auto st = detail::run_arclength_flow(
        field, p_init, 0.0, t_span, opt,
        [&](double, const std::vector<double>& p) { return detail::inf_norm(p) > opt.p_max; });
    res.trajectory = std::move(st.traj);
    if (st.budget_reached) {
        res.truncated = true;
        res.diagnostic = "trajectory left the sane region |p| <= p_max; truncated";
    }
    if (reference) {
        res.distance_to_reference.reserve(res.trajectory.samples.size());
        for (const auto& s : res.trajectory.samples)
            res.distance_to_reference.push_back(detail::distance_to_polyline(s.p, *reference));
    }
    return res;
}

using Observable = std::function<double(const std::vector<double>&)>;

struct ParametricOptions {
    std::vector<double> launch_offsets = {1e-6, 5e-7, 2.5e-7};
    double stable_amplitude = 1.0;
    double t_cap = 80.0;
    double grid_margin = 1.05; // trace until designated exceeds max ratio by this factor
};

/// Two-step continuum limit on a toy flow: rows are indexed by the value
/// of the designated mass-like observable; kappa is the arc-length
/// coordinate of that value on the ideal trajectory; values[l][r][o]
/// holds observable o at ratio r for launch l. Eliminating kappa (i.e.
/// reading any observable against the designated one) gives relations
/// that carry no dependence on the launch distance.
struct ParametricTable {
    std::vector<std::string> names;
    std::string designated;
    std::vector<double> ratios;
    std::vector<double> kappa;
    std::vector<double> launch_offsets;
    std::vector<std::vector<std::vector<double>>> values;
    double max_launch_spread = 0.0;

    double value(std::size_t launch, std::size_t ratio_idx, const std::string& name) const {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw domain_error("parametric table: unknown observable " + name);
        return values[launch][ratio_idx][std::size_t(it - names.begin())];
    }
};

namespace detail {

/// Locate obs(p(t)) == target inside [samples[k], samples[k+1]] by
/// bisection on cubic-Hermite interpolated states (derivatives from the
/// flow itself).
struct HermiteSeg {
    double t0, t1;
    std::vector<double> p0, p1, d0, d1;

    std::vector<double> at(double t) const {
        const double h = t1 - t0;
        const double s = (t - t0) / h;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s),
                     h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        std::vector<double> out(p0.size());
        for (std::size_t i = 0; i < p0.size(); ++i)
            out[i] = h00 * p0[i] + h * h10 * d0[i] + h01 * p1[i] + h * h11 * d1[i];
        return out;
    }
};

inline HermiteSeg segment(const FlowField& field, const Trajectory& tr, std::size_t k) {
    HermiteSeg seg;
    seg.t0 = tr.samples[k].t;
    seg.t1 = tr.samples[k + 1].t;
    seg.p0 = tr.samples[k].p;
    seg.p1 = tr.samples[k + 1].p;
    auto F0 = field.eval(seg.p0), F1 = field.eval(seg.p1);
    seg.d0.resize(F0.size());
    seg.d1.resize(F1.size());
    for (std::size_t i = 0; i < F0.size(); ++i) {
        seg.d0[i] = -F0[i];
        seg.d1[i] = -F1[i];
    }
    return seg;
}

/// Scalar Hermite interpolation for the arc-length coordinate: value and
/// derivative |F| are both known at the segment ends.
inline double hermite_scalar(double t, double t0, double t1, double v0, double v1, double d0,
                             double d1) {
    const double h = t1 - t0;
    const double s = (t - t0) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s),
                 h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * v0 + h * h10 * d0 + h01 * v1 + h * h11 * d1;
}

inline double speed(const FlowField& field, const std::vector<double>& p) {
    double s = 0.0;
    for (double f : field.eval(p)) s += f * f;
    return std::sqrt(s);
}

struct Located {
    double t;
    std::vector<double> p;
};

/// Walk the trajectory backward for the latest bracket of obs == target.
inline std::optional<Located> locate_backward(const FlowField& field, const Trajectory& tr,
                                              const Observable& obs, double target) {
    for (std::size_t k = tr.samples.size(); k-- >= 2;) {
        const std::size_t i = k - 1;
        const double v0 = obs(tr.samples[i].p), v1 = obs(tr.samples[i + 1].p);
        if ((v0 - target) * (v1 - target) > 0.0) continue;
        const auto seg = segment(field, tr, i);
        double lo = seg.t0, hi = seg.t1;
        const bool increasing = v1 > v0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double v = obs(seg.at(mid));
            ((v < target) == increasing ? lo : hi) = mid;
        }
        const double t = 0.5 * (lo + hi);
        return Located{t, seg.at(t)};
    }
    return std::nullopt;
}

} // namespace detail

/// Tabulate all observables against the designated mass-like one along
/// trajectories launched ever closer to the critical surface, assigning
/// each row the ideal-trajectory arc coordinate of the same designated
/// value.
inline ParametricTable parametric_representation(
    const FlowField& field, const std::map<std::string, Observable>& observables,
    const std::string& designated, const FixedPointInfo& fp,
    const std::vector<double>& ratio_grid, const ParametricOptions& popt = {},
    const SpaceOptions& opt = {}) {
    if (fp.n_relevant != 1)
        throw precondition_error("parametric_representation: fixed point must have exactly one "
                                 "relevant direction, found " +
                                 std::to_string(fp.n_relevant));
    const auto des_it = observables.find(designated);
    if (des_it == observables.end())
        throw validation_error("parametric_representation: designated observable '" + designated +
                               "' is not among the observables");
    if (ratio_grid.empty())
        throw validation_error("parametric_representation: empty ratio grid");
    const Observable& des = des_it->second;
    const double top = *std::max_element(ratio_grid.begin(), ratio_grid.end());

    // Ideal trajectory: trace until the designated observable clears the grid.
    const auto& unstable = fp.flow_eigen.front();
    if (std::abs(unstable.value.imag()) > 1e-9 * std::max(1.0, std::abs(unstable.value)))
        throw precondition_error("parametric_representation: unstable eigenvalue is complex");
    const std::vector<double> vu = detail::real_part(unstable.vector);
    std::vector<double> p0(fp.location);
    for (std::size_t i = 0; i < p0.size(); ++i) p0[i] += opt.launch_offset * vu[i];
    auto ideal = detail::run_arclength_flow(field, p0, opt.launch_offset, popt.t_cap, opt,
                                            [&](double, const std::vector<double>& p) {
                                                return des(p) >= top * popt.grid_margin;
                                            });
    if (!ideal.budget_reached)
        throw validation_error("parametric_representation: designated observable never reached "
                               "the top of the ratio grid along the ideal trajectory");

    // Monotonicity of the designated observable along the ideal trajectory.
    {
        double prev = des(ideal.traj.samples.front().p);
        for (std::size_t k = 1; k < ideal.traj.samples.size(); ++k) {
            const double cur = des(ideal.traj.samples[k].p);
            if (!(cur > prev))
                throw validation_error(
                    "parametric_representation: designated observable is not monotonically "
                    "increasing along the ideal trajectory; choose a different parameterization");
            prev = cur;
        }
    }

    ParametricTable table;
    table.designated = designated;
    for (const auto& [name, fn] : observables) table.names.push_back(name);
    table.ratios = ratio_grid;
    table.launch_offsets = popt.launch_offsets;

    // kappa per ratio from the ideal trajectory.
    for (const double r : ratio_grid) {
        const auto loc = detail::locate_backward(field, ideal.traj, des, r);
        if (!loc)
            throw validation_error("parametric_representation: ratio value not reached on the "
                                   "ideal trajectory");
        // Interpolate the arc coordinate at loc->t.
        const auto& tr = ideal.traj;
        double kappa = (*tr.kappa).back();
        for (std::size_t k = 0; k + 1 < tr.samples.size(); ++k)
            if (tr.samples[k].t <= loc->t && loc->t <= tr.samples[k + 1].t) {
                kappa = detail::hermite_scalar(loc->t, tr.samples[k].t, tr.samples[k + 1].t,
                                               (*tr.kappa)[k], (*tr.kappa)[k + 1],
                                               detail::speed(field, tr.samples[k].p),
                                               detail::speed(field, tr.samples[k + 1].p));
                break;
            }
        table.kappa.push_back(kappa);
    }

    // Stable direction used to park the launch points near the critical surface.
    const auto& stable = fp.flow_eigen.back();
    if (!(stable.value.real() < 0.0))
        throw precondition_error("parametric_representation: no stable direction to launch from");
    const std::vector<double> vs = detail::real_part(stable.vector);

    for (const double delta : popt.launch_offsets) {
        std::vector<double> q0(fp.location);
        for (std::size_t i = 0; i < q0.size(); ++i)
            q0[i] += popt.stable_amplitude * vs[i] + delta * vu[i];
        auto run = detail::run_arclength_flow(field, q0, 0.0, popt.t_cap, opt,
                                              [&](double, const std::vector<double>& p) {
                                                  return des(p) >= top * popt.grid_margin;
                                              });
        if (!run.budget_reached)
            throw validation_error("parametric_representation: launch trajectory never reached "
                                   "the top of the ratio grid (offset " +
                                   std::to_string(delta) + ")");
        std::vector<std::vector<double>> rows;
        for (const double r : ratio_grid) {
            const auto loc = detail::locate_backward(field, run.traj, des, r);
            if (!loc)
                throw validation_error(
                    "parametric_representation: ratio value not reached on a launch trajectory");
            std::vector<double> row;
            for (const auto& name : table.names) row.push_back(observables.at(name)(loc->p));
            rows.push_back(std::move(row));
        }
        table.values.push_back(std::move(rows));
    }

    for (std::size_t r = 0; r < table.ratios.size(); ++r)
        for (std::size_t o = 0; o < table.names.size(); ++o) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (const auto& launch : table.values) {
                lo = std::min(lo, launch[r][o]);
                hi = std::max(hi, launch[r][o]);
            }
            table.max_launch_spread = std::max(table.max_launch_spread, hi - lo);
        }
    return table;
}

using BlockMap = std::function<std::vector<double>(double, const std::vector<double>&)>;

struct SemigroupOptions {
    double fd_step = 1e-4;
    double tolerance = 1e-8;
};

struct SemigroupReport {
    double identity_error = 0.0;    // max |H(1,p) - p|
    double composition_error = 0.0; // max |H(n^2,p) - H(n,H(n,p))|
    bool valid_semigroup = false;
    std::vector<std::vector<double>> generator;  // dH/dn at n=1 per sample point
    std::optional<double> generator_vs_field_error; // max |G + F| when a field is supplied
};

/// Check that a block-spin recalculation map composes as a semigroup,
/// H(n^2, .) = H(n, H(n, .)), and recover its infinitesimal generator by
/// central differences near n = 1. For a map generated by the flow
/// -dp/dln(l) = F, the generator equals -F.
inline SemigroupReport blocking_semigroup_check(const BlockMap& block, double n,
                                                const std::vector<std::vector<double>>& points,
                                                const SemigroupOptions& sopt = {},
                                                const FlowField* field = nullptr) {
    if (!(n > 1.0)) throw domain_error("blocking_semigroup_check: n must exceed 1");
    if (points.empty()) throw validation_error("blocking_semigroup_check: no sample points");

    SemigroupReport rep;
    double scale = 1.0;
    for (const auto& p : points) {
        const auto hp = block(n, p);
        const auto h2 = block(n * n, p);
        const auto hh = block(n, hp);
        const auto id = block(1.0, p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            rep.composition_error = std::max(rep.composition_error, std::abs(h2[i] - hh[i]));
            rep.identity_error = std::max(rep.identity_error, std::abs(id[i] - p[i]));
            scale = std::max({scale, std::abs(h2[i]), std::abs(p[i])});
        }
        const double h = sopt.fd_step;
        const auto up = block(1.0 + h, p);
        const auto dn = block(1.0 - h, p);
        std::vector<double> g(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) g[i] = (up[i] - dn[i]) / (2.0 * h);
        if (field) {
            const auto F = field->eval(p);
            double err = rep.generator_vs_field_error.value_or(0.0);
            for (std::size_t i = 0; i < p.size(); ++i)
                err = std::max(err, std::abs(g[i] + F[i]));
            rep.generator_vs_field_error = err;
        }
        rep.generator.push_back(std::move(g));
    }
    rep.valid_semigroup = rep.composition_error <= sopt.tolerance * scale &&
                          rep.identity_error <= sopt.tolerance * scale;
    return rep;
}

} // namespace rglab::space
