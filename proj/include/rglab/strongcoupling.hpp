#pragma once

#include "rglab/errors.hpp"
#include "rglab/quadrature.hpp"
#include "rglab/rgflow.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rglab::gauge {

/// One m x n loop coefficient of a generalized plaquette action.
struct PlaquetteCoefficient {
    int m = 1;
    int n = 1;
    double c = 0.0;
};

using PlaquetteTable = std::vector<PlaquetteCoefficient>;

namespace detail {

inline void validate_table(const PlaquetteTable& table, int core_shell) {
    if (table.empty()) throw validation_error("plaquette table: no coefficients");
    std::map<int, double> shell_max; // keyed by m+n
    std::map<std::pair<int, int>, int> seen;
    for (const auto& e : table) {
        if (e.m < 1 || e.n < 1)
            throw validation_error("plaquette table: loop sizes must be >= 1");
        if (++seen[{e.m, e.n}] > 1)
            throw validation_error("plaquette table: duplicate loop entry");
        auto& s = shell_max[e.m + e.n];
        s = std::max(s, std::abs(e.c));
    }
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& [shell, mx] : shell_max) {
        if (shell > core_shell && mx > prev)
            throw validation_error(
                "plaquette table: coefficients must decrease with m+n beyond the core (shell " +
                std::to_string(shell) + ")");
        prev = mx;
    }
}

/// Dominant-plaquette heuristic: the entry with the largest |C| * area
/// sets the effective scales, a1^2 = (m n) a^2 and a2 = max(m, n) a. Ties
/// resolve toward the smaller loop.
inline PlaquetteCoefficient dominant(const PlaquetteTable& table) {
    PlaquetteCoefficient best = table.front();
    double best_w = std::abs(best.c) * best.m * best.n;
    for (const auto& e : table) {
        const double w = std::abs(e.c) * e.m * e.n;
        const bool better = w > best_w || (w == best_w && (e.m + e.n < best.m + best.n ||
                                                           (e.m + e.n == best.m + best.n &&
                                                            e.m < best.m)));
        if (better) {
            best = e;
            best_w = w;
        }
    }
    return best;
}

} // namespace detail

/// Generalized Wilson-action model: bare coupling, lattice spacing, and
/// the effective scale factors a1 = k1 a, a2 = k2 a.
struct StrongCouplingModel {
    double g0_sq = 3.0;
    double a = 1.0;
    double k1 = 1.0;
    double k2 = 1.0;
    std::optional<PlaquetteTable> cmn;
    int cmn_core_shell = 2; // shells m+n up to this value are exempt from the decrease rule

    void validate() const {
        if (!(a > 0.0)) throw domain_error("strong-coupling model: lattice spacing must be > 0");
        if (!(k1 > 0.0 && k2 > 0.0))
            throw domain_error("strong-coupling model: scale factors must be > 0");
        if (!(g0_sq > 1.0 / 3.0))
            throw regime_error("strong-coupling model: g0^2 <= 1/3 lies outside the "
                               "strong-coupling regime (ln(3 g0^2) <= 0)");
        if (cmn) detail::validate_table(*cmn, cmn_core_shell);
    }

    /// Build the model from a plaquette-coefficient table via the
    /// dominant-plaquette rule.
    static StrongCouplingModel from_plaquette_table(double g0_sq, double a, PlaquetteTable table,
                                                    int core_shell = 2) {
        detail::validate_table(table, core_shell);
        const auto dom = detail::dominant(table);
        StrongCouplingModel m;
        m.g0_sq = g0_sq;
        m.a = a;
        m.k1 = std::sqrt(double(dom.m) * double(dom.n));
        m.k2 = double(std::max(dom.m, dom.n));
        m.cmn = std::move(table);
        m.cmn_core_shell = core_shell;
        m.validate();
        return m;
    }
};

struct ConfinementPrediction {
    double sigma = 0.0; // string tension, 1/length^2
    double mass = 0.0;  // lightest glueball mass, 1/length
    double ratio = 0.0; // sigma / mass^2
    double potential_slope = 0.0;

    double potential(double R) const { return potential_slope * R; }
};

/// Leading strong-coupling expressions sigma = ln(3 g0^2)/a1^2 and
/// m = 4 ln(3 g0^2)/a2 for the generalized action; k1 = k2 = 1 is the
/// plain Wilson case.
inline ConfinementPrediction wilson_strong_coupling(const StrongCouplingModel& model) {
    model.validate();
    const double L = std::log(3.0 * model.g0_sq);
    const double a1 = model.k1 * model.a;
    const double a2 = model.k2 * model.a;
    ConfinementPrediction p;
    p.sigma = L / (a1 * a1);
    p.mass = 4.0 * L / a2;
    p.ratio = p.sigma / (p.mass * p.mass);
    p.potential_slope = p.sigma;
    return p;
}

/// Exact inverse of the Wilson-case string tension: g0^2 = (1/3) exp(sigma a^2).
inline double invert_bare_charge(double sigma, double a) {
    if (!(sigma > 0.0)) throw domain_error("invert_bare_charge: sigma must be > 0");
    if (!(a > 0.0)) throw domain_error("invert_bare_charge: spacing must be > 0");
    return std::exp(sigma * a * a) / 3.0;
}

/// Exact inverse of the Wilson-case glueball mass: g0^2 = (1/3) exp(m a / 4).
/// Since a/xi = m a is a free parameter, this makes arbitrarily strong bare
/// coupling reachable at fixed renormalized mass.
inline double invert_from_mass(double mass, double a) {
    if (!(mass > 0.0)) throw domain_error("invert_from_mass: mass must be > 0");
    if (!(a > 0.0)) throw domain_error("invert_from_mass: spacing must be > 0");
    return std::exp(mass * a / 4.0) / 3.0;
}

/// sigma / m^2 = a2^2 / (16 a1^2 ln(3 g0^2)). For a1 ~ a2 this is small
/// throughout the strong-coupling region, which is what bounds the
/// reachable window of the structural constant there.
inline double sigma_over_m2(const StrongCouplingModel& model) {
    model.validate();
    const double L = std::log(3.0 * model.g0_sq);
    return (model.k2 * model.k2) / (16.0 * model.k1 * model.k1 * L);
}

struct PlaquetteScaling {
    double k1 = 1.0;          // sqrt(n): a1^2 = n a^2
    double k2 = 1.0;          // n: a2 = n a
    double k1_sq_factor = 1.0;
    double ratio_factor = 1.0; // sigma/m^2 enhancement over the Wilson case
};

/// Scale factors when the 1 x n plaquette dominates the action: a1^2 = n a^2,
/// a2 = n a, so sigma/m^2 grows by exactly n over the Wilson case.
inline PlaquetteScaling plaquette_scaling(int n) {
    if (n < 1) throw domain_error("plaquette_scaling: n must be >= 1");
    PlaquetteScaling s;
    s.k1_sq_factor = double(n);
    s.k1 = std::sqrt(double(n));
    s.k2 = double(n);

    StrongCouplingModel wilson;
    StrongCouplingModel widened;
    widened.k1 = s.k1;
    widened.k2 = s.k2;
    s.ratio_factor = sigma_over_m2(widened) / sigma_over_m2(wilson);
    return s;
}

struct TransmutationOptions {
    std::optional<double> reference;        // default: first grid point
    std::optional<double> second_reference; // family 2 reference; default same as family 1
    double c1 = 1.0;
    double c2 = 2.5;
    double a = 1.0;
    double tol = 1e-8;
    double quad_tol = 1e-12;
};

struct TransmutationReport {
    std::vector<double> grid;
    std::vector<double> B;       // integral of 1/beta from the reference coupling
    std::vector<double> family1; // c1 a^mu exp((mu/2) B)
    std::vector<double> family2;
    std::vector<double> ratio;
    double max_ratio_deviation = 0.0; // relative spread of the ratio across the grid
    bool ratio_constant = false;
};

/// Dimensional-transmutation bookkeeping: A = const a^mu exp{(mu/2) B(g0^2)}
/// with B = integral dg0^2/beta(g0^2). Two families of the same dimension mu
/// built with different constants must have a coupling-independent ratio.
inline TransmutationReport transmutation_check(const flow::BetaFunction& beta, double mu,
                                               std::vector<double> g0_grid,
                                               const TransmutationOptions& opt = {}) {
    if (g0_grid.empty()) throw validation_error("transmutation_check: empty coupling grid");
    std::sort(g0_grid.begin(), g0_grid.end());
    const double ref1 = opt.reference.value_or(g0_grid.front());
    const double ref2 = opt.second_reference.value_or(ref1);
    const double lo = std::min({g0_grid.front(), ref1, ref2});
    const double hi = std::max({g0_grid.back(), ref1, ref2});
    if (!(lo > 0.0)) throw domain_error("transmutation_check: couplings must be positive");

    for (const double r : flow::find_beta_roots(beta, lo, hi, 4000))
        throw singularity_error("transmutation_check: beta has a root at g0^2 = " +
                                std::to_string(r) + " inside the integration range");

    const auto inv_beta = [&beta](double u) { return 1.0 / beta(u); };
    const auto B_from = [&](double ref, double u) {
        if (u == ref) return 0.0;
        return quad::integrate(inv_beta, ref, u, opt.quad_tol).value;
    };

    TransmutationReport rep;
    rep.grid = g0_grid;
    for (const double u : g0_grid) {
        const double b1 = B_from(ref1, u);
        const double b2 = (ref2 == ref1) ? b1 : B_from(ref2, u);
        rep.B.push_back(b1);
        rep.family1.push_back(opt.c1 * std::pow(opt.a, mu) * std::exp(0.5 * mu * b1));
        rep.family2.push_back(opt.c2 * std::pow(opt.a, mu) * std::exp(0.5 * mu * b2));
        rep.ratio.push_back(rep.family1.back() / rep.family2.back());
    }
    const double r0 = rep.ratio.front();
    for (const double r : rep.ratio)
        rep.max_ratio_deviation = std::max(rep.max_ratio_deviation, std::abs(r - r0) /
                                                                        std::abs(r0));
    rep.ratio_constant = rep.max_ratio_deviation <= opt.tol;
    return rep;
}

enum class RatioVariant { Diverges, Vanishes, Finite, Undetermined };

inline const char* to_string(RatioVariant v) {
    switch (v) {
    case RatioVariant::Diverges: return "diverges";
    case RatioVariant::Vanishes: return "vanishes";
    case RatioVariant::Finite: return "finite";
    case RatioVariant::Undetermined: return "undetermined";
    }
    return "unknown";
}

enum class GapVerdict { GapFinite, GapVanishes, Undetermined };

inline const char* to_string(GapVerdict v) {
    switch (v) {
    case GapVerdict::GapFinite: return "gap_finite";
    case GapVerdict::GapVanishes: return "gap_vanishes";
    case GapVerdict::Undetermined: return "undetermined";
    }
    return "unknown";
}

struct FixedPointScan {
    double g_star = 0.0;
    bool stable = false;
    RatioVariant variant = RatioVariant::Undetermined;
    double c0 = 0.0; // limit value for the Finite variant
    std::string note;
};

struct MassGapVerdict {
    std::vector<FixedPointScan> fixed_points;
    std::vector<double> special_values; // c0 values from stable fixed points
    GapVerdict verdict = GapVerdict::Undetermined;
    double queried_c = 0.0;
    bool wilson_regime_verified = false;
    double wilson_window_max = 0.0;
};

struct MassGapOptions {
    double grid_lo = 1e-6;
    double grid_hi = 1e6;
    int grid_points = 10000;
    double diverge_threshold = 1e8;
    double vanish_threshold = 1e-9;
    double limit_accuracy = 1e-6;
    double c0_match_tol = 1e-6;
    double wilson_g0sq_floor = 1.0; // strong-coupling floor defining the verified window
};

namespace detail {

/// One-sided limit of F at g_star from below, by geometric approach and
/// Neville extrapolation to zero offset.
inline FixedPointScan ratio_limit(const std::function<double(double)>& F, double g_star,
                                  double lower_bound, const MassGapOptions& opt) {
    FixedPointScan scan;
    scan.g_star = g_star;

    const double delta0 = 0.25 * (g_star - lower_bound);
    constexpr int K = 22;
    std::vector<double> delta(K), value(K);
    for (int k = 0; k < K; ++k) {
        delta[k] = delta0 * std::pow(0.5, k);
        value[k] = F(g_star - delta[k]);
        if (!std::isfinite(value[k]) || std::abs(value[k]) > opt.diverge_threshold) {
            // Confirm growth before declaring divergence.
            if (k >= 2 && std::abs(value[k - 1]) > std::abs(value[k - 2])) {
                scan.variant = RatioVariant::Diverges;
                return scan;
            }
            scan.variant = RatioVariant::Undetermined;
            scan.note = "ratio exceeded the divergence threshold without monotone growth";
            return scan;
        }
    }
    if (std::abs(value[K - 1]) > std::abs(value[K - 2]) &&
        std::abs(value[K - 2]) > std::abs(value[K - 3]) &&
        std::abs(value[K - 1]) > opt.diverge_threshold * 1e-4) {
        scan.variant = RatioVariant::Diverges;
        return scan;
    }

    // Neville tableau on the last few abscissae.
    const int m = 6;
    std::vector<double> x(delta.end() - m, delta.end());
    std::vector<double> y(value.end() - m, value.end());
    double prev_diag = y[0];
    double err = std::numeric_limits<double>::infinity();
    for (int j = 1; j < m; ++j) {
        for (int i = 0; i < m - j; ++i)
            y[i] = ((0.0 - x[i + j]) * y[i] + (x[i] - 0.0) * y[i + 1]) / (x[i] - x[i + j]);
        err = std::abs(y[0] - prev_diag);
        prev_diag = y[0];
    }
    const double c0 = y[0];
    if (err <= opt.limit_accuracy * std::max(1.0, std::abs(c0))) {
        if (std::abs(c0) <= opt.vanish_threshold) {
            scan.variant = RatioVariant::Vanishes;
        } else {
            scan.variant = RatioVariant::Finite;
            scan.c0 = c0;
        }
    } else {
        scan.variant = RatioVariant::Undetermined;
        scan.note = "extrapolation of the ratio did not settle (residual " +
                    std::to_string(err) + ")";
    }
    return scan;
}

} // namespace detail

/// Mass-gap construction for the one-parameter family sigma/m^2 = c: find
/// the roots of the renormalized-scale beta, keep the stable ones (the
/// charge flows toward them as m -> 0), take the one-sided limit of
/// F_sigma at each, and compare the queried structural constant against
/// the finite limit values c0. Small c values additionally fall inside
/// the analytically verified strong-coupling window.
inline MassGapVerdict mass_gap_scan(const flow::BetaFunction& beta_renorm,
                                    const std::function<double(double)>& F_sigma, double c,
                                    const MassGapOptions& opt = {}) {
    if (!(c > 0.0)) throw domain_error("mass_gap_scan: structural constant must be positive");
    if (!(opt.wilson_g0sq_floor > 1.0 / 3.0))
        throw domain_error("mass_gap_scan: the strong-coupling floor must exceed 1/3");

    MassGapVerdict out;
    out.queried_c = c;
    out.wilson_window_max =
        1.0 / (16.0 * std::log(3.0 * opt.wilson_g0sq_floor));
    out.wilson_regime_verified = c <= out.wilson_window_max;

    const auto roots = flow::find_beta_roots(beta_renorm, opt.grid_lo, opt.grid_hi,
                                             opt.grid_points);
    double below = opt.grid_lo;
    bool any_undetermined = false;
    for (const double r : roots) {
        // Stability under dg^2/d ln m^2 = beta: attracting as m -> 0 means
        // beta < 0 below the root and beta > 0 above it.
        const double h = std::max(1e-7 * r, 1e-12);
        const bool stable = beta_renorm(std::max(r - h, 0.0)) < 0.0 && beta_renorm(r + h) > 0.0;
        FixedPointScan scan;
        if (stable) {
            scan = detail::ratio_limit(F_sigma, r, below, opt);
            scan.stable = true;
            if (scan.variant == RatioVariant::Finite) out.special_values.push_back(scan.c0);
            if (scan.variant == RatioVariant::Undetermined) any_undetermined = true;
        } else {
            scan.g_star = r;
            scan.stable = false;
            scan.note = "unstable fixed point; not part of the m -> 0 limit set";
        }
        out.fixed_points.push_back(scan);
        below = r;
    }

    bool matches = false;
    for (const double c0 : out.special_values)
        matches = matches || std::abs(c - c0) <= opt.c0_match_tol * std::max(1.0, std::abs(c0));

    if (matches)
        out.verdict = GapVerdict::GapVanishes;
    else if (any_undetermined)
        out.verdict = GapVerdict::Undetermined;
    else
        out.verdict = GapVerdict::GapFinite;
    return out;
}

} // namespace rglab::gauge
