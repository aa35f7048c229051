#pragma once

#include "rglab/errors.hpp"
#include "rglab/ode.hpp"
#include "rglab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace rglab::flow {

/// Built-in closed forms for the large-coupling regime.
enum class ClosedForm {
    YangMillsStrongCoupling, // beta(u) = -u ln(3u)
};

/// Declared large-u power law: beta(u) -> amplitude * u^exponent.
struct Asymptote {
    double amplitude = 0.0;
    double exponent = 0.0;
};

/// A Gell-Mann--Low function of a single nonnegative coupling u.
///
/// The base behavior is either a power series with an explicit lowest
/// power (so beta(g) = b0 g^2 + ... and beta(g^2) = b0 g^4 + ... are both
/// expressible) or a built-in closed form. An optional power-law
/// asymptote takes over at large u, linearly blended with the base over
/// [crossover, 2*crossover] so the evaluation stays continuous.
class BetaFunction {
public:
    static BetaFunction series(std::vector<double> coeffs, int lowest_power) {
        if (lowest_power < 1)
            throw validation_error(
                "beta series: lowest power must be >= 1 (beta(0) = 0 admits no constant term)");
        BetaFunction b;
        b.coeffs_ = std::move(coeffs);
        b.offset_ = lowest_power;
        return b;
    }

    static BetaFunction zero() { return series({}, 1); }

    static BetaFunction closed_form(ClosedForm id) {
        BetaFunction b;
        b.closed_ = id;
        return b;
    }

    BetaFunction with_asymptote(double amplitude, double exponent, double crossover_u) const {
        if (!(crossover_u > 0.0))
            throw validation_error("beta asymptote: crossover coupling must be positive");
        BetaFunction b = *this;
        b.asymptote_ = Asymptote{amplitude, exponent};
        b.crossover_ = crossover_u;
        return b;
    }

    /// Same beta with every amplitude multiplied by factor > 0.
    BetaFunction scaled(double factor) const {
        if (!(factor > 0.0)) throw domain_error("beta scaling factor must be positive");
        BetaFunction b = *this;
        for (double& c : b.coeffs_) c *= factor;
        if (b.asymptote_) b.asymptote_->amplitude *= factor;
        b.scale_ *= factor;
        return b;
    }

    double operator()(double u) const {
        if (u < 0.0) throw domain_error("beta function evaluated at negative coupling");
        if (!asymptote_ || u <= crossover_) return base(u);
        const double asym = asymptote_->amplitude * std::pow(u, asymptote_->exponent);
        if (u >= 2.0 * crossover_) return asym;
        const double w = (u - crossover_) / crossover_;
        return (1.0 - w) * base(u) + w * asym;
    }

    const std::optional<Asymptote>& declared_asymptote() const { return asymptote_; }
    double crossover() const { return crossover_; }
    std::optional<ClosedForm> closed_form_id() const { return closed_; }
    const std::vector<double>& series_coeffs() const { return coeffs_; }
    int lowest_power() const { return offset_; }

    bool identically_zero() const {
        if (closed_ || asymptote_) return false;
        return std::all_of(coeffs_.begin(), coeffs_.end(), [](double c) { return c == 0.0; });
    }

    /// Effective power-law behavior at u -> infinity, when one exists:
    /// the declared asymptote, else the highest series term. The
    /// Yang-Mills closed form has no power-law tail.
    std::optional<Asymptote> power_law_tail() const {
        if (asymptote_) return asymptote_;
        if (closed_) return std::nullopt;
        for (int k = static_cast<int>(coeffs_.size()) - 1; k >= 0; --k)
            if (coeffs_[k] != 0.0) return Asymptote{coeffs_[k], double(offset_ + k)};
        return std::nullopt;
    }

    /// Cauchy bound on positive roots of the series part: no root of the
    /// series exceeds this value. Meaningful only when the top
    /// coefficient is nonzero.
    double series_root_bound() const {
        int top = -1;
        for (int k = static_cast<int>(coeffs_.size()) - 1; k >= 0; --k)
            if (coeffs_[k] != 0.0) { top = k; break; }
        if (top < 0) return 0.0;
        double m = 0.0;
        for (int k = 0; k < top; ++k) m = std::max(m, std::abs(coeffs_[k] / coeffs_[top]));
        return 1.0 + m;
    }

private:
    double base(double u) const {
        if (closed_) {
            // -u ln(3u); continuous limit 0 at u = 0.
            return (u == 0.0) ? 0.0 : -scale_ * u * std::log(3.0 * u);
        }
        if (coeffs_.empty()) return 0.0;
        double poly = 0.0;
        for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) poly = poly * u + *it;
        return poly * std::pow(u, offset_);
    }

    std::vector<double> coeffs_;
    int offset_ = 1;
    std::optional<ClosedForm> closed_;
    std::optional<Asymptote> asymptote_;
    double crossover_ = std::numeric_limits<double>::infinity();
    double scale_ = 1.0; // amplitude factor applied to closed forms
};

struct FlowOptions {
    double divergence_threshold = 1e12;
    double stall_tolerance = 1e-14;
    ode::Options ode{};
};

struct PoleDetected {
    double lnl0 = 0.0; // scale at which the divergence threshold was crossed
};
struct HorizonReached {};
struct FixedPointReached {
    double u_star = 0.0;
};
struct Underflow {};

using Termination = std::variant<PoleDetected, HorizonReached, FixedPointReached, Underflow>;

struct FlowSample {
    double lnl = 0.0;
    double u = 0.0;
};

struct FlowResult {
    std::vector<FlowSample> samples;
    Termination termination = HorizonReached{};

    const FlowSample& last() const { return samples.back(); }
    bool pole_detected() const { return std::holds_alternative<PoleDetected>(termination); }
    bool reached_horizon() const { return std::holds_alternative<HorizonReached>(termination); }
    bool at_fixed_point() const {
        return std::holds_alternative<FixedPointReached>(termination);
    }
};

inline const char* termination_name(const Termination& t) {
    struct V {
        const char* operator()(const PoleDetected&) const { return "pole_detected"; }
        const char* operator()(const HorizonReached&) const { return "horizon_reached"; }
        const char* operator()(const FixedPointReached&) const { return "fixed_point_reached"; }
        const char* operator()(const Underflow&) const { return "underflow"; }
    };
    return std::visit(V{}, t);
}

/// Integrate -du/dlnL = beta(u) from lnl_init to lnl_target (either
/// direction), sampling every accepted step. Terminates early when u
/// crosses the divergence threshold (PoleDetected) or |beta(u)| falls
/// below the stall tolerance (FixedPointReached). Step-size collapse is
/// reported as Underflow, never as a silent wrong answer.
inline FlowResult integrate_flow(const BetaFunction& beta, double u_init, double lnl_init,
                                 double lnl_target, const FlowOptions& opt = {}) {
    if (u_init < 0.0) throw domain_error("integrate_flow: initial coupling must be >= 0");
    if (lnl_target == lnl_init)
        throw domain_error("integrate_flow: target scale equals initial scale");

    FlowResult res;
    if (std::abs(beta(u_init)) < opt.stall_tolerance) {
        res.samples.push_back({lnl_init, u_init});
        res.termination = FixedPointReached{u_init};
        return res;
    }

    // Transient tiny negatives from the stepper are clamped; beta(0) = 0
    // keeps the clamp consistent with the flow.
    const ode::Rhs rhs = [&beta](double, const std::vector<double>& y,
                                 std::vector<double>& dy) {
        dy[0] = -beta(std::max(y[0], 0.0));
    };

    bool stopped = false;
    const ode::StepObserver obs = [&](double s, const std::vector<double>& y) {
        const double u = std::max(y[0], 0.0);
        res.samples.push_back({s, u});
        if (u >= opt.divergence_threshold) {
            res.termination = PoleDetected{s};
            stopped = true;
            return false;
        }
        if (std::abs(beta(u)) < opt.stall_tolerance) {
            res.termination = FixedPointReached{u};
            stopped = true;
            return false;
        }
        return true;
    };

    const ode::Result r = ode::integrate(rhs, lnl_init, {u_init}, lnl_target, opt.ode, obs);
    if (!stopped) {
        switch (r.status) {
        case ode::Status::ReachedTarget: res.termination = HorizonReached{}; break;
        case ode::Status::StepUnderflow:
        case ode::Status::MaxSteps: res.termination = Underflow{}; break;
        case ode::Status::ObserverStop: break; // unreachable: stopped would be set
        }
    }
    return res;
}

/// Everything detect_landau_pole learned while trying to certify a pole.
struct PoleCertificate {
    bool certified = false;
    double lnl0 = 0.0;              // pole location, valid when certified
    double threshold_crossing = 0.0; // lnL where u crossed the divergence threshold
    double tail_correction = 0.0;    // lnL remaining between the crossing and the pole
    std::string reason;              // populated when not certified
};

/// Certify and locate a Landau pole toward small L. Certification
/// requires the flow to actually traverse up to the divergence threshold
/// (no stall, no horizon) and the large-u tail to be an integrable power
/// law (exponent > 1 with positive amplitude). The location is then
/// lnL_scale - integral du/beta(u) over [u_at_scale, infinity); beyond
/// twice the crossover the integrand is the declared asymptote itself, so
/// the extrapolated piece is the closed-form blow-up of that asymptote.
inline PoleCertificate detect_landau_pole_detailed(const BetaFunction& beta, double u_at_scale,
                                                   double lnl_scale, double lnl_horizon,
                                                   const FlowOptions& opt = {}) {
    if (!(lnl_horizon < lnl_scale))
        throw domain_error("detect_landau_pole: horizon must lie below the starting scale");
    PoleCertificate cert;

    const FlowResult fr = integrate_flow(beta, u_at_scale, lnl_scale, lnl_horizon, opt);
    if (!fr.pole_detected()) {
        cert.reason = std::string("flow terminated with ") + termination_name(fr.termination) +
                      " before the divergence threshold";
        return cert;
    }
    cert.threshold_crossing = std::get<PoleDetected>(fr.termination).lnl0;

    const auto tail = beta.power_law_tail();
    if (!tail) {
        cert.reason = "no power-law tail declared or derivable";
        return cert;
    }
    if (!(tail->amplitude > 0.0) || !(tail->exponent > 1.0)) {
        // Exponent <= 1 means u reaches infinity only as L -> 0.
        cert.reason = "tail is not an integrable power law (exponent <= 1 or amplitude <= 0)";
        return cert;
    }
    if (!beta.declared_asymptote()) {
        // Series-only beta: make sure the series stays positive beyond
        // the traversed range before trusting the tail integral.
        if (beta.series_root_bound() >= opt.divergence_threshold) {
            cert.reason = "series positivity beyond the divergence threshold is unverified";
            return cert;
        }
    } else if (2.0 * beta.crossover() > opt.divergence_threshold) {
        cert.reason = "asymptote blend region extends beyond the traversed range";
        return cert;
    }

    const auto inv_beta = [&beta](double u) { return 1.0 / beta(u); };
    const quad::Estimate total = quad::integrate(inv_beta, u_at_scale, quad::infinity, 1e-12);
    const quad::Estimate beyond =
        quad::integrate(inv_beta, opt.divergence_threshold, quad::infinity, 1e-12);
    cert.tail_correction = beyond.value;
    cert.lnl0 = lnl_scale - total.value;
    if (cert.lnl0 < lnl_horizon) {
        cert.reason = "certified pole lies beyond the search horizon";
        return cert;
    }
    cert.certified = true;
    return cert;
}

inline std::optional<double> detect_landau_pole(const BetaFunction& beta, double u_at_scale,
                                                double lnl_scale, double lnl_horizon,
                                                const FlowOptions& opt = {}) {
    const PoleCertificate c =
        detect_landau_pole_detailed(beta, u_at_scale, lnl_scale, lnl_horizon, opt);
    if (!c.certified) return std::nullopt;
    return c.lnl0;
}

enum class Triviality { TrulyTrivial, WilsonTrivialOnly, NonTrivial };

inline const char* to_string(Triviality t) {
    switch (t) {
    case Triviality::TrulyTrivial: return "truly_trivial";
    case Triviality::WilsonTrivialOnly: return "wilson_trivial_only";
    case Triviality::NonTrivial: return "non_trivial";
    }
    return "unknown";
}

struct TrivialityRationale {
    bool nonnegative_on_grid = false;
    std::optional<double> negative_at;   // a coupling where beta < 0
    std::optional<double> interior_zero; // a coupling u > 0 where beta vanishes
    double grid_min = 0.0;
    double grid_min_at = 0.0;
    std::optional<double> asymptote_exponent;
    std::optional<double> pole_lnl0; // canonical probe u(lnL=0)=1, when a pole exists
};

struct TrivialityVerdict {
    Triviality verdict = Triviality::NonTrivial;
    TrivialityRationale rationale;
};

struct ClassifyOptions {
    double grid_lo = 1e-6;
    double grid_hi = 1e6;
    int grid_points = 10000;
    int bisect_iters = 200;
    bool probe_pole = true;
    FlowOptions flow{};
};

/// Classify a beta function under the two triviality definitions. The
/// sign pattern is scanned on a logarithmic grid and refined by bisection
/// near sign changes: nonnegative with its sole zero at u = 0 means the
/// effective charge dies out at large distances (Wilson-trivial); a
/// large-u exponent above 1 additionally makes the finite-interaction
/// assumption inconsistent (truly trivial). Any negative region or
/// interior zero defeats both.
inline TrivialityVerdict classify_triviality(const BetaFunction& beta,
                                             const ClassifyOptions& opt = {}) {
    if (!beta.declared_asymptote() && !beta.closed_form_id())
        throw classification_error(
            "classify_triviality: beta declares no large-coupling behavior");

    TrivialityVerdict out;
    auto& r = out.rationale;
    if (const auto tail = beta.declared_asymptote()) r.asymptote_exponent = tail->exponent;

    const double ratio = std::pow(opt.grid_hi / opt.grid_lo, 1.0 / (opt.grid_points - 1));
    double prev_u = 0.0, prev_v = 0.0;
    bool have_prev = false;
    r.grid_min = std::numeric_limits<double>::infinity();

    double u = opt.grid_lo;
    for (int i = 0; i < opt.grid_points; ++i, u *= ratio) {
        const double v = beta(u);
        if (v < r.grid_min) {
            r.grid_min = v;
            r.grid_min_at = u;
        }
        if (v == 0.0) {
            r.interior_zero = u;
            out.verdict = Triviality::NonTrivial;
            return out;
        }
        if (v < 0.0) {
            r.negative_at = u;
            if (have_prev && prev_v > 0.0) {
                // Bisect for the crossing point.
                double lo = prev_u, hi = u;
                for (int it = 0; it < opt.bisect_iters; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (beta(mid) > 0.0 ? lo : hi) = mid;
                }
                r.interior_zero = 0.5 * (lo + hi);
            }
            out.verdict = Triviality::NonTrivial;
            return out;
        }
        prev_u = u;
        prev_v = v;
        have_prev = true;
    }

    r.nonnegative_on_grid = true;
    const auto tail = beta.declared_asymptote();
    if (tail && tail->exponent > 1.0) {
        out.verdict = Triviality::TrulyTrivial;
        if (opt.probe_pole)
            if (const auto p = detect_landau_pole(beta, 1.0, 0.0, -1e3, opt.flow))
                r.pole_lnl0 = *p;
    } else if (tail) {
        out.verdict = Triviality::WilsonTrivialOnly;
    } else {
        // A positive-on-grid closed form without a declared power law
        // cannot be assigned an exponent; refuse rather than guess.
        throw classification_error(
            "classify_triviality: closed form provides no power-law exponent");
    }
    return out;
}

/// Roots of beta on [lo, hi], located by a logarithmic grid scan refined
/// with bisection. Returns sorted root locations (relative accuracy ~1e-13).
inline std::vector<double> find_beta_roots(const BetaFunction& beta, double lo, double hi,
                                           int grid_points = 10000) {
    if (!(0.0 < lo && lo < hi)) throw domain_error("find_beta_roots: need 0 < lo < hi");
    std::vector<double> roots;
    const double ratio = std::pow(hi / lo, 1.0 / (grid_points - 1));
    double u_prev = lo, v_prev = beta(lo);
    if (v_prev == 0.0) roots.push_back(lo);
    double u = lo * ratio;
    for (int i = 1; i < grid_points; ++i, u *= ratio) {
        const double v = beta(u);
        if (v == 0.0) {
            roots.push_back(u);
        } else if (v_prev != 0.0 && (v > 0.0) != (v_prev > 0.0)) {
            double a = u_prev, b = u;
            double va = v_prev;
            for (int it = 0; it < 200 && (b - a) > 1e-15 * b; ++it) {
                const double m = 0.5 * (a + b);
                const double vm = beta(m);
                if (vm == 0.0) { a = b = m; break; }
                if ((vm > 0.0) == (va > 0.0)) { a = m; va = vm; }
                else b = m;
            }
            roots.push_back(0.5 * (a + b));
        }
        u_prev = u;
        v_prev = v;
    }
    return roots;
}

/// One-loop relation between the renormalized coupling at scale m and the
/// bare coupling at cutoff: g0^2 = g^2 / (1 + |b0| g^2 ln(Lambda^2/m^2)).
inline double one_loop_bare_charge(double g2, double beta0_abs, double ln_ratio) {
    if (g2 < 0.0) throw domain_error("one_loop_bare_charge: g^2 must be >= 0");
    if (beta0_abs < 0.0) throw domain_error("one_loop_bare_charge: |beta0| must be >= 0");
    if (ln_ratio < 0.0)
        throw domain_error(
            "one_loop_bare_charge: ln(Lambda^2/m^2) must be >= 0 (cutoff above mass scale)");
    return g2 / (1.0 + beta0_abs * g2 * ln_ratio);
}

} // namespace rglab::flow
