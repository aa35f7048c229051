#pragma once

#include "rglab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace rglab::lattice {

using Offset = std::vector<int>;
using CouplingMap = std::map<Offset, double>;

namespace detail {

inline void for_each_point_group_image(const Offset& x, const std::function<void(Offset&)>& fn) {
    const int d = static_cast<int>(x.size());
    std::vector<int> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    Offset img(d);
    do {
        for (int signs = 0; signs < (1 << d); ++signs) {
            for (int i = 0; i < d; ++i)
                img[i] = ((signs >> i) & 1) ? -x[perm[i]] : x[perm[i]];
            fn(img);
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
}

} // namespace detail

/// Check reflection (x -> -x) and hypercubic point-group symmetry of an
/// overlap-integral map, plus finite support.
inline void validate_couplings(const CouplingMap& couplings, int dim, int max_range = 8) {
    if (couplings.empty()) throw validation_error("couplings: empty map");
    for (const auto& [x, J] : couplings) {
        if (static_cast<int>(x.size()) != dim)
            throw validation_error("couplings: offset dimension mismatch");
        for (int c : x)
            if (std::abs(c) > max_range)
                throw validation_error("couplings: offset exceeds the declared range");
        bool bad = false;
        detail::for_each_point_group_image(x, [&](Offset& img) {
            const auto it = couplings.find(img);
            if (it == couplings.end() || std::abs(it->second - J) > 1e-12 * std::max(1.0, std::abs(J)))
                bad = true;
        });
        if (bad)
            throw validation_error(
                "couplings: map is not symmetric under the lattice point group");
    }
}

/// J for the standard nearest-neighbor discretization of -laplacian:
/// epsilon(p) = sum_i 2 (1 - cos p_i).
inline CouplingMap nearest_neighbor_couplings(int dim) {
    CouplingMap J;
    Offset zero(dim, 0);
    J[zero] = 2.0 * dim;
    for (int i = 0; i < dim; ++i) {
        Offset e(dim, 0);
        e[i] = 1;
        J[e] = -1.0;
        e[i] = -1;
        J[e] = -1.0;
    }
    return J;
}

/// Fourth-order improved stencil (-1, 16, -30, 16, -1)/12 per axis; the
/// p^4 term of the spectrum cancels.
inline CouplingMap improved_couplings(int dim) {
    CouplingMap J;
    Offset zero(dim, 0);
    J[zero] = dim * 30.0 / 12.0;
    for (int i = 0; i < dim; ++i) {
        Offset e(dim, 0);
        for (int s : {+1, -1}) {
            e[i] = s;
            J[e] = -16.0 / 12.0;
            e[i] = 2 * s;
            J[e] = 1.0 / 12.0;
        }
        e[i] = 0;
    }
    return J;
}

/// A periodic hypercubic Ising lattice with generalized couplings and the
/// inverse-temperature-like parameter kappa. Boltzmann weight:
/// exp(-kappa E), E = sum over unordered site pairs of J_eff s s.
struct LatticeSpec {
    int dim = 2;
    int side = 4;
    CouplingMap couplings;
    double kappa = 0.0;
    int max_range = 8;

    int sites() const {
        int n = 1;
        for (int i = 0; i < dim; ++i) n *= side;
        return n;
    }

    void validate() const {
        if (dim < 2 || dim > 4)
            throw validation_error("lattice spec: dimension must be 2, 3 or 4");
        if (side < 2) throw validation_error("lattice spec: side must be >= 2");
        validate_couplings(couplings, dim, max_range);
    }
};

/// Bare lattice spectrum epsilon(p) = sum_x J_x exp(i p.x) with its fitted
/// small-p coefficients. Point-group symmetry makes the sum real.
class Spectrum {
public:
    Spectrum(CouplingMap couplings, int dim, std::vector<double> c2, std::vector<double> c4)
        : couplings_(std::move(couplings)), dim_(dim), c2_(std::move(c2)), c4_(std::move(c4)) {}

    double operator()(const std::vector<double>& p) const {
        if (static_cast<int>(p.size()) != dim_)
            throw domain_error("spectrum: momentum dimension mismatch");
        double e = 0.0;
        for (const auto& [x, J] : couplings_) {
            double phase = 0.0;
            for (int i = 0; i < dim_; ++i) phase += p[i] * x[i];
            e += J * std::cos(phase);
        }
        return e;
    }

    int dim() const { return dim_; }
    const std::vector<double>& p2_coeff_per_axis() const { return c2_; }
    const std::vector<double>& p4_coeff_per_axis() const { return c4_; }
    double p2_coeff() const {
        return std::accumulate(c2_.begin(), c2_.end(), 0.0) / c2_.size();
    }

private:
    CouplingMap couplings_;
    int dim_;
    std::vector<double> c2_, c4_;
};

struct SpectrumOptions {
    double p_max = 0.05;
    int fit_points = 60;
    double zero_tolerance = 1e-12; // on the epsilon(0) sum rule, relative to sum |J|
    double unit_tolerance = 1e-6;  // on the p^2 coefficient
};

/// Build the spectrum evaluator and fit its small-p expansion per axis on
/// a fine grid near p = 0 (basis p^2, p^4, p^6, p^8 in a scaled variable).
/// Both sum rules are enforced: epsilon(0) = 0 and unit p^2 coefficient.
inline Spectrum build_spectrum(const CouplingMap& couplings, const SpectrumOptions& opt = {}) {
    if (couplings.empty()) throw validation_error("build_spectrum: empty coupling map");
    const int dim = static_cast<int>(couplings.begin()->first.size());
    validate_couplings(couplings, dim);

    double j_scale = 0.0, eps0 = 0.0;
    for (const auto& [x, J] : couplings) {
        j_scale += std::abs(J);
        eps0 += J;
    }
    if (std::abs(eps0) > opt.zero_tolerance * std::max(1.0, j_scale))
        throw normalization_error("build_spectrum: epsilon(0) sum rule violated (sum J = " +
                                  std::to_string(eps0) + ")");

    Spectrum probe(couplings, dim, {}, {});
    std::vector<double> c2(dim), c4(dim);
    for (int axis = 0; axis < dim; ++axis) {
        Eigen::MatrixXd A(opt.fit_points, 4);
        Eigen::VectorXd b(opt.fit_points);
        std::vector<double> p(dim, 0.0);
        for (int k = 0; k < opt.fit_points; ++k) {
            const double q = double(k + 1) / opt.fit_points; // scaled momentum in (0, 1]
            p[axis] = q * opt.p_max;
            const double q2 = q * q;
            A(k, 0) = q2;
            A(k, 1) = q2 * q2;
            A(k, 2) = q2 * q2 * q2;
            A(k, 3) = q2 * q2 * q2 * q2;
            b(k) = probe(p);
        }
        const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);
        c2[axis] = coef(0) / (opt.p_max * opt.p_max);
        c4[axis] = coef(1) / std::pow(opt.p_max, 4);
        if (std::abs(c2[axis] - 1.0) > opt.unit_tolerance)
            throw normalization_error(
                "build_spectrum: p^2 coefficient sum rule violated on axis " +
                std::to_string(axis) + " (fitted " + std::to_string(c2[axis]) + ")");
    }
    return Spectrum(couplings, dim, std::move(c2), std::move(c4));
}

struct KappaOptions {
    double g0_floor = 1e2;          // declared strong-coupling floor
    double deep_limit_threshold = 10.0; // |m0^2 a^2| / sqrt(g0) below this is marginal
};

struct KappaResult {
    double kappa = 0.0;
    bool marginal = false;
    std::string warning;
};

/// Ising-limit parameter map: kappa = -m0^2 a^2 / g0 in the regime
/// g0 -> infinity with g0^{-1/2} m0^2 a^2 -> -infinity.
inline KappaResult ising_kappa(double g0, double m0_sq_a_sq, const KappaOptions& opt = {}) {
    if (!(g0 > opt.g0_floor))
        throw regime_error("ising_kappa: bare coupling " + std::to_string(g0) +
                           " is below the strong-coupling floor " + std::to_string(opt.g0_floor));
    if (m0_sq_a_sq > 0.0)
        throw domain_error("ising_kappa: bare mass squared must be negative in the Ising limit");
    KappaResult r;
    r.kappa = -m0_sq_a_sq / g0;
    if (std::abs(m0_sq_a_sq) / std::sqrt(g0) < opt.deep_limit_threshold) {
        r.marginal = true;
        r.warning = "the condition g0^{-1/2} m0^2 a^2 -> -infinity is only marginally met";
    }
    return r;
}

struct Measured {
    double value = 0.0;
    double error = 0.0;
};

struct ObservableSet {
    Measured m2, m4, e; // <M^2>, <M^4>, <E>
    std::optional<Measured> xi, mass, g_renorm;
    long n_samples = 0;
    double tau_int = 0.0;
    bool equilibrated = true;
    std::string note;
};

namespace detail {

struct NeighborTable {
    // flattened adjacency: for site i, entries [start[i], start[i+1])
    std::vector<int> start;
    std::vector<int> nbr;
    std::vector<double> coupling; // effective J, degenerate wraps merged
};

struct Geometry {
    int dim, side, n;
    NeighborTable all;     // every coupling
    NeighborTable cluster; // ferromagnetic nearest-neighbor bonds
    NeighborTable rest;    // everything outside the cluster graph
};

inline Geometry build_geometry(const LatticeSpec& spec) {
    spec.validate();
    Geometry g;
    g.dim = spec.dim;
    g.side = spec.side;
    g.n = spec.sites();

    const auto wrap_index = [&](int site, const Offset& off) {
        int rem = site;
        int idx = 0, stride = 1;
        for (int i = 0; i < spec.dim; ++i) {
            const int c = rem % spec.side;
            rem /= spec.side;
            int w = (c + off[i]) % spec.side;
            if (w < 0) w += spec.side;
            idx += w * stride;
            stride *= spec.side;
        }
        return idx;
    };

    const auto is_nn = [](const Offset& off) {
        int nonzero = 0, mag = 0;
        for (int c : off) {
            if (c != 0) ++nonzero;
            mag += std::abs(c);
        }
        return nonzero == 1 && mag == 1;
    };

    std::map<int, double> acc_all, acc_cluster, acc_rest;
    for (int site = 0; site < g.n; ++site) {
        acc_all.clear();
        acc_cluster.clear();
        acc_rest.clear();
        for (const auto& [off, J] : spec.couplings) {
            bool zero = true;
            for (int c : off) zero = zero && c == 0;
            if (zero) continue; // on-site term is a constant
            const int j = wrap_index(site, off);
            if (j == site) continue; // self wrap: constant contribution
            acc_all[j] += J;
            if (is_nn(off) && J < 0.0)
                acc_cluster[j] += J;
            else
                acc_rest[j] += J;
        }
        const auto push = [site](NeighborTable& t, const std::map<int, double>& acc) {
            if (t.start.empty()) t.start.push_back(0);
            for (const auto& [j, J] : acc) {
                t.nbr.push_back(j);
                t.coupling.push_back(J);
            }
            t.start.push_back(static_cast<int>(t.nbr.size()));
        };
        push(g.all, acc_all);
        push(g.cluster, acc_cluster);
        push(g.rest, acc_rest);
    }
    return g;
}

inline double total_energy(const Geometry& g, const std::vector<int8_t>& s) {
    double e = 0.0;
    for (int i = 0; i < g.n; ++i) {
        double h = 0.0;
        for (int k = g.all.start[i]; k < g.all.start[i + 1]; ++k)
            h += g.all.coupling[k] * s[g.all.nbr[k]];
        e += s[i] * h;
    }
    return 0.5 * e;
}

} // namespace detail

/// Exact Boltzmann averages over all spin configurations, Gray-code
/// enumerated with the first spin frozen (its Z2 partner contributes
/// identically to even moments, and odd moments vanish by construction).
inline ObservableSet exact_enumeration(const LatticeSpec& spec) {
    const auto g = detail::build_geometry(spec);
    if (g.n > 24)
        throw capacity_error("exact_enumeration: " + std::to_string(g.n) +
                             " sites exceed the 24-site capacity");

    const std::uint64_t half = 1ull << (g.n - 1);
    const double kappa = spec.kappa;

    const auto sweep = [&](auto&& visit) {
        std::vector<int8_t> s(g.n, -1);
        double E = detail::total_energy(g, s);
        long M = -g.n;
        visit(E, double(M));
        for (std::uint64_t t = 1; t < half; ++t) {
            const int f = 1 + std::countr_zero(t); // site 0 stays frozen
            double h = 0.0;
            for (int k = g.all.start[f]; k < g.all.start[f + 1]; ++k)
                h += g.all.coupling[k] * s[g.all.nbr[k]];
            E += -2.0 * s[f] * h;
            M += -2 * s[f];
            s[f] = -s[f];
            if ((t & 0xffffull) == 0) E = detail::total_energy(g, s); // kill drift
            visit(E, double(M));
        }
    };

    double shift = -std::numeric_limits<double>::infinity();
    sweep([&](double E, double) { shift = std::max(shift, -kappa * E); });

    double Z = 0.0, sum_m2 = 0.0, sum_m4 = 0.0, sum_e = 0.0;
    sweep([&](double E, double M) {
        const double w = std::exp(-kappa * E - shift);
        Z += w;
        const double m2 = M * M;
        sum_m2 += w * m2;
        sum_m4 += w * m2 * m2;
        sum_e += w * E;
    });

    ObservableSet obs;
    obs.m2 = {sum_m2 / Z, 0.0};
    obs.m4 = {sum_m4 / Z, 0.0};
    obs.e = {sum_e / Z, 0.0};
    obs.n_samples = static_cast<long>(half) * 2;
    obs.note = "exact enumeration";
    return obs;
}

/// Raw per-measurement series (one entry per post-thermalization sweep).
struct RawSeries {
    std::vector<double> m, m2, m4, e, fk2;
    int dim = 0, side = 0;
    long therm = 0;
    std::uint64_t seed = 0;
};

struct McOptions {
    int n_bins = 50;
    double equil_sigma = 3.0;
    int energy_refresh_interval = 4096;
    int cluster_updates_per_cycle = 1;
};

struct EstimateOptions {
    int n_bins = 50;
    double g_norm_constant = 1.0; // declared prefactor of the quartic-cumulant coupling
};

namespace detail {

inline double canonical_u01(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

struct JackknifeSet {
    double full = 0.0;
    std::vector<double> replicates;
};

inline Measured jackknife_measure(const JackknifeSet& j) {
    const std::size_t B = j.replicates.size();
    double mean = 0.0;
    for (double r : j.replicates) mean += r;
    mean /= double(B);
    double var = 0.0;
    for (double r : j.replicates) var += (r - mean) * (r - mean);
    var *= double(B - 1) / double(B);
    return {j.full, std::sqrt(var)};
}

/// Integrated autocorrelation time with the standard self-consistent
/// window (smallest W with W >= 6 tau(W)).
inline double integrated_autocorrelation(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n < 16) return 0.5;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(n);
    double c0 = 0.0;
    for (double x : v) c0 += (x - mean) * (x - mean);
    c0 /= double(n);
    if (c0 <= 0.0) return 0.5;
    double tau = 0.5;
    const std::size_t wmax = n / 10 + 1;
    for (std::size_t t = 1; t <= wmax; ++t) {
        double ct = 0.0;
        for (std::size_t i = 0; i + t < n; ++i) ct += (v[i] - mean) * (v[i + t] - mean);
        ct /= double(n - t);
        tau += ct / c0;
        if (double(t) >= 6.0 * tau) break;
    }
    return std::max(tau, 0.5);
}

} // namespace detail

/// Turn raw measurement series into an ObservableSet: plain moments, the
/// second-moment correlation length (zero- vs smallest-momentum
/// susceptibilities), mass = 1/xi, and the dimensionless quartic-cumulant
/// coupling g = const (side/xi)^d (3 - <M^4>/<M^2>^2), all with jackknife
/// errors propagated through the derived quantities.
inline ObservableSet estimate_observables(const RawSeries& series, const EstimateOptions& opt = {}) {
    const long n = static_cast<long>(series.m2.size());
    if (n < 4) throw validation_error("estimate_observables: too few measurements");
    const int B = std::max(2, std::min<int>(opt.n_bins, int(n / 2)));
    const long bin_len = n / B;
    const long used = bin_len * B;

    const auto bin_means = [&](const std::vector<double>& v) {
        std::vector<double> out(B, 0.0);
        for (int b = 0; b < B; ++b) {
            double s = 0.0;
            for (long i = b * bin_len; i < (b + 1) * bin_len; ++i) s += v[i];
            out[b] = s / double(bin_len);
        }
        return out;
    };
    const auto full_mean = [&](const std::vector<double>& v) {
        double s = 0.0;
        for (long i = 0; i < used; ++i) s += v[i];
        return s / double(used);
    };

    const auto mb_m2 = bin_means(series.m2), mb_m4 = bin_means(series.m4),
               mb_e = bin_means(series.e), mb_fk = bin_means(series.fk2);
    const double f_m2 = full_mean(series.m2), f_m4 = full_mean(series.m4),
                 f_e = full_mean(series.e), f_fk = full_mean(series.fk2);

    const auto deleted = [&](const std::vector<double>& bins, double full, int drop) {
        return (full * B - bins[drop]) / double(B - 1);
    };

    detail::JackknifeSet j_m2{f_m2, {}}, j_m4{f_m4, {}}, j_e{f_e, {}};
    for (int b = 0; b < B; ++b) {
        j_m2.replicates.push_back(deleted(mb_m2, f_m2, b));
        j_m4.replicates.push_back(deleted(mb_m4, f_m4, b));
        j_e.replicates.push_back(deleted(mb_e, f_e, b));
    }

    ObservableSet obs;
    obs.m2 = detail::jackknife_measure(j_m2);
    obs.m4 = detail::jackknife_measure(j_m4);
    obs.e = detail::jackknife_measure(j_e);
    obs.n_samples = n;
    obs.tau_int = detail::integrated_autocorrelation(series.m2);

    const double L = series.side;
    const auto derived = [&](double m2, double m4, double fk2,
                             double& xi, double& mass, double& g) {
        if (!(m2 > fk2) || !(fk2 > 0.0)) return false;
        xi = std::sqrt(m2 / fk2 - 1.0) / (2.0 * std::sin(std::numbers::pi / L));
        if (!(xi > 0.0)) return false;
        mass = 1.0 / xi;
        g = opt.g_norm_constant * std::pow(L / xi, series.dim) * (3.0 - m4 / (m2 * m2));
        return true;
    };

    if (series.side >= 4) {
        double xi, mass, g;
        if (derived(f_m2, f_m4, f_fk, xi, mass, g)) {
            detail::JackknifeSet j_xi{xi, {}}, j_mass{mass, {}}, j_g{g, {}};
            bool ok = true;
            for (int b = 0; b < B && ok; ++b) {
                double xr, mr, gr;
                ok = derived(deleted(mb_m2, f_m2, b), deleted(mb_m4, f_m4, b),
                             deleted(mb_fk, f_fk, b), xr, mr, gr);
                if (ok) {
                    j_xi.replicates.push_back(xr);
                    j_mass.replicates.push_back(mr);
                    j_g.replicates.push_back(gr);
                }
            }
            if (ok) {
                obs.xi = detail::jackknife_measure(j_xi);
                obs.mass = detail::jackknife_measure(j_mass);
                obs.g_renorm = detail::jackknife_measure(j_g);
            } else {
                obs.note = "xi undefined at this statistics level (jackknife replicate "
                           "had chi(k_min) >= chi(0))";
            }
        } else {
            obs.note = "xi undefined at this statistics level (chi(k_min) >= chi(0))";
        }
    }
    return obs;
}

struct McResult {
    ObservableSet observables;
    RawSeries series;
};

/// Metropolis sweeps interleaved with a Wolff cluster update. Clusters
/// grow on ferromagnetic nearest-neighbor bonds only; all remaining
/// couplings enter through a Metropolis acceptance of the whole cluster
/// flip, so detailed balance holds for the full Hamiltonian. Fixed seed
/// gives a bitwise-identical result.
inline McResult run_mc(const LatticeSpec& spec, long sweeps, long therm, std::uint64_t seed,
                       const McOptions& opt = {}) {
    const auto g = detail::build_geometry(spec);
    if (sweeps < 4) throw validation_error("run_mc: need at least 4 measurement sweeps");
    if (therm < 0) throw validation_error("run_mc: negative thermalization");

    std::mt19937_64 rng(seed);
    std::vector<int8_t> s(g.n);
    for (auto& x : s) x = detail::canonical_u01(rng) < 0.5 ? -1 : +1;

    const double kappa = spec.kappa;
    const bool any_cluster = !g.cluster.nbr.empty();
    const bool any_rest = !g.rest.nbr.empty();

    // Per-bond inclusion probability 1 - exp(2 kappa J) for J < 0.
    std::vector<double> p_add(g.cluster.coupling.size());
    for (std::size_t k = 0; k < p_add.size(); ++k)
        p_add[k] = 1.0 - std::exp(2.0 * kappa * g.cluster.coupling[k]);

    // Fourier tables for the smallest momenta.
    std::vector<std::vector<double>> cos_t(g.dim), sin_t(g.dim);
    {
        std::vector<double> c(g.side), sn(g.side);
        for (int x = 0; x < g.side; ++x) {
            c[x] = std::cos(2.0 * std::numbers::pi * x / g.side);
            sn[x] = std::sin(2.0 * std::numbers::pi * x / g.side);
        }
        for (int axis = 0; axis < g.dim; ++axis) {
            cos_t[axis].resize(g.n);
            sin_t[axis].resize(g.n);
            for (int site = 0; site < g.n; ++site) {
                int rem = site;
                for (int i = 0; i < axis; ++i) rem /= g.side;
                const int coord = rem % g.side;
                cos_t[axis][site] = c[coord];
                sin_t[axis][site] = sn[coord];
            }
        }
    }

    double E = detail::total_energy(g, s);
    long M = 0;
    for (int i = 0; i < g.n; ++i) M += s[i];

    std::vector<int> stack, cluster_sites;
    std::vector<std::uint32_t> visited(g.n, 0);
    std::uint32_t epoch = 0;

    const auto metropolis_sweep = [&] {
        for (int i = 0; i < g.n; ++i) {
            double h = 0.0;
            for (int k = g.all.start[i]; k < g.all.start[i + 1]; ++k)
                h += g.all.coupling[k] * s[g.all.nbr[k]];
            const double dE = -2.0 * s[i] * h;
            if (dE <= 0.0 || detail::canonical_u01(rng) < std::exp(-kappa * dE)) {
                E += dE;
                M += -2 * s[i];
                s[i] = -s[i];
            }
        }
    };

    const auto wolff_update = [&] {
        ++epoch;
        stack.clear();
        cluster_sites.clear();
        const int seed_site = int(rng() % std::uint64_t(g.n));
        const int8_t spin = s[seed_site];
        visited[seed_site] = epoch;
        stack.push_back(seed_site);
        cluster_sites.push_back(seed_site);
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int k = g.cluster.start[u]; k < g.cluster.start[u + 1]; ++k) {
                const int v = g.cluster.nbr[k];
                if (visited[v] == epoch || s[v] != spin) continue;
                if (detail::canonical_u01(rng) < p_add[k]) {
                    visited[v] = epoch;
                    stack.push_back(v);
                    cluster_sites.push_back(v);
                }
            }
        }
        // Energy change across the cluster boundary, split into the bond
        // graph (always flipped) and the remainder (Metropolis-accepted).
        double dE_bonds = 0.0, dE_rest = 0.0;
        for (const int u : cluster_sites) {
            for (int k = g.cluster.start[u]; k < g.cluster.start[u + 1]; ++k) {
                const int v = g.cluster.nbr[k];
                if (visited[v] != epoch) dE_bonds += -2.0 * g.cluster.coupling[k] * s[u] * s[v];
            }
            if (any_rest)
                for (int k = g.rest.start[u]; k < g.rest.start[u + 1]; ++k) {
                    const int v = g.rest.nbr[k];
                    if (visited[v] != epoch) dE_rest += -2.0 * g.rest.coupling[k] * s[u] * s[v];
                }
        }
        if (any_rest && !(dE_rest <= 0.0) &&
            !(detail::canonical_u01(rng) < std::exp(-kappa * dE_rest)))
            return;
        for (const int u : cluster_sites) {
            M += -2 * s[u];
            s[u] = -s[u];
        }
        E += dE_bonds + dE_rest;
    };

    const auto cycle = [&] {
        metropolis_sweep();
        if (any_cluster)
            for (int c = 0; c < opt.cluster_updates_per_cycle; ++c) wolff_update();
    };

    for (long t = 0; t < therm; ++t) cycle();

    McResult res;
    res.series.dim = g.dim;
    res.series.side = g.side;
    res.series.therm = therm;
    res.series.seed = seed;
    auto& sr = res.series;
    sr.m.reserve(sweeps);

    for (long t = 0; t < sweeps; ++t) {
        cycle();
        if ((t + 1) % opt.energy_refresh_interval == 0) E = detail::total_energy(g, s);
        double fk2 = 0.0;
        for (int axis = 0; axis < g.dim; ++axis) {
            double re = 0.0, im = 0.0;
            const auto& ct = cos_t[axis];
            const auto& st = sin_t[axis];
            for (int i = 0; i < g.n; ++i) {
                re += s[i] * ct[i];
                im += s[i] * st[i];
            }
            fk2 += re * re + im * im;
        }
        fk2 /= g.dim;
        const double m = double(M);
        sr.m.push_back(m);
        sr.m2.push_back(m * m);
        sr.m4.push_back(m * m * m * m);
        sr.e.push_back(E);
        sr.fk2.push_back(fk2);
    }

    EstimateOptions eopt;
    eopt.n_bins = opt.n_bins;
    res.observables = estimate_observables(res.series, eopt);

    // Drift diagnostic: first vs last quarter of the series at the
    // configured number of combined sigmas.
    const auto drift_ok = [&](const std::vector<double>& v) {
        const long q = static_cast<long>(v.size()) / 4;
        if (q < 8) return true;
        const auto seg_stats = [&](long lo) {
            const int nb = 8;
            const long len = q / nb;
            double mean = 0.0;
            std::vector<double> bm(nb, 0.0);
            for (int b = 0; b < nb; ++b) {
                for (long i = 0; i < len; ++i) bm[b] += v[lo + b * len + i];
                bm[b] /= double(len);
                mean += bm[b];
            }
            mean /= nb;
            double var = 0.0;
            for (double x : bm) var += (x - mean) * (x - mean);
            var /= double(nb - 1) * nb;
            return std::pair<double, double>(mean, var);
        };
        const auto [m1, v1] = seg_stats(0);
        const auto [m2_, v2] = seg_stats(static_cast<long>(v.size()) - q);
        return std::abs(m1 - m2_) <= opt.equil_sigma * std::sqrt(v1 + v2 + 1e-300);
    };
    if (!drift_ok(sr.e) || !drift_ok(sr.m2)) {
        res.observables.equilibrated = false;
        res.observables.note = "moving-average drift beyond the equilibration threshold";
    }
    if (double(sweeps) < 100.0 * res.observables.tau_int) {
        if (!res.observables.note.empty()) res.observables.note += "; ";
        res.observables.note += "fewer than 100 autocorrelation times measured";
    }
    return res;
}

/// One run entering the cutoff-independence comparison.
struct CollapseRun {
    int dim = 0;
    int side = 0;
    std::string label;
    ObservableSet obs;
};

struct CollapseOptions {
    double threshold = 2.0; // per degree of freedom
};

struct CollapsePoint {
    double x = 0.0, dx = 0.0; // renormalized coupling g
    double y = 0.0, dy = 0.0; // xi / side
    std::string label;
};

struct CollapseReport {
    std::vector<CollapsePoint> points;
    double statistic = 0.0;
    int n_fit = 0;
    double threshold = 2.0;
    bool pass = false;
};

/// Error-weighted transverse scatter of the pooled (g, xi/side) points
/// about the curve interpolated through the *other* points: zero for
/// duplicated runs, chi^2-like per point when the runs follow a common
/// curve. Runs must share dimensionality and overlapping coupling
/// windows.
inline CollapseReport collapse_test(const std::vector<CollapseRun>& runs,
                                    const CollapseOptions& opt = {}) {
    if (runs.size() < 2) throw incomparable_error("collapse_test: need at least two runs");
    const int dim = runs.front().dim;
    for (const auto& r : runs)
        if (r.dim != dim)
            throw incomparable_error("collapse_test: runs mix dimensionalities " +
                                     std::to_string(dim) + " and " + std::to_string(r.dim));

    CollapseReport rep;
    rep.threshold = opt.threshold;
    for (const auto& r : runs) {
        if (!r.obs.g_renorm || !r.obs.xi)
            throw incomparable_error("collapse_test: run '" + r.label +
                                     "' lacks renormalized observables (g, xi)");
        CollapsePoint p;
        p.x = r.obs.g_renorm->value;
        p.dx = r.obs.g_renorm->error;
        p.y = r.obs.xi->value / r.side;
        p.dy = r.obs.xi->error / r.side;
        p.label = r.label;
        rep.points.push_back(p);
    }

    double chi2 = 0.0;
    for (std::size_t j = 0; j < rep.points.size(); ++j) {
        const auto& pj = rep.points[j];
        // Bracketing neighbors among the points of *other* runs (points
        // sharing a nonempty label belong to the same run family).
        const CollapsePoint* lo = nullptr;
        const CollapsePoint* hi = nullptr;
        for (std::size_t i = 0; i < rep.points.size(); ++i) {
            if (i == j) continue;
            const auto& pi = rep.points[i];
            if (!pj.label.empty() && pi.label == pj.label) continue;
            if (pi.x <= pj.x && (!lo || pi.x > lo->x)) lo = &pi;
            if (pi.x >= pj.x && (!hi || pi.x < hi->x)) hi = &pi;
        }
        if (!lo || !hi) continue; // outside the others' window
        double Y, dY2, slope;
        if (hi->x == lo->x) {
            Y = 0.5 * (lo->y + hi->y);
            dY2 = 0.25 * (lo->dy * lo->dy + hi->dy * hi->dy);
            slope = 0.0;
        } else {
            const double w = (pj.x - lo->x) / (hi->x - lo->x);
            Y = (1.0 - w) * lo->y + w * hi->y;
            slope = (hi->y - lo->y) / (hi->x - lo->x);
            dY2 = (1.0 - w) * (1.0 - w) * lo->dy * lo->dy + w * w * hi->dy * hi->dy;
        }
        const double var = pj.dy * pj.dy + dY2 + slope * slope * pj.dx * pj.dx;
        const double d = pj.y - Y;
        chi2 += (d == 0.0) ? 0.0 : d * d / var;
        ++rep.n_fit;
    }
    if (rep.n_fit == 0)
        throw incomparable_error("collapse_test: no overlap between the runs' coupling windows");
    rep.statistic = chi2 / rep.n_fit;
    rep.pass = rep.statistic <= opt.threshold;
    return rep;
}

} // namespace rglab::lattice
