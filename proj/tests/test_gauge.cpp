#include "rglab/strongcoupling.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace rglab;
using gauge::StrongCouplingModel;

namespace {

// beta(u) = u (u-1): single stable root at u = 1.
flow::BetaFunction beta_single_stable() { return flow::BetaFunction::series({-1.0, 1.0}, 1); }

// beta(u) = u (u-1)(u-1.5)(u-2): stable roots {1, 2}, unstable root 1.5.
flow::BetaFunction beta_two_stable() {
    return flow::BetaFunction::series({-3.0, 6.5, -4.5, 1.0}, 1);
}

} // namespace

TEST_CASE("Wilson strong-coupling formulas") {
    SECTION("plain Wilson case at g0^2 = 3") {
        const auto p = gauge::wilson_strong_coupling({.g0_sq = 3.0, .a = 1.0});
        CHECK_THAT(p.sigma, Catch::Matchers::WithinRel(std::log(9.0), 1e-14));
        CHECK_THAT(p.mass, Catch::Matchers::WithinRel(4.0 * std::log(9.0), 1e-14));
        CHECK_THAT(p.ratio, Catch::Matchers::WithinRel(p.sigma / (p.mass * p.mass), 1e-14));
        CHECK_THAT(p.potential(2.5), Catch::Matchers::WithinRel(2.5 * p.sigma, 1e-14));
    }

    SECTION("unit logarithm at g0^2 = e/3") {
        const auto p = gauge::wilson_strong_coupling({.g0_sq = std::exp(1.0) / 3.0, .a = 1.0});
        CHECK_THAT(p.sigma, Catch::Matchers::WithinRel(1.0, 1e-12));
        CHECK_THAT(p.mass, Catch::Matchers::WithinRel(4.0, 1e-12));
    }

    SECTION("both scales vanish at the edge of the regime") {
        const auto p =
            gauge::wilson_strong_coupling({.g0_sq = (1.0 + 1e-12) / 3.0, .a = 1.0});
        CHECK(p.sigma < 1e-11);
        CHECK(p.mass < 1e-11);
        CHECK_THROWS_AS(gauge::wilson_strong_coupling({.g0_sq = 1.0 / 3.0, .a = 1.0}),
                        regime_error);
        CHECK_THROWS_AS(gauge::wilson_strong_coupling({.g0_sq = 0.2, .a = 1.0}), regime_error);
    }

    SECTION("monotonicity in the bare coupling") {
        double prev_sigma = 0.0, prev_mass = 0.0, prev_ratio = 1e30;
        for (double g = 0.4; g < 100.0; g *= 1.3) {
            const auto p = gauge::wilson_strong_coupling({.g0_sq = g, .a = 1.0});
            CHECK(p.sigma > prev_sigma);
            CHECK(p.mass > prev_mass);
            CHECK(p.ratio < prev_ratio);
            prev_sigma = p.sigma;
            prev_mass = p.mass;
            prev_ratio = p.ratio;
        }
    }

    SECTION("dimensional consistency under a -> lambda a") {
        const auto p1 = gauge::wilson_strong_coupling({.g0_sq = 7.0, .a = 1.0});
        const auto p2 = gauge::wilson_strong_coupling({.g0_sq = 7.0, .a = 2.5});
        CHECK_THAT(p2.sigma, Catch::Matchers::WithinRel(p1.sigma / (2.5 * 2.5), 1e-14));
        CHECK_THAT(p2.mass, Catch::Matchers::WithinRel(p1.mass / 2.5, 1e-14));
        CHECK_THAT(p2.ratio, Catch::Matchers::WithinRel(p1.ratio, 1e-14));
    }
}

TEST_CASE("bare-charge inversion") {
    SECTION("round trips of the two inverses") {
        CHECK_THAT(gauge::invert_bare_charge(std::log(9.0), 1.0),
                   Catch::Matchers::WithinRel(3.0, 1e-14));
        for (double g = 1.0 / 3.0 + 1e-6; g < 1e6; g *= 2.7) {
            const auto p = gauge::wilson_strong_coupling({.g0_sq = g, .a = 0.7});
            CHECK_THAT(gauge::invert_bare_charge(p.sigma, 0.7),
                       Catch::Matchers::WithinRel(g, 1e-12));
            CHECK_THAT(gauge::invert_from_mass(p.mass, 0.7),
                       Catch::Matchers::WithinRel(g, 1e-12));
        }
    }

    SECTION("boundary of the exponential") {
        CHECK_THAT(gauge::invert_from_mass(1e-14, 1.0),
                   Catch::Matchers::WithinRel(1.0 / 3.0, 1e-12));
    }

    SECTION("arbitrarily strong coupling from the free ratio a/xi") {
        CHECK_THAT(gauge::invert_from_mass(1.0, 40.0),
                   Catch::Matchers::WithinRel(std::exp(10.0) / 3.0, 1e-12));
        CHECK(gauge::invert_from_mass(1.0, 40.0) > 7342.0);
    }

    SECTION("nonpositive inputs are rejected") {
        CHECK_THROWS_AS(gauge::invert_bare_charge(0.0, 1.0), domain_error);
        CHECK_THROWS_AS(gauge::invert_bare_charge(1.0, -1.0), domain_error);
        CHECK_THROWS_AS(gauge::invert_from_mass(-0.5, 1.0), domain_error);
    }
}

TEST_CASE("sigma over m^2") {
    SECTION("Wilson case value") {
        const double r = gauge::sigma_over_m2({.g0_sq = 3.0, .a = 1.0});
        CHECK_THAT(r, Catch::Matchers::WithinRel(1.0 / (16.0 * std::log(9.0)), 1e-14));
        // Consistent with the direct prediction.
        const auto p = gauge::wilson_strong_coupling({.g0_sq = 3.0, .a = 1.0});
        CHECK_THAT(r, Catch::Matchers::WithinRel(p.ratio, 1e-12));
    }

    SECTION("vanishes at infinite coupling") {
        CHECK(gauge::sigma_over_m2({.g0_sq = 1e12, .a = 1.0}) <
              gauge::sigma_over_m2({.g0_sq = 1e3, .a = 1.0}));
        CHECK(gauge::sigma_over_m2({.g0_sq = 1e300, .a = 1.0}) < 1e-4);
    }

    SECTION("quadratic dependence on a2/a1") {
        const double base = gauge::sigma_over_m2({.g0_sq = 3.0, .a = 1.0});
        const double wide =
            gauge::sigma_over_m2({.g0_sq = 3.0, .a = 1.0, .k1 = 1.0, .k2 = 2.0});
        CHECK_THAT(wide, Catch::Matchers::WithinRel(4.0 * base, 1e-14));
    }
}

TEST_CASE("plaquette scaling") {
    SECTION("n = 1 reduces to the Wilson case") {
        const auto s = gauge::plaquette_scaling(1);
        CHECK(s.k1 == 1.0);
        CHECK(s.k2 == 1.0);
        CHECK(s.ratio_factor == 1.0);
    }

    SECTION("the ratio grows by exactly n") {
        for (int n : {2, 3, 4, 7}) {
            const auto s = gauge::plaquette_scaling(n);
            CHECK_THAT(s.k1_sq_factor, Catch::Matchers::WithinRel(double(n), 1e-14));
            CHECK_THAT(s.k2, Catch::Matchers::WithinRel(double(n), 1e-14));
            CHECK_THAT(s.ratio_factor, Catch::Matchers::WithinRel(double(n), 1e-12));
        }
        const auto s4 = gauge::plaquette_scaling(4);
        StrongCouplingModel m{.g0_sq = 3.0, .a = 1.0, .k1 = s4.k1, .k2 = s4.k2};
        CHECK_THAT(gauge::sigma_over_m2(m),
                   Catch::Matchers::WithinRel(4.0 / (16.0 * std::log(9.0)), 1e-12));
    }

    SECTION("n below one is rejected") {
        CHECK_THROWS_AS(gauge::plaquette_scaling(0), domain_error);
    }
}

TEST_CASE("plaquette coefficient tables") {
    SECTION("dominant loop sets the effective scales") {
        const auto m = StrongCouplingModel::from_plaquette_table(
            3.0, 1.0, {{1, 1, 0.1}, {1, 4, 0.5}}, /*core_shell=*/5);
        CHECK_THAT(m.k1, Catch::Matchers::WithinRel(2.0, 1e-14)); // sqrt(1*4)
        CHECK(m.k2 == 4.0);
    }

    SECTION("square dominant loop") {
        const auto m = StrongCouplingModel::from_plaquette_table(
            3.0, 1.0, {{1, 1, 0.2}, {2, 2, 0.3}}, /*core_shell=*/4);
        CHECK(m.k1 == 2.0);
        CHECK(m.k2 == 2.0);
    }

    SECTION("coefficients must fall off beyond the core") {
        CHECK_THROWS_AS(StrongCouplingModel::from_plaquette_table(
                            3.0, 1.0, {{1, 1, 1.0}, {1, 2, 0.5}, {2, 2, 0.9}}),
                        validation_error);
        CHECK_NOTHROW(StrongCouplingModel::from_plaquette_table(
            3.0, 1.0, {{1, 1, 1.0}, {1, 2, 0.5}, {2, 2, 0.2}, {2, 3, 0.05}}));
        CHECK_THROWS_AS(StrongCouplingModel::from_plaquette_table(3.0, 1.0, {{0, 1, 1.0}}),
                        validation_error);
        CHECK_THROWS_AS(StrongCouplingModel::from_plaquette_table(
                            3.0, 1.0, {{1, 1, 1.0}, {1, 1, 0.5}}),
                        validation_error);
    }
}

TEST_CASE("dimensional transmutation") {
    const auto one_loop = flow::BetaFunction::series({1.0}, 2); // beta = u^2

    SECTION("quadrature matches the analytic one-loop antiderivative") {
        std::vector<double> grid;
        for (int i = 0; i < 50; ++i) grid.push_back(0.5 + 4.5 * i / 49.0);
        const auto rep = gauge::transmutation_check(one_loop, 1.0, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double analytic = 1.0 / 0.5 - 1.0 / grid[i]; // B from reference 0.5
            CHECK_THAT(rep.B[i], Catch::Matchers::WithinAbs(analytic, 1e-8));
        }
        CHECK(rep.ratio_constant);
    }

    SECTION("dimensionless quantities are flat") {
        const auto rep = gauge::transmutation_check(one_loop, 0.0, {0.5, 1.0, 2.0, 4.0});
        for (const double a : rep.family1) CHECK(a == rep.family1.front());
        CHECK(rep.max_ratio_deviation == 0.0);
    }

    SECTION("same-dimension families differ by a constant factor") {
        gauge::TransmutationOptions opt;
        opt.c1 = 1.0;
        opt.c2 = 2.5;
        std::vector<double> grid;
        for (int i = 0; i < 50; ++i) grid.push_back(0.4 + 0.1 * i);
        const auto rep = gauge::transmutation_check(one_loop, 1.0, grid, opt);
        for (const double r : rep.ratio)
            CHECK_THAT(r, Catch::Matchers::WithinRel(1.0 / 2.5, 1e-8));

        // Distinct integration constants via distinct reference couplings:
        // the ratio is still flat, just not 1/2.5.
        opt.second_reference = grid.back();
        const auto rep2 = gauge::transmutation_check(one_loop, 1.0, grid, opt);
        CHECK(rep2.max_ratio_deviation <= 1e-8);
        CHECK(std::abs(rep2.ratio.front() - 1.0 / 2.5) > 1e-3);
    }

    SECTION("a beta root inside the range is an integrable singularity") {
        CHECK_THROWS_AS(gauge::transmutation_check(beta_single_stable(), 1.0, {0.5, 2.0}),
                        singularity_error);
        try {
            gauge::transmutation_check(beta_single_stable(), 1.0, {0.5, 2.0});
        } catch (const singularity_error& e) {
            CHECK(std::string(e.what()).find("1.0") != std::string::npos);
        }
    }
}

TEST_CASE("mass gap scan") {
    SECTION("single divergent fixed point leaves every finite c safe") {
        const auto F = [](double g) { return 1.0 / (1.0 - g); };
        for (const double c : {0.01, 0.5, 3.0, 250.0}) {
            const auto v = gauge::mass_gap_scan(beta_single_stable(), F, c);
            CHECK(v.verdict == gauge::GapVerdict::GapFinite);
            CHECK(v.special_values.empty());
            REQUIRE(v.fixed_points.size() == 1);
            CHECK(v.fixed_points[0].stable);
            CHECK(v.fixed_points[0].variant == gauge::RatioVariant::Diverges);
        }
    }

    SECTION("two stable roots with finite limits produce two special values") {
        const auto F = [](double g) { return 0.5 + 2.5 * (g - 1.0); };
        const auto scan = [&](double c) { return gauge::mass_gap_scan(beta_two_stable(), F, c); };

        const auto v = scan(0.5);
        REQUIRE(v.fixed_points.size() == 3);
        CHECK(v.fixed_points[0].stable);
        CHECK_FALSE(v.fixed_points[1].stable);
        CHECK(v.fixed_points[2].stable);
        REQUIRE(v.special_values.size() == 2);
        CHECK_THAT(v.special_values[0], Catch::Matchers::WithinAbs(0.5, 1e-6));
        CHECK_THAT(v.special_values[1], Catch::Matchers::WithinAbs(3.0, 1e-6));

        CHECK(scan(0.5).verdict == gauge::GapVerdict::GapVanishes);
        CHECK(scan(3.0).verdict == gauge::GapVerdict::GapVanishes);
        CHECK(scan(1.7).verdict == gauge::GapVerdict::GapFinite);
    }

    SECTION("small c is flagged as verified in the Wilson regime") {
        const auto F = [](double g) { return 1.0 / (1.0 - g); };
        const auto v = gauge::mass_gap_scan(beta_single_stable(), F, 0.02);
        CHECK(v.verdict == gauge::GapVerdict::GapFinite);
        CHECK(v.wilson_regime_verified);
        CHECK_THAT(v.wilson_window_max,
                   Catch::Matchers::WithinRel(1.0 / (16.0 * std::log(3.0)), 1e-12));
        CHECK_FALSE(gauge::mass_gap_scan(beta_single_stable(), F, 1.0).wilson_regime_verified);
    }

    SECTION("oscillating ratio near a root is undetermined") {
        const auto F = [](double g) { return std::sin(1.0 / std::abs(1.0 - g)); };
        const auto v = gauge::mass_gap_scan(beta_single_stable(), F, 0.9);
        CHECK(v.verdict == gauge::GapVerdict::Undetermined);
        REQUIRE(v.fixed_points.size() == 1);
        CHECK(v.fixed_points[0].variant == gauge::RatioVariant::Undetermined);
        CHECK_FALSE(v.fixed_points[0].note.empty());
    }

    SECTION("verdicts are invariant under monotone reparameterization") {
        // w = 2u: beta~(w) = 2 beta(w/2) rescales every power-k coefficient
        // by 2^(1-k); F~(w) = F(w/2). Roots move to {2, 3, 4}, limits stay.
        const auto beta_re = flow::BetaFunction::series({-3.0, 3.25, -1.125, 0.125}, 1);
        const auto F = [](double g) { return 0.5 + 2.5 * (g - 1.0); };
        const auto F_re = [&F](double w) { return F(w / 2.0); };
        for (const double c : {0.5, 1.7, 3.0}) {
            const auto a = gauge::mass_gap_scan(beta_two_stable(), F, c);
            const auto b = gauge::mass_gap_scan(beta_re, F_re, c);
            CHECK(a.verdict == b.verdict);
            REQUIRE(a.special_values.size() == b.special_values.size());
            for (std::size_t i = 0; i < a.special_values.size(); ++i)
                CHECK_THAT(a.special_values[i],
                           Catch::Matchers::WithinAbs(b.special_values[i], 1e-5));
        }
    }

    SECTION("nonpositive structural constant is rejected") {
        const auto F = [](double g) { return g; };
        CHECK_THROWS_AS(gauge::mass_gap_scan(beta_single_stable(), F, 0.0), domain_error);
        CHECK_THROWS_AS(gauge::mass_gap_scan(beta_single_stable(), F, -1.0), domain_error);
    }
}
