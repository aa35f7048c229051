#include "rglab/rgspace.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace rglab;
using space::FlowField;
using space::Monomial;

namespace {

// F = (p1, -p2): linear saddle of the flow dp/dt = -F.
FlowField linear_saddle_field() {
    return FlowField(2, {{{1.0, {1, 0}}}, {{-1.0, {0, 1}}}});
}

// F = (-p1, p2): the mirrored convention used in the linearization examples,
// flow eigenvalues {+1, -1}.
FlowField saddle_flow_unstable_x() {
    return FlowField(2, {{{-1.0, {1, 0}}}, {{1.0, {0, 1}}}});
}

// Flow dp1/dt = p1, dp2/dt = -p2 + p1^2, i.e. F = (-p1, p2 - p1^2).
// Unstable manifold: p2 = p1^2 / 3.
FlowField quadratic_manifold_field() {
    return FlowField(2, {{{-1.0, {1, 0}}}, {{1.0, {0, 1}}, {-1.0, {2, 0}}}});
}

} // namespace

TEST_CASE("flow field evaluation and jacobian") {
    const auto f = quadratic_manifold_field();
    const auto v = f.eval({0.5, 2.0});
    CHECK_THAT(v[0], Catch::Matchers::WithinRel(-0.5, 1e-15));
    CHECK_THAT(v[1], Catch::Matchers::WithinRel(2.0 - 0.25, 1e-15));
    const auto J = f.jacobian({0.5, 2.0});
    CHECK(J(0, 0) == -1.0);
    CHECK(J(0, 1) == 0.0);
    CHECK(J(1, 0) == -1.0); // -2 p1 at p1 = 0.5
    CHECK(J(1, 1) == 1.0);

    CHECK_THROWS_AS(FlowField(2, {{{1.0, {1}}}, {}}), validation_error);
    CHECK_THROWS_AS(FlowField(2, {{{1.0, {1, -1}}}, {}}), validation_error);
}

TEST_CASE("fixed point search") {
    const space::Box box{{-1.0, -1.0}, {1.0, 1.0}};

    SECTION("linear field has only the origin") {
        const auto fps = space::find_fixed_points(linear_saddle_field(), box, 5);
        REQUIRE(fps.size() == 1);
        CHECK_THAT(fps[0].location[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK_THAT(fps[0].location[1], Catch::Matchers::WithinAbs(0.0, 1e-12));
    }

    SECTION("factorized component gives two roots") {
        // F = (p1 (p1 - 1), -p2)
        const FlowField f(2, {{{1.0, {2, 0}}, {-1.0, {1, 0}}}, {{-1.0, {0, 1}}}});
        const auto fps = space::find_fixed_points(f, {{-1.5, -1.0}, {1.5, 1.0}}, 7);
        REQUIRE(fps.size() == 2);
        CHECK_THAT(fps[0].location[0], Catch::Matchers::WithinAbs(0.0, 1e-10));
        CHECK_THAT(fps[1].location[0], Catch::Matchers::WithinAbs(1.0, 1e-10));
        CHECK_THAT(fps[0].location[1], Catch::Matchers::WithinAbs(0.0, 1e-10));
        CHECK_THAT(fps[1].location[1], Catch::Matchers::WithinAbs(0.0, 1e-10));
    }

    SECTION("quadratic coupling still has a single root") {
        // F = (p1, -p2 + p1^2)
        const FlowField f(2, {{{1.0, {1, 0}}}, {{-1.0, {0, 1}}, {1.0, {2, 0}}}});
        const auto fps = space::find_fixed_points(f, box, 6);
        REQUIRE(fps.size() == 1);
        CHECK(space::detail::inf_norm(f.eval(fps[0].location)) <= 1e-10);
    }

    SECTION("every reported root meets the residual bound and refinement keeps roots") {
        const FlowField f(2, {{{1.0, {2, 0}}, {-1.0, {1, 0}}}, {{-1.0, {0, 1}}}});
        const auto coarse = space::find_fixed_points(f, {{-1.5, -1.0}, {1.5, 1.0}}, 4);
        const auto fine = space::find_fixed_points(f, {{-1.5, -1.0}, {1.5, 1.0}}, 8);
        for (const auto& fp : fine)
            CHECK(space::detail::inf_norm(f.eval(fp.location)) <= 1e-10);
        for (const auto& c : coarse) {
            bool found = false;
            for (const auto& fp : fine)
                found = found || space::detail::distance(c.location, fp.location) < 1e-6;
            CHECK(found);
        }
    }

    SECTION("bad boxes are rejected") {
        CHECK_THROWS_AS(space::find_fixed_points(linear_saddle_field(), {{0.0, 0.0}, {0.0, 1.0}}, 4),
                        validation_error);
        CHECK_THROWS_AS(space::find_fixed_points(linear_saddle_field(), box, 1), validation_error);
    }
}

TEST_CASE("linearization and direction counts") {
    SECTION("diagonal saddle") {
        const auto info = space::linearize_at(saddle_flow_unstable_x(), {0.0, 0.0});
        REQUIRE(info.flow_eigen.size() == 2);
        CHECK_THAT(info.flow_eigen[0].value.real(), Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK_THAT(info.flow_eigen[1].value.real(), Catch::Matchers::WithinAbs(-1.0, 1e-12));
        CHECK(info.n_relevant == 1);
        CHECK(info.n_irrelevant == 1);
        CHECK(info.classification == space::FixedPointClass::Saddle);
    }

    SECTION("quadratic term drops out of the Jacobian at the origin") {
        // F = (-p1, p2 - p1^2)
        const auto info = space::linearize_at(quadratic_manifold_field(), {0.0, 0.0});
        CHECK_THAT(info.flow_eigen[0].value.real(), Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK_THAT(info.flow_eigen[1].value.real(), Catch::Matchers::WithinAbs(-1.0, 1e-12));
        CHECK(info.classification == space::FixedPointClass::Saddle);
    }

    SECTION("contracting field is a sink") {
        const FlowField f(2, {{{1.0, {1, 0}}}, {{1.0, {0, 1}}}});
        const auto info = space::linearize_at(f, {0.0, 0.0});
        CHECK(info.n_relevant == 0);
        CHECK(info.n_irrelevant == 2);
        CHECK(info.classification == space::FixedPointClass::Sink);
    }

    SECTION("counts always add up to the dimension") {
        for (const auto& f : {linear_saddle_field(), quadratic_manifold_field()}) {
            const auto info = space::linearize_at(f, {0.0, 0.0});
            CHECK(info.n_relevant + info.n_irrelevant + info.n_marginal == f.dim());
        }
    }

    SECTION("direction counts are invariant under positive field rescaling") {
        std::mt19937 gen(41u);
        std::uniform_real_distribution<double> scale(0.01, 50.0);
        for (int k = 0; k < 8; ++k) {
            const double c = scale(gen);
            for (const auto& f : {saddle_flow_unstable_x(), quadratic_manifold_field()}) {
                const auto a = space::linearize_at(f, {0.0, 0.0});
                const auto b = space::linearize_at(f.scaled(c), {0.0, 0.0});
                CHECK(a.n_relevant == b.n_relevant);
                CHECK(a.n_irrelevant == b.n_irrelevant);
                CHECK(a.classification == b.classification);
            }
        }
    }

    SECTION("points away from a root are refused") {
        CHECK_THROWS_AS(space::linearize_at(linear_saddle_field(), {0.5, 0.0}),
                        precondition_error);
    }

    SECTION("singular Jacobian is degenerate") {
        // F = (p1^2, -p2): Jacobian at the origin has a zero eigenvalue.
        const FlowField f(2, {{{1.0, {2, 0}}}, {{-1.0, {0, 1}}}});
        const auto info = space::linearize_at(f, {0.0, 0.0});
        CHECK(info.classification == space::FixedPointClass::Degenerate);
        CHECK(info.n_marginal >= 1);
    }
}

TEST_CASE("unstable manifold tracing") {
    SECTION("linear saddle stays on the unstable axis") {
        const auto f = saddle_flow_unstable_x();
        const auto fp = space::linearize_at(f, {0.0, 0.0});
        const auto tr = space::trace_unstable_manifold(f, fp, 1.0);
        REQUIRE(tr.samples.size() >= 3);
        for (const auto& s : tr.samples) CHECK(std::abs(s.p[1]) <= 1e-6 * (1.0 + std::abs(s.p[0])));
        REQUIRE(tr.kappa.has_value());
        CHECK_THAT(tr.kappa->back(), Catch::Matchers::WithinRel(1.0, 1e-6));
        // On a straight manifold the arc coordinate equals the coordinate itself.
        for (std::size_t i = 0; i < tr.samples.size(); ++i)
            CHECK_THAT((*tr.kappa)[i], Catch::Matchers::WithinAbs(tr.samples[i].p[0], 1e-8));
    }

    SECTION("quadratic manifold satisfies p2 = p1^2/3") {
        const auto f = quadratic_manifold_field();
        const auto fp = space::linearize_at(f, {0.0, 0.0});
        const auto tr = space::trace_unstable_manifold(f, fp, 1.3);
        bool covered_unit_interval = false;
        for (const auto& s : tr.samples) {
            if (std::abs(s.p[0]) <= 1.0)
                CHECK(std::abs(s.p[1] - s.p[0] * s.p[0] / 3.0) <= 1e-5);
            covered_unit_interval = covered_unit_interval || s.p[0] >= 1.0;
        }
        CHECK(covered_unit_interval);
    }

    SECTION("mirror branch has identical arc coordinates") {
        const auto f = quadratic_manifold_field();
        const auto fp = space::linearize_at(f, {0.0, 0.0});
        const auto plus = space::trace_unstable_manifold(f, fp, 1.0, {}, +1);
        const auto minus = space::trace_unstable_manifold(f, fp, 1.0, {}, -1);
        REQUIRE(plus.samples.size() == minus.samples.size());
        for (std::size_t i = 0; i < plus.samples.size(); ++i) {
            CHECK_THAT((*plus.kappa)[i],
                       Catch::Matchers::WithinAbs((*minus.kappa)[i], 1e-12));
            CHECK_THAT(plus.samples[i].p[0],
                       Catch::Matchers::WithinAbs(-minus.samples[i].p[0], 1e-12));
        }
    }

    SECTION("wrong number of unstable directions is refused") {
        const FlowField sink(2, {{{1.0, {1, 0}}}, {{1.0, {0, 1}}}});
        const auto fp = space::linearize_at(sink, {0.0, 0.0});
        CHECK_THROWS_AS(space::trace_unstable_manifold(sink, fp, 1.0), precondition_error);
    }
}

TEST_CASE("plain trajectory tracing") {
    const auto f = linear_saddle_field(); // flow: dp1/dt = -p1? no: F=(p1,-p2), flow=(-p1,p2)

    SECTION("saddle invariant p1*p2 is conserved") {
        // Flow dp/dt = (p1, -p2) comes from F = (-p1, p2).
        const auto g = saddle_flow_unstable_x();
        const auto res = space::trace_trajectory(g, {1e-3, 1.0}, 5.0);
        CHECK_FALSE(res.truncated);
        for (const auto& s : res.trajectory.samples)
            CHECK_THAT(s.p[0] * s.p[1], Catch::Matchers::WithinAbs(1e-3, 1e-8));
    }

    SECTION("distance to the unstable axis decreases monotonically") {
        const auto g = saddle_flow_unstable_x();
        space::Trajectory axis;
        axis.samples.push_back({0.0, {0.0, 0.0}});
        axis.samples.push_back({1.0, {1e3, 0.0}});
        const auto res = space::trace_trajectory(g, {1e-3, 1.0}, 5.0, {}, &axis);
        REQUIRE(res.distance_to_reference.size() == res.trajectory.samples.size());
        for (std::size_t i = 1; i < res.distance_to_reference.size(); ++i)
            CHECK(res.distance_to_reference[i] < res.distance_to_reference[i - 1]);
    }

    SECTION("critical-surface start converges to the fixed point") {
        const auto g = saddle_flow_unstable_x();
        const auto res = space::trace_trajectory(g, {0.0, 1.0}, 30.0);
        CHECK(space::detail::inf_norm(res.trajectory.samples.back().p) < 1e-6);
    }

    SECTION("blow-up is truncated with a diagnostic") {
        space::SpaceOptions opt;
        opt.p_max = 1e3;
        const auto g = saddle_flow_unstable_x();
        const auto res = space::trace_trajectory(g, {1.0, 1.0}, 50.0, opt);
        CHECK(res.truncated);
        CHECK_FALSE(res.diagnostic.empty());
        CHECK(res.trajectory.samples.back().t < 50.0);
    }
    (void)f;
}

TEST_CASE("parametric representation of the two-step limit") {
    const std::map<std::string, space::Observable> observables{
        {"m", [](const std::vector<double>& p) { return p[0]; }},
        {"y", [](const std::vector<double>& p) { return p[1]; }},
    };
    const std::vector<double> grid{0.1, 0.2, 0.4, 0.6, 0.8, 1.0};

    SECTION("linear saddle: kappa and the designated observable coincide") {
        const auto f = saddle_flow_unstable_x();
        const auto fp = space::linearize_at(f, {0.0, 0.0});
        const auto table = space::parametric_representation(f, observables, "m", fp, grid);
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK_THAT(table.kappa[i], Catch::Matchers::WithinAbs(grid[i], 1e-6));
        for (std::size_t i = 1; i < grid.size(); ++i) CHECK(table.kappa[i] > table.kappa[i - 1]);
    }

    SECTION("quadratic manifold: eliminated relation is launch independent") {
        const auto f = quadratic_manifold_field();
        const auto fp = space::linearize_at(f, {0.0, 0.0});
        const auto table = space::parametric_representation(f, observables, "m", fp, grid);
        REQUIRE(table.values.size() == 3);
        for (std::size_t l = 0; l < table.values.size(); ++l)
            for (std::size_t r = 0; r < grid.size(); ++r)
                CHECK_THAT(table.value(l, r, "y"),
                           Catch::Matchers::WithinAbs(grid[r] * grid[r] / 3.0, 1e-4));
        CHECK(table.max_launch_spread <= 1e-4);
    }

    SECTION("different launch directions give the same relation") {
        const auto f = quadratic_manifold_field();
        const auto fp = space::linearize_at(f, {0.0, 0.0});
        space::ParametricOptions a, b;
        a.stable_amplitude = 1.0;
        b.stable_amplitude = 0.5;
        const auto ta = space::parametric_representation(f, observables, "m", fp, grid, a);
        const auto tb = space::parametric_representation(f, observables, "m", fp, grid, b);
        for (std::size_t r = 0; r < grid.size(); ++r)
            CHECK_THAT(ta.value(0, r, "y"),
                       Catch::Matchers::WithinAbs(tb.value(0, r, "y"), 1e-4));
    }

    SECTION("non-monotone designated observable is refused") {
        const auto f = quadratic_manifold_field();
        const auto fp = space::linearize_at(f, {0.0, 0.0});
        const std::map<std::string, space::Observable> bad{
            {"m", [](const std::vector<double>& p) { return p[1] - p[0]; }},
        };
        CHECK_THROWS_AS(space::parametric_representation(f, bad, "m", fp, {0.05}),
                        validation_error);
    }
}

TEST_CASE("blocking semigroup check") {
    const std::vector<std::vector<double>> points{{0.3}, {-1.75}, {2.0}};
    const space::BlockMap power_map = [](double n, const std::vector<double>& p) {
        std::vector<double> out(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) out[i] = n * n * p[i];
        return out;
    };

    SECTION("power-law map composes exactly") {
        const auto rep = space::blocking_semigroup_check(power_map, 2.0, points);
        CHECK(rep.composition_error == 0.0);
        CHECK(rep.identity_error == 0.0);
        CHECK(rep.valid_semigroup);
    }

    SECTION("recovered generator matches 2p and the matching flow field") {
        const FlowField f(1, {{{-2.0, {1}}}}); // F = -2p so that dp/dln(l) = 2p
        const auto rep = space::blocking_semigroup_check(power_map, 2.0, points, {}, &f);
        for (std::size_t s = 0; s < points.size(); ++s)
            CHECK_THAT(rep.generator[s][0],
                       Catch::Matchers::WithinAbs(2.0 * points[s][0], 1e-6));
        REQUIRE(rep.generator_vs_field_error.has_value());
        CHECK(*rep.generator_vs_field_error <= 1e-6);
    }

    SECTION("additive shift is not a valid blocking") {
        const space::BlockMap shift = [](double n, const std::vector<double>& p) {
            std::vector<double> out(p);
            for (double& x : out) x += n;
            return out;
        };
        const auto rep3 = space::blocking_semigroup_check(shift, 3.0, points);
        CHECK_FALSE(rep3.valid_semigroup);
        CHECK(rep3.composition_error > 1.0);
        // At n = 2 the composition coincidentally matches; the identity
        // requirement still exposes the map.
        const auto rep2 = space::blocking_semigroup_check(shift, 2.0, points);
        CHECK_FALSE(rep2.valid_semigroup);
        CHECK(rep2.identity_error == 1.0);
    }

    SECTION("n must exceed one") {
        CHECK_THROWS_AS(space::blocking_semigroup_check(power_map, 1.0, points), domain_error);
    }
}
