#include <doctest.h>

#include "lagrangian/compressible.hpp"
#include "lagrangian/errors.hpp"
#include "lagrangian/quadrature.hpp"
#include "lagrangian/types.hpp"

#include <cmath>

using namespace lagrangian;

namespace {

const Timeline& reference_run()
{
    static const Timeline tl = fv_evolve(paper_initial_data(0.05, RadialGrid{800, 4.0}), 1.0);
    return tl;
}

}  // namespace

TEST_CASE("initial profiles")
{
    CHECK(initial_density_profile(0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(initial_density_profile(1.0) == 0.0);
    CHECK(initial_density_profile(1.7) == 0.0);
    CHECK(initial_velocity_profile(0.0) == 0.0);
    CHECK(initial_velocity_profile(1.0) == 0.0);
    CHECK(initial_velocity_profile(std::sqrt(0.5)) == doctest::Approx(std::exp(-4.0)).epsilon(1e-14));
    // flat at both ends
    CHECK(initial_velocity_profile(1e-3) == 0.0);
    CHECK(initial_velocity_profile(0.999) < 1e-200);
}

TEST_CASE("initial cell averages")
{
    const double eps = 0.05;
    RadialGrid g{800, 4.0};
    auto s = paper_initial_data(eps, g);
    CHECK(s.rho(0) == doctest::Approx(1.0 + eps * std::exp(-1.0)).epsilon(1e-5));
    CHECK(s.velocity(0) == doctest::Approx(0.0));
    for (int i = 200; i < g.cells; ++i) {
        CHECK(s.rho(i) == 1.0);
        CHECK(s.m(i) == 0.0);
    }
    const int j = static_cast<int>(std::sqrt(0.5) / g.dr());
    CHECK(s.velocity(j) == doctest::Approx(eps * std::exp(-4.0)).epsilon(1e-3));

    // M(0) against an independent quadrature of eps int rho_0 u_tilde r 2 pi r dr
    auto gl = gauss_legendre(200, 0.0, 1.0);
    double M = 0.0;
    for (int q = 0; q < gl.nodes.size(); ++q) {
        const double r = gl.nodes(q);
        M += gl.weights(q) * 2 * pi * r * r * (1.0 + eps * initial_density_profile(r)) * eps *
             initial_velocity_profile(r);
    }
    CHECK(M > 0.0);
    CHECK(moment_sample(s).M == doctest::Approx(M).epsilon(1e-4));

    CHECK_THROWS_AS(paper_initial_data(eps, RadialGrid{400, 4.0}), ResolutionTooLow);
    CHECK_THROWS_AS(paper_initial_data(0.2, g), ConfigError);
    CHECK_THROWS_AS(paper_initial_data(eps, g, EulerParams{1.0, 1.0, 1.0}), ConfigError);
}

TEST_CASE("constant state is an equilibrium")
{
    for (int order : {1, 2}) {
        FVOptions o;
        o.order = order;
        auto s = paper_initial_data(0.0, RadialGrid{400, 2.0});
        auto tl = fv_evolve(s, 0.5, o);
        for (const auto& f : tl.frames) {
            CHECK((f.rho.array() - 1.0).abs().maxCoeff() <= 1e-13);
            CHECK(f.m.cwiseAbs().maxCoeff() <= 1e-13);
        }
        auto md = moment_diagnostics(tl);
        CHECK(md.max_abs_M <= 1e-12);
        for (const auto& smp : tl.samples) CHECK(std::abs(smp.I) <= 1e-12);
        CHECK(finite_speed_check(tl, s.eos.sigma(), 1e-8).violation <= 1e-13);
        auto tr = trace_and_detect(tl, {1.2});
        CHECK_FALSE(tr[0].t0.has_value());
    }
}

TEST_CASE("solver guards")
{
    auto s = paper_initial_data(0.05, RadialGrid{400, 2.0});
    FVOptions o;
    o.cfl = 0.6;
    CHECK_THROWS_AS(fv_evolve(s, 0.1, o), CFLViolation);
    o.cfl = 0.4;
    o.order = 3;
    CHECK_THROWS_AS(fv_evolve(s, 0.1, o), ConfigError);
    // the outer boundary must stay ahead of the front
    CHECK_THROWS_AS(fv_evolve(s, 1.0), ConfigError);
    RadialState v = s;
    v.rho(3) = 1e-9;
    CHECK_THROWS_AS(fv_evolve(v, 0.1), VacuumFormation);
    FVOptions shock;
    shock.shock_factor = 1.5;
    CHECK_THROWS_AS(fv_evolve(s, 0.5, shock), ShockSuspected);
}

TEST_CASE("conservation, finite speed and moment identities")
{
    const Timeline& tl = reference_run();
    const auto& eos = tl.frames.front().eos;
    CHECK(tl.frames.size() == 101);
    CHECK(tl.frames.back().t == 1.0);

    auto md = moment_diagnostics(tl);
    CHECK(md.mass_drift <= 1e-10);
    CHECK(md.monotone);
    CHECK(md.min_dM_dt > 0.0);
    CHECK(md.inertia_residual <= 1e-3 * md.max_abs_M);
    CHECK(md.virial_residual <= 1e-3 * md.records.back().dM_dt);

    const double sigma = eos.sigma();
    CHECK(sigma == doctest::Approx(std::sqrt(2.0)));
    auto fs = finite_speed_check(tl, sigma, 1e-8);
    CHECK(fs.pass);
    CHECK(fs.violation <= 1e-8);
    // positive control: a cone that is too narrow catches the wave
    auto narrow = finite_speed_check(tl, sigma, 1e-8, 0.9);
    CHECK_FALSE(narrow.pass);
    CHECK(narrow.violation > 1e-5);
}

TEST_CASE("first-order option and parallel fluxes")
{
    auto s = paper_initial_data(0.05, RadialGrid{600, 3.0});
    FVOptions o1;
    o1.order = 1;
    auto tl = fv_evolve(s, 0.5, o1);
    auto md = moment_diagnostics(tl);
    CHECK(md.mass_drift <= 1e-10);
    CHECK(md.monotone);

    FVOptions par;
    par.workers = 3;
    auto a = fv_evolve(s, 0.3);
    auto b = fv_evolve(s, 0.3, par);
    CHECK(a.frames.back().rho == b.frames.back().rho);
    CHECK(a.frames.back().m == b.frames.back().m);
}

TEST_CASE("refinement" * doctest::timeout(120))
{
    auto second = refinement_study(0.05, {800, 1600, 3200}, 0.5);
    REQUIRE(second.inertia_orders.size() == 2);
    for (double p : second.inertia_orders) CHECK(p >= 0.9);
    for (double p : second.l1_orders) CHECK(p >= 0.9);

    FVOptions o1;
    o1.order = 1;
    auto first = refinement_study(0.05, {800, 1600, 3200}, 0.5, EulerParams{}, 4.0, o1);
    for (double p : first.inertia_orders) CHECK(p == doctest::Approx(1.0).epsilon(0.25));
    for (double p : first.l1_orders) CHECK(p == doctest::Approx(1.0).epsilon(0.3));
    CHECK_THROWS_AS(refinement_study(0.05, {800, 1200}, 0.5), ConfigError);
}

TEST_CASE("trajectories: flat then moving")
{
    const Timeline& tl = reference_run();
    const double sigma = std::sqrt(2.0);
    const double far = 1.0 + sigma * 1.0 + 0.2;
    auto tr = trace_and_detect(tl, {0.5, 1.2, far});
    CHECK_FALSE(tr[0].t0.has_value());
    CHECK(tr[0].speed[0] > 0.0);
    REQUIRE(tr[1].t0.has_value());
    CHECK(*tr[1].t0 > 0.0);
    CHECK(*tr[1].t0 < 1.0);
    CHECK(*tr[1].t0 >= tr[1].causality_floor);
    CHECK(*tr[1].t0 >= 0.2 / sigma - tl.frame_dt);
    CHECK(tr[1].radius.back() > 1.2);
    CHECK_FALSE(tr[2].t0.has_value());
    for (double v : tr[2].speed) CHECK(v == 0.0);

    // a label just outside the support, on a shorter window
    auto shortrun = fv_evolve(paper_initial_data(0.05, RadialGrid{800, 4.0}), 0.5);
    auto near = trace_and_detect(shortrun, {1.05});
    REQUIRE(near[0].t0.has_value());
    CHECK(*near[0].t0 >= 0.05 / sigma);
    CHECK(*near[0].t0 < 0.5);
}

TEST_CASE("frame velocity interpolation")
{
    RadialState s = paper_initial_data(0.0, RadialGrid{400, 2.0});
    for (int i = 0; i < 400; ++i) s.m(i) = s.grid.centre(i);   // u = r
    CHECK(frame_velocity(s, 0.0) == 0.0);
    CHECK(frame_velocity(s, 0.001) == doctest::Approx(0.001));
    CHECK(frame_velocity(s, 0.7333) == doctest::Approx(0.7333));
    CHECK(frame_velocity(s, 5.0) == doctest::Approx(s.grid.centre(399)));
}
