#include <doctest.h>

#include "lagrangian/errors.hpp"
#include "lagrangian/vortex_patch.hpp"

using namespace lagrangian;

namespace {

Eigen::Vector2d rankine(const Eigen::Vector2d& x)
{
    Eigen::Vector2d perp(-x.y(), x.x());
    double r2 = x.squaredNorm();
    return r2 <= 1.0 ? Eigen::Vector2d(perp / 2.0) : Eigen::Vector2d(perp / (2.0 * r2));
}

Eigen::Vector2d velocity_at_id(const Patch& patch, const Eigen::Vector2d& x)
{
    auto id = TrajectoryField<2>::identity(patch.nodes());
    return patch_velocity(patch, id, x, x.cast<cplx>()).real();
}

}  // namespace

TEST_CASE("make_patch areas and geometry errors")
{
    Patch disc = Patch::disc(1.0, 64);
    CHECK(std::abs(disc.quadrature_area() - pi) <= 1e-6 * pi);
    Patch ell = Patch::ellipse(2.0, 1.0, 64);
    CHECK(std::abs(ell.quadrature_area() - 2 * pi) <= 1e-6 * 2 * pi);

    std::vector<Eigen::Vector2d> square{{0, 0}, {2, 0}, {2, 1}, {0, 1}};
    Patch sq = Patch::polygon(square, 16);
    CHECK(sq.quadrature_area() == doctest::Approx(2.0).epsilon(1e-14));

    std::vector<Eigen::Vector2d> ell_shape{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}};
    Patch lshape = Patch::polygon(ell_shape, 24);
    CHECK(lshape.quadrature_area() == doctest::Approx(3.0).epsilon(1e-14));

    std::vector<Eigen::Vector2d> bowtie{{0, 0}, {1, 1}, {1, 0}, {0, 1}};
    CHECK_THROWS_AS(Patch::polygon(bowtie, 16), InvalidGeometry);
    CHECK_THROWS_AS(Patch::disc(-1.0, 16), InvalidGeometry);
    CHECK_THROWS_AS(Patch::disc(1.0, 4), InvalidGeometry);
}

TEST_CASE("patch_velocity: Rankine oracle at the identity")
{
    Patch disc = Patch::disc(1.0, 64);
    CHECK(velocity_at_id(disc, Eigen::Vector2d(0, 0)).norm() <= 1e-8);
    CHECK((velocity_at_id(disc, Eigen::Vector2d(0.5, 0)) - Eigen::Vector2d(0, 0.25)).norm() <= 1e-4);
    CHECK((velocity_at_id(disc, Eigen::Vector2d(2.0, 0)) - Eigen::Vector2d(0, 0.25)).norm() <= 1e-4);
    for (double r : {0.2, 0.73, 0.95, 1.1, 1.5}) {
        Eigen::Vector2d x(r * std::cos(0.3), r * std::sin(0.3));
        CHECK((velocity_at_id(disc, x) - rankine(x)).norm() <= 1e-4 * rankine(x).norm());
    }
}

TEST_CASE("patch_velocity: divergence, translation and oddness")
{
    Patch disc = Patch::disc(1.0, 48);
    const double h = 1e-3;
    for (Eigen::Vector2d x : {Eigen::Vector2d(0.3, 0.1), Eigen::Vector2d(-0.2, 0.55)}) {
        double div = (velocity_at_id(disc, x + Eigen::Vector2d(h, 0)).x() -
                      velocity_at_id(disc, x - Eigen::Vector2d(h, 0)).x() +
                      velocity_at_id(disc, x + Eigen::Vector2d(0, h)).y() -
                      velocity_at_id(disc, x - Eigen::Vector2d(0, h)).y()) /
                     (2 * h);
        CHECK(std::abs(div) <= 1e-3);
    }

    Eigen::Vector2d shift(3.0, -1.5);
    Patch moved = Patch::disc(1.0, 48, shift);
    Eigen::Vector2d x(0.4, 0.2);
    Eigen::Vector2d u0 = velocity_at_id(disc, x);
    Eigen::Vector2d u1 = velocity_at_id(moved, x + shift);
    CHECK((u0 - u1).norm() <= 1e-10);

    std::vector<Eigen::Vector2d> square{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
    Patch sq = Patch::polygon(square, 16);
    Eigen::Vector2d y(0.37, -0.21);
    CHECK((velocity_at_id(sq, y) + velocity_at_id(sq, Eigen::Vector2d(-y))).norm() <= 1e-6);
}

TEST_CASE("patch system on nodes and probes")
{
    Patch disc = Patch::disc(1.0, 32);
    RealCloud<2> probes(2, 2);
    probes << 0.5, 0.0, 0.0, 0.25;
    PatchSystem sys = make_patch_system(disc, probes);
    auto id = TrajectoryField<2>::identity(sys.labels);
    ComplexCloud<2> u = sys.F(id.values);
    CHECK(u.cols() == sys.labels.cols());
    CHECK(std::abs(u(1, sys.node_count) - 0.25) <= 1e-4);
    CHECK(std::abs(u(0, sys.node_count + 1) + 0.125) <= 1e-4);
    CHECK(deformed_area(disc, disc.nodes()) == doctest::Approx(disc.quadrature_area()).epsilon(1e-14));
}

TEST_CASE("patch flow experiment on the disc")
{
    Patch disc = Patch::disc(1.0, 32);
    RealCloud<2> probes(2, 1);
    probes << 0.5, 0.0;
    PatchFlowOptions opt;
    opt.rho = 0.05;
    opt.M = 16;
    opt.N = 6;
    auto res = patch_flow_experiment(disc, probes, opt);
    REQUIRE(res.size() == 1);
    CHECK(std::abs(res[0].series.coefficients(1, 0)) <= 1e-4);
    CHECK(std::abs(res[0].series.coefficients(1, 1) - 0.25) <= 1e-4);
    CHECK((res[0].radius.infinite || res[0].radius.value >= opt.rho));
    CHECK(res[0].worst_branch_ratio >= 0.5);
}

TEST_CASE("kirchhoff: disc is degenerate")
{
    auto fit = kirchhoff_rotation_rate(1.0, 1.0, 0.2, 16, 0.1);
    CHECK(fit.degenerate);
}
