#include <doctest.h>

#include "lagrangian/errors.hpp"
#include "lagrangian/euler_poisson.hpp"
#include "lagrangian/picard.hpp"

#include <random>

using namespace lagrangian;

namespace {

DensitySpec bump(double h)
{
    DensitySpec s;
    s.profile = DensityProfile::RadialBump;
    s.radius = 1.0;
    s.spacing = h;
    return s;
}

DensitySpec shell(double h)
{
    DensitySpec s;
    s.profile = DensityProfile::ShellBump;
    s.shell_center = 1.0;
    s.shell_width = 0.3;
    s.spacing = h;
    return s;
}

RealCloud<3> radial_u0(const DensityCloud& c, double k)
{
    return c.nodes * k;
}

}  // namespace

TEST_CASE("density specs and clouds")
{
    CHECK(density_profile_from_name("shell-bump") == DensityProfile::ShellBump);
    CHECK(density_profile_name(DensityProfile::TruncatedGaussian) == "truncated-gaussian");
    CHECK_THROWS_AS(density_profile_from_name("plummer"), ConfigError);

    DensitySpec s = bump(0.2);
    CHECK(s.enclosed_mass(5.0) == doctest::Approx(4.0 * pi * 128.0 / 3465.0).epsilon(1e-13));
    CHECK(s.enclosed_mass(0.0) == 0.0);

    auto c = make_density_cloud(s);
    CHECK((c.weights.array() > 0).all());
    CHECK(c.total_mass == c.weights.sum());
    CHECK(std::abs(c.total_mass - s.enclosed_mass(1.0)) <= 1e-3 * c.total_mass);

    DensitySpec bad = s;
    bad.spacing = 0.0;
    CHECK_THROWS_AS(make_density_cloud(bad), ConfigError);
    DensitySpec thin = shell(0.2);
    thin.shell_width = 1.5;
    CHECK_THROWS_AS(make_density_cloud(thin), ConfigError);
}

TEST_CASE("ep_field: symmetry and Gauss's law")
{
    DensitySpec s = bump(0.1);
    auto c = make_density_cloud(s);
    auto id = TrajectoryField<3>::identity(c.nodes);

    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    CHECK(ep_field(c, id, origin, origin.cast<cplx>()).norm() <= 1e-12);

    Eigen::Vector3d outside(2.0, 0.0, 0.0);
    ComplexPoint3 e = ep_field(c, id, outside, outside.cast<cplx>());
    double expected = s.enclosed_mass(2.0) / (4.0 * pi * 4.0);
    CHECK(std::abs(e(0).real() - expected) <= 1e-3 * expected);
    CHECK(std::abs(e(1)) + std::abs(e(2)) <= 1e-12);

    for (Eigen::Vector3d near : {Eigen::Vector3d(0.5, 0.0, 0.0), Eigen::Vector3d(0.3, 0.4, 0.0)}) {
        Eigen::Vector3d alpha = c.nodes.col(nearest_node(c, near));
        ComplexPoint3 f = ep_field(c, id, alpha, alpha.cast<cplx>());
        double r = alpha.norm();
        Eigen::Vector3d want = s.enclosed_mass(r) / (4.0 * pi * r * r) * alpha / r;
        CHECK((f.real() - want).norm() <= 1e-3 * want.norm());
        CHECK(f.imag().norm() == 0.0);
    }
}

TEST_CASE("ep operator agrees with ep_field at the nodes")
{
    auto c = make_density_cloud(bump(0.25));
    auto id = TrajectoryField<3>::identity(c.nodes);
    ComplexCloud<3> a = ep_operator(c)(id.values);
    for (int i : {0, 7, static_cast<int>(c.size()) - 1}) {
        Eigen::Vector3d alpha = c.nodes.col(i);
        CHECK((a.col(i) - ep_field(c, id, alpha, alpha.cast<cplx>())).norm() <= 1e-14);
    }
    // complex path agrees with the real path on real input
    ComplexCloud<3> z = id.values;
    ComplexCloud<3> tilted = ep_accelerations<cplx>(c, z);
    CHECK((tilted - a).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("shell ODE oracle")
{
    DensitySpec s = shell(0.1);
    auto c = make_density_cloud(s);
    RealCloud<3> u0 = RealCloud<3>::Zero(3, c.size());
    auto ray = ep_evolve(c, u0, 0.5, 4);
    REQUIRE(ray.fields.size() == 5);
    CHECK(ray.fields[0].velocities.cwiseAbs().maxCoeff() == 0.0);

    double worst = 0.0;
    for (std::size_t k = 1; k < ray.s.size(); ++k)
        for (Eigen::Index i = 0; i < c.size(); ++i) {
            double r0 = c.nodes.col(i).norm();
            double R = ray.fields[k].values.col(i).real().norm();
            worst = std::max(worst, std::abs(R - shell_radius(s.enclosed_mass(r0), r0, 0.0, ray.s[k])));
        }
    CHECK(worst <= 1e-4);

    // nodes with enclosed mass move radially outward; the inner rim stays put
    const double m_rim = 0.01 * c.total_mass;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        Eigen::Vector3d d = ray.fields.back().values.col(i).real() - c.nodes.col(i);
        Eigen::Vector3d rhat = c.nodes.col(i).normalized();
        if (s.enclosed_mass(c.nodes.col(i).norm()) > m_rim)
            CHECK_MESSAGE(d.dot(rhat) > 0.0, "node " << i);
        else
            CHECK_MESSAGE(d.dot(rhat) > -1e-4, "node " << i);
        CHECK((d - d.dot(rhat) * rhat).norm() <= 1e-4);
    }
}

TEST_CASE("momentum, reality and time symmetry")
{
    auto c = make_density_cloud(bump(0.2));
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 0.02);
    RealCloud<3> u0(3, c.size());
    for (Eigen::Index i = 0; i < u0.size(); ++i) u0.data()[i] = n(rng);

    auto ray = ep_evolve(c, u0, 0.5, 20);
    Eigen::Vector3cd p0 = ray.fields.front().velocities * c.weights.cast<cplx>();
    double scale = (u0.cwiseAbs() * c.weights).norm() + 1e-300;
    for (const auto& f : ray.fields) {
        Eigen::Vector3cd p = f.velocities * c.weights.cast<cplx>();
        CHECK((p - p0).norm() <= 1e-6 * scale);
        CHECK(f.values.imag().cwiseAbs().maxCoeff() <= 1e-10);
    }

    RealCloud<3> still = RealCloud<3>::Zero(3, c.size());
    auto fwd = ep_evolve(c, still, 0.4, 8);
    auto bwd = ep_evolve(c, still, -0.4, 8);
    CHECK((fwd.fields.back().values - bwd.fields.back().values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("jacobian density check")
{
    DensitySpec s = shell(0.15);
    auto c = make_density_cloud(s);
    JacobianReport r0 = jacobian_density_check(c, c.nodes);
    CHECK(r0.residual == 0.0);
    CHECK(r0.min_det == 1.0);
    CHECK(r0.stencil_nodes > 0);
    CHECK(r0.pushed_mass == c.total_mass);

    RealCloud<3> u0 = RealCloud<3>::Zero(3, c.size());
    auto ray = ep_evolve(c, u0, 0.3, 4);
    RealCloud<3> X = ray.fields.back().values.real();
    JacobianReport r = jacobian_density_check(c, X);
    CHECK(r.min_det > 1.0);
    CHECK(r.pushed_mass == c.total_mass);

    CHECK_THROWS_AS(jacobian_density_check(make_density_cloud(shell(0.6)), make_density_cloud(shell(0.6)).nodes),
                    MeshTooCoarse);
}

TEST_CASE("complex circle: branch safety, radius and low-order coefficients")
{
    auto c = make_density_cloud(bump(0.25));
    RealCloud<3> u0 = radial_u0(c, 0.1);
    std::vector<int> probes{nearest_node(c, Eigen::Vector3d(0.5, 0, 0)), nearest_node(c, Eigen::Vector3d(0, 0.25, 0.5))};
    auto res = ep_circle_experiment(c, u0, probes, 0.1, 16, 6);
    CHECK(res.worst_branch_ratio >= 0.5);
    auto acc = ep_operator(c)(TrajectoryField<3>::identity(c.nodes).values);
    for (const auto& p : res.probes) {
        CHECK((p.radius.infinite || p.radius.value >= 0.1));
        CHECK((p.series.coefficients.row(0).transpose() - c.nodes.col(p.node).cast<cplx>()).norm() <= 1e-12);
        CHECK((p.series.coefficients.row(1).transpose() - u0.col(p.node).cast<cplx>()).norm() <= 1e-8);
        CHECK((p.series.coefficients.row(2).transpose() - acc.col(p.node) / 2.0).norm() <= 1e-6);
    }
}

TEST_CASE("shell radius ODE")
{
    CHECK(shell_radius(0.0, 1.0, 0.5, 2.0) == doctest::Approx(2.0).epsilon(1e-12));
    // energy: V^2/2 + a/R is conserved
    double a = 1.0 / (4.0 * pi);
    double R = shell_radius(1.0, 1.0, 0.0, 1.0);
    double Rp = (shell_radius(1.0, 1.0, 0.0, 1.0 + 1e-5) - shell_radius(1.0, 1.0, 0.0, 1.0 - 1e-5)) / 2e-5;
    CHECK(0.5 * Rp * Rp + a / R == doctest::Approx(a).epsilon(1e-8));
}
