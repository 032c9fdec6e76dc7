#include <doctest.h>

#include "lagrangian/analyticity.hpp"
#include "lagrangian/errors.hpp"

#include <functional>

using namespace lagrangian;

namespace {

Eigen::MatrixXcd sample_circle(const std::function<cplx(cplx)>& f, const Eigen::Vector2d& alpha,
                               double rho, int M)
{
    Eigen::MatrixXcd s(M, 2);
    for (int m = 0; m < M; ++m) {
        cplx t = std::polar(rho, 2 * pi * m / M);
        s(m, 0) = f(t) * alpha.x();
        s(m, 1) = f(t) * alpha.y();
    }
    return s;
}

double factorial(int n)
{
    double f = 1;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

}  // namespace

TEST_CASE("taylor_from_circle: constant, exponential and geometric")
{
    Eigen::Vector2d a(0.3, -0.7);
    auto c = taylor_from_circle(sample_circle([](cplx) { return cplx(1.0); }, a, 0.25, 32), 0.25, 10);
    CHECK(std::abs(c.coefficients(0, 0) - a.x()) < 1e-12);
    for (int n = 1; n <= 10; ++n) CHECK(c.coefficients.row(n).norm() <= 1e-12);

    auto e = taylor_from_circle(sample_circle([](cplx t) { return std::exp(t); }, a, 0.25, 32), 0.25, 10);
    // double-rounded samples put a noise floor of ~3e-8 on c_8 at this radius
    for (int n = 0; n <= 8; ++n) {
        cplx expect = a.y() / factorial(n);
        CHECK(std::abs(e.coefficients(n, 1) - expect) <= (n <= 7 ? 1e-8 : 1e-7) * std::abs(expect));
    }

    auto g = taylor_from_circle(sample_circle([](cplx t) { return 1.0 / (1.0 - t); }, a, 0.25, 64), 0.25, 10);
    for (int n = 0; n <= 10; ++n) CHECK(std::abs(g.coefficients(n, 0) - a.x()) <= 1e-9);
    CHECK_THROWS_AS(taylor_from_circle(Eigen::MatrixXcd::Zero(8, 2), 0.25, 4), ConfigError);
}

TEST_CASE("property: circle quadrature exactness on resolved orders")
{
    // f(t) = 1/(1 - t/2)^2, c_n = (n+1) 2^-n
    const double rho = 0.5;
    const int M = 64, N = 24;
    Eigen::Vector2d a(1.0, 0.0);
    auto s = taylor_from_circle(
        sample_circle([](cplx t) { return 1.0 / ((1.0 - t / 2.0) * (1.0 - t / 2.0)); }, a, rho, M), rho, N);
    for (int n = 0; n <= N; ++n) {
        double exact = (n + 1) * std::pow(0.5, n);
        if (exact * std::pow(rho, n) >= 1e-10) CHECK(std::abs(s.coefficients(n, 0) - exact) <= 1e-7 * exact);
    }
}

TEST_CASE("alias risk flag")
{
    Eigen::Vector2d a(1.0, 1.0);
    auto slow = taylor_from_circle(sample_circle([](cplx t) { return 1.0 / (1.0 - t / 0.3); }, a, 0.25, 16), 0.25, 6);
    CHECK(slow.alias_risk);
    auto fast = taylor_from_circle(sample_circle([](cplx t) { return std::exp(t); }, a, 0.25, 16), 0.25, 6);
    CHECK_FALSE(fast.alias_risk);
}

TEST_CASE("radius_estimate examples")
{
    std::vector<cplx> inv_fact, geom, prefactor;
    for (int n = 0; n <= 20; ++n) {
        inv_fact.push_back(1.0 / factorial(n));
        geom.push_back(std::pow(2.0, n));
        prefactor.push_back(n * std::pow(1.25, n));
    }
    CHECK(radius_estimate(taylor_series_from(inv_fact)).infinite);

    auto g = radius_estimate(taylor_series_from(geom));
    CHECK_FALSE(g.infinite);
    CHECK(g.value == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(g.fit_residual <= 1e-10);

    auto p = radius_estimate(taylor_series_from(prefactor), 8, 20);
    CHECK(std::abs(p.value - 0.8) <= 0.05 * 0.8);

    std::vector<cplx> poly{1.0, 2.0, 1e-20, 0.0, 0.0, 0.0};
    CHECK(radius_estimate(taylor_series_from(poly)).infinite);

    std::vector<cplx> short_series{1.0, 0.5, 0.25, 0.125, 0.0625};
    CHECK_THROWS_AS(radius_estimate(taylor_series_from(short_series)), InsufficientCoefficients);
}

TEST_CASE("property: radius scales as 1/lambda")
{
    std::vector<cplx> base;
    for (int n = 0; n <= 20; ++n) base.push_back((n + 1.0) * std::pow(1.7, n) * (1.0 + 0.3 * std::sin(n)));
    auto r0 = radius_estimate(taylor_series_from(base));
    for (double lam : {0.3, 0.9, 2.0, 5.0}) {
        std::vector<cplx> s;
        for (int n = 0; n <= 20; ++n) s.push_back(base[n] * std::pow(lam, n));
        auto r = radius_estimate(taylor_series_from(s));
        CHECK(r.value * lam == doctest::Approx(r0.value).epsilon(1e-10 + r0.fit_residual));
    }
}

TEST_CASE("factorial_growth_test examples")
{
    std::vector<int> orders;
    std::vector<double> pow_nn, fact2, three;
    for (int n = 2; n <= 12; ++n) {
        orders.push_back(n);
        pow_nn.push_back(std::pow(n, n));
        fact2.push_back(factorial(n) * std::pow(2.0, n));
        three.push_back(std::pow(3.0, n));
    }
    auto v1 = factorial_growth_test(orders, pow_nn);
    CHECK(v1.slope == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(v1.non_analytic_signature);
    auto v2 = factorial_growth_test(orders, fact2);
    CHECK_FALSE(v2.dominates_power);
    CHECK_FALSE(v2.non_analytic_signature);
    auto v3 = factorial_growth_test(orders, three);
    CHECK(v3.slope < 0.8);
    CHECK_FALSE(v3.non_analytic_signature);
}

TEST_CASE("flat_then_move_detect examples")
{
    std::vector<double> t, zero, step, noisy;
    for (int k = 0; k <= 100; ++k) {
        double tk = 0.01 * k;
        t.push_back(tk);
        zero.push_back(0.0);
        step.push_back(tk < 0.5 ? 0.0 : 1e-3);
        noisy.push_back(tk < 0.6 ? 1e-9 * (1 + std::sin(37.0 * k)) / 2 : 1e-6 * (tk - 0.6) / 0.01);
    }
    CHECK_FALSE(flat_then_move_detect(t, zero, 1e-8, 1e-7).has_value());
    auto s = flat_then_move_detect(t, step, 1e-8, 1e-7);
    REQUIRE(s.has_value());
    CHECK(std::abs(*s - 0.5) <= 0.01 + 1e-12);
    auto n = flat_then_move_detect(t, noisy, 1e-8, 1e-7);
    REQUIRE(n.has_value());
    CHECK(std::abs(*n - 0.6) <= 0.01 + 1e-12);

    std::vector<double> early(t.size(), 1.0);
    early[0] = 0.0;
    CHECK_FALSE(flat_then_move_detect(t, early, 1e-8, 1e-7).has_value());
}

TEST_CASE("property: detection is monotone in tol_move")
{
    std::vector<double> t, v;
    for (int k = 0; k <= 200; ++k) {
        t.push_back(0.005 * k);
        v.push_back(k < 80 ? 0.0 : std::exp(0.08 * (k - 80)) * 1e-9);
    }
    double last = -1.0;
    for (double tm : {1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e2}) {
        auto r = flat_then_move_detect(t, v, 1e-8, tm);
        double val = r ? *r : std::numeric_limits<double>::infinity();
        CHECK(val >= last);
        last = val;
    }
}
