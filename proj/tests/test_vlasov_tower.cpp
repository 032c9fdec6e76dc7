#include <doctest.h>

#include "lagrangian/errors.hpp"
#include "lagrangian/types.hpp"
#include "lagrangian/vlasov_tower.hpp"

#include <cmath>
#include <random>

using namespace lagrangian;

namespace {

// Evaluates the enumerated chain rule for h and a given as callables of their jets.
template <typename DH, typename DA>
double chain_rule(int N, DH dh, DA da)
{
    double s = 0.0;
    for (const auto& t : faadibruno_terms(N)) {
        double prod = static_cast<double>(t.b);
        for (std::size_t i = 0; i < t.k.size(); ++i) prod *= da(t.k[i], t.j[i]);
        s += prod * dh(t.gamma);
    }
    return s;
}

double ipow(double x, int n)
{
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

}  // namespace

TEST_CASE("chain-rule enumeration")
{
    auto t1 = faadibruno_terms(1);
    REQUIRE(t1.size() == 3);
    int seen_t = 0, seen_x = 0;
    for (const auto& t : t1) {
        CHECK(t.b == 1);
        if (t.gamma.t == 1) {
            ++seen_t;
            CHECK(t.k.empty());
        } else {
            ++seen_x;
            REQUIRE(t.k.size() == 1);
            CHECK(t.k[0] == 1);
            CHECK(t.gamma.x[t.j[0] - 1] == 1);
        }
    }
    CHECK(seen_t == 1);
    CHECK(seen_x == 2);

    for (const auto& t : faadibruno_terms(2))
        if (t.gamma.t == 1 && t.gamma.spatial() == 1) CHECK(t.b == 2);

    CHECK(faadibruno_terms(0).size() == 1);
    CHECK_THROWS_AS(faadibruno_terms(11), ConfigError);
}

TEST_CASE("chain-rule balance and exactness" * doctest::timeout(60))
{
    for (int N = 1; N <= 8; ++N)
        for (const auto& t : faadibruno_terms(N)) {
            int ks = 0;
            for (int k : t.k) {
                CHECK(k >= 1);
                ks += k;
            }
            CHECK(t.gamma.t + ks == N);
            CHECK(static_cast<int>(t.k.size()) == t.gamma.spatial());
            CHECK(t.b > 0);
            int j1 = 0;
            for (int j : t.j) j1 += j == 1;
            CHECK(j1 == t.gamma.x[0]);
        }

    // h = x1 + t, a(t) = (t, 0): d^N h(a(t), t) = 0 for N >= 2
    auto dh_lin = [](const MultiIndex& g) {
        return (g.spatial() == 1 && g.x[0] == 1 && g.t == 0) || (g.spatial() == 0 && g.t == 1) ? 1.0 : 0.0;
    };
    auto da_lin = [](int k, int j) { return k == 1 && j == 1 ? 1.0 : 0.0; };
    CHECK(chain_rule(1, dh_lin, da_lin) == 2.0);
    for (int N = 2; N <= 8; ++N) CHECK(chain_rule(N, dh_lin, da_lin) == 0.0);
}

TEST_CASE("chain-rule against a polynomial composition")
{
    // h(x, t) = x1^2 x2 + x1 t^2, a(t) = (1 + 2t + t^3, 3t - t^2), derivatives at t = 0.
    auto dh = [](const MultiIndex& g) {
        // at x = (1, 0), t = 0
        const int i = g.x[0], j = g.x[1], k = g.t;
        double v = 0.0;
        if (k == 0 && j == 1) v += i == 0 ? 1.0 : i == 1 ? 2.0 : i == 2 ? 2.0 : 0.0;
        if (j == 0 && k == 2 && i <= 1) v += 2.0;
        return v;
    };
    auto da = [](int k, int j) {
        if (j == 1) return k == 1 ? 2.0 : k == 3 ? 6.0 : 0.0;
        return k == 1 ? 3.0 : k == 2 ? -2.0 : 0.0;
    };
    // H(t) = a1^2 a2 + a1 t^2, expanded by hand up to t^4
    // a1^2 = 1 + 4t + 4t^2 + 2t^3 + 4t^4 + ..., a2 = 3t - t^2
    // a1^2 a2 = 3t + 11t^2 + 8t^3 + 2t^4 + ..., a1 t^2 = t^2 + 2t^3 + 0 t^4
    const double coeff[] = {0.0, 3.0, 12.0, 10.0, 2.0};
    for (int N = 1; N <= 4; ++N) CHECK(chain_rule(N, dh, da) == doctest::Approx(coeff[N] * std::tgamma(N + 1.0)));
}

TEST_CASE("Gaussian derivatives and w polynomials")
{
    CHECK(gaussian_derivative_at_zero(0) == 1);
    CHECK(gaussian_derivative_at_zero(2) == -2);
    CHECK(gaussian_derivative_at_zero(4) == 12);
    CHECK(gaussian_derivative_at_zero(6) == -120);
    CHECK(gaussian_derivative_at_zero(5) == 0);

    PolyXi w3 = w_gamma(MultiIndex{{0, 0}, 3});
    CHECK(w3.coefficient(3, 0) == 12);
    CHECK(w3.coefficient(1, 2) == 12);
    CHECK(w3.terms.size() == 2);

    PolyXi w1 = w_gamma(MultiIndex{{1, 0}, 0});
    CHECK(w1.coefficient(0, 0) == -2);
    CHECK(w1.terms.size() == 1);

    CHECK(w_gamma(MultiIndex{{0, 1}, 0}).is_zero());
    CHECK(w_gamma(MultiIndex{{2, 1}, 0}).is_zero());
    CHECK(w_gamma(MultiIndex{{0, 0}, 0}).is_zero());
    CHECK(w_gamma(MultiIndex{{0, 0}, 0}).homogeneous_degree() == -1);

    for (int s = 0; s <= 8; ++s)
        for (const auto& g : multi_indices_up_to(s)) {
            if (g.order() != s) continue;
            PolyXi w = w_gamma(g);
            if (!w.is_zero()) CHECK(w.homogeneous_degree() == g.t);
            // w(lambda xi) = lambda^{gamma_t} w(xi)
            Eigen::Vector2d xi(0.7, -1.3);
            CHECK(w(2.0 * xi) == doctest::Approx(ipow(2.0, g.t) * w(xi)).epsilon(1e-12));
        }
}

TEST_CASE("p_N")
{
    CHECK(p_N(1).coefficient(1, 0) == 2);
    PolyXi p3 = p_N(3);
    CHECK(p3.coefficient(3, 0) == -12);
    CHECK(p3.coefficient(0, 0) == 12);
    CHECK(p3.coefficient(0, 2) == 12);
    CHECK(p3.coefficient(1, 0) == -36);
    CHECK(p3.coefficient(1, 2) == -12);
    CHECK(p3.coefficient(2, 0) == 36);
    CHECK(p3.terms.size() == 6);
    CHECK(p_N(5).coefficient(5, 0) == 120);
    CHECK(p_N(7).coefficient(7, 0) == -1680);
    for (int N = 1; N <= 9; N += 2) CHECK(p_N(N).coefficient(N, 0) != 0);
    CHECK_THROWS_AS(p_N(0), ConfigError);
}

TEST_CASE("Gaussian polynomial integrals")
{
    PolyXi one, x2, x1;
    one.add(0, 0, 1);
    x2.add(2, 0, 1);
    x1.add(1, 0, 1);
    CHECK(gaussian_poly_integral(one, 1, 1, Eigen::Vector2d::Zero()).coefficient == 1);
    CHECK(gaussian_poly_integral(x2, 1, 1, Eigen::Vector2d::Zero()).coefficient == Rational(1, 2));
    CHECK(gaussian_poly_integral(x1, 1, 2, Eigen::Vector2d(3, 0)).coefficient == Rational(3, 2));
    CHECK(gaussian_poly_integral(x1, 1, 2, Eigen::Vector2d(3, 0)).value() == doctest::Approx(1.5 * pi));
    CHECK_THROWS_AS(gaussian_poly_integral(one, 1, 0, Eigen::Vector2d::Zero()), ConfigError);

    // fourth moment in 1D: 3 / (4 c^2) sqrt(pi / c), times sqrt(pi / c) from the other axis
    PolyXi x4;
    x4.add(4, 0, 1);
    CHECK(gaussian_poly_integral(x4, 2, 3, Eigen::Vector2d::Zero()).coefficient == Rational(2 * 3, 4 * 9 * 3));

    // brute-force quadrature of p_3 against a shifted Gaussian
    PolyXi p3 = p_N(3);
    Eigen::Vector2d v(-0.5, 1.0);
    double s = 0.0;
    const double h = 0.02;
    for (double a = -6; a <= 6; a += h)
        for (double b = -6; b <= 6; b += h) {
            Eigen::Vector2d xi(a, b);
            s += p3(xi) * std::exp(-2.0 * (xi - v).squaredNorm()) * h * h;
        }
    CHECK(gaussian_poly_integral(p3, 1, 2, v).value() == doctest::Approx(s).epsilon(1e-8));
}

TEST_CASE("Gaussian parameter choice")
{
    for (int N : {3, 5, 7, 9}) {
        GaussianParams g = choose_gaussian_params(N);
        CHECK(g.A == 1.0);
        CHECK(g.c == 2.0);
        CHECK(std::abs(gaussian_poly_integral(p_N(N), g.A, g.c, g.v).value()) >= 1e-3);
        GaussianParams h = choose_gaussian_params(N);
        CHECK(h.v == g.v);
    }
    GaussianParams e = choose_gaussian_params(4);
    CHECK(e.A == 1.0);
    CHECK(e.c == 2.0);
    CHECK(e.v == Eigen::Vector2d::Zero());
}

TEST_CASE("scaled bump identity")
{
    const Eigen::Vector2d e1(1, 0);
    auto c1 = scaled_bump_identity_check(MultiIndex{{1, 0}, 0}, 0.5, Eigen::Vector2d(0.3, 2.0));
    CHECK(c1.analytic == -2.0);
    CHECK(c1.identity_constant == -0.25);
    CHECK(c1.numeric == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(c1.relative_error <= 1e-3);

    auto c3 = scaled_bump_identity_check(MultiIndex{{0, 0}, 3}, 0.5, e1);
    CHECK(c3.analytic == doctest::Approx(48.0));
    CHECK(c3.expected == doctest::Approx(-12.0));
    CHECK(c3.relative_error <= 1e-3);

    // halving delta scales by 2^{N-1}
    for (const MultiIndex& g : {MultiIndex{{0, 0}, 3}, MultiIndex{{1, 0}, 2}, MultiIndex{{2, 0}, 3}}) {
        const Eigen::Vector2d xi(0.8, -0.6);
        auto a = scaled_bump_identity_check(g, 0.4, xi);
        auto b = scaled_bump_identity_check(g, 0.2, xi);
        CHECK(a.relative_error <= 1e-3);
        CHECK(b.relative_error <= 1e-3);
        CHECK(b.analytic == doctest::Approx(ipow(2.0, g.order() - 1) * a.analytic).epsilon(1e-12));
        CHECK(b.numeric == doctest::Approx(ipow(2.0, g.order() - 1) * a.numeric).epsilon(1e-3));
    }
    CHECK_THROWS_AS(scaled_bump_identity_check(MultiIndex{{1, 0}, 0}, 1.5, e1), ConfigError);
}

TEST_CASE("mixtures and perturbations")
{
    GaussianMixtureData f0;
    Eigen::Vector2d x(0.3, -0.4), v(1.0, 0.5);
    CHECK(f0(x, v) == doctest::Approx(std::exp(-0.25 - 1.25)));

    PerturbationSpec spec{3, 0.5, 0.1, choose_gaussian_params(3)};
    auto f = perturbed(f0, spec);
    CHECK(f.components.size() == 1);
    const double r2 = x.squaredNorm() / 0.25;
    const double bump = 0.1 * 0.5 * (r2 - 1.0) * std::exp(-r2) * std::exp(-2.0 * (v - spec.g.v).squaredNorm());
    CHECK(f(x, v) == doctest::Approx(f0(x, v) + bump).epsilon(1e-13));
    CHECK_THROWS_AS(scaled_bump(PerturbationSpec{3, 1.2, 0.1, spec.g}), ConfigError);

    auto pos = check_positivity(f0, 9);
    CHECK(pos.positive);
    CHECK(pos.samples == 9 * 9 * 9 * 9);
    CHECK(pos.min_value > 0.0);

    // a large enough bump drives the density negative at the origin
    auto g = perturbed(f0, PerturbationSpec{3, 0.5, 50.0, GaussianParams{}});
    auto neg = check_positivity(g, 9);
    CHECK_FALSE(neg.positive);
    CHECK(neg.min_value < 0.0);
}

TEST_CASE("static field of the base Gaussian")
{
    GaussianMixtureData f0;
    CHECK(static_field(f0, Eigen::Vector2d::Zero()).norm() == 0.0);
    for (double r : {0.2, 0.8, 1.5, 3.0}) {
        // 2D Gauss law with rho = pi exp(-|x|^2): m(r) = pi^2 (1 - exp(-r^2))
        const double oracle = pi * pi * (1.0 - std::exp(-r * r)) / (2.0 * pi * r);
        Eigen::Vector2d E = static_field(f0, Eigen::Vector2d(r, 0.0));
        CHECK(E(0) == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(std::abs(E(1)) <= 1e-15);
    }
}

TEST_CASE("E tower on the base Gaussian")
{
    GaussianMixtureData f0;
    auto T0 = e_derivative_tower(f0, Eigen::Vector2d::Zero(), 2);
    CHECK(T0.at(MultiIndex{}).norm() == 0.0);
    CHECK(T0.size() == multi_indices_up_to(2).size());

    const double r = 0.8;
    auto T = e_derivative_tower(f0, Eigen::Vector2d(r, 0.0), 2);
    const double er = std::exp(-r * r), phi = (1.0 - er) / (r * r);
    CHECK(T.at(MultiIndex{})(0) == doctest::Approx(pi * r * phi / 2.0).epsilon(1e-3));
    CHECK(T.at(MultiIndex{})(0) == doctest::Approx(pi * r * phi / 2.0).epsilon(1e-12));
    // time-reversal symmetric data: odd time derivatives vanish
    CHECK(T.at(MultiIndex{{0, 0}, 1}).norm() <= 1e-12);
    // d_t^2 E = -pi x e^{-r^2} - (pi^2 / 2) x phi e^{-r^2}
    const double ett = -pi * r * er - 0.5 * pi * pi * r * phi * er;
    CHECK(T.at(MultiIndex{{0, 0}, 2})(0) == doctest::Approx(ett).epsilon(1e-6));
    CHECK(std::abs(T.at(MultiIndex{{0, 0}, 2})(1)) <= 1e-9);

    // spatial derivatives against differences of the closed-form static field
    const double h = 1e-4;
    Eigen::Vector2d dE = (static_field(f0, Eigen::Vector2d(r + h, 0)) - static_field(f0, Eigen::Vector2d(r - h, 0))) /
                         (2 * h);
    CHECK(T.at(MultiIndex{{1, 0}, 0})(0) == doctest::Approx(dE(0)).epsilon(1e-7));
    CHECK_THROWS_AS(e_derivative_tower(f0, Eigen::Vector2d::Zero(), 6), ConfigError);
}

TEST_CASE("E tower on perturbed data: single entries and parallel sums agree")
{
    auto f = perturbed(GaussianMixtureData{}, PerturbationSpec{3, 0.3, 0.05, choose_gaussian_params(3)});
    const Eigen::Vector2d x(0.1, 0.2);
    auto T = e_derivative_tower(f, x, 3);
    for (const MultiIndex& g : {MultiIndex{{0, 0}, 3}, MultiIndex{{1, 0}, 2}, MultiIndex{{0, 1}, 1}}) {
        Eigen::Vector2d single = e_derivative(f, x, g);
        CHECK((single - T.at(g)).norm() <= 1e-6 * std::max(1.0, T.at(g).norm()));
    }
    TowerOptions o;
    o.workers = 3;
    auto Tp = e_derivative_tower(f, x, 3, o);
    for (const auto& [g, val] : T) CHECK(Tp.at(g) == val);
    // deterministic
    auto T2 = e_derivative_tower(f, x, 3);
    for (const auto& [g, val] : T) CHECK(T2.at(g) == val);
}

TEST_CASE("V tower")
{
    GaussianMixtureData f0;
    const Eigen::Vector2d q(0.4, -0.3), p(0.2, 0.7);
    auto V = v_derivative_tower(f0, q, p, 3);
    REQUIRE(V.size() == 4);
    CHECK(V[0] == p);
    auto T = e_derivative_tower(f0, q, 2);
    CHECK(V[1] == T.at(MultiIndex{}));
    CHECK(v_derivative_tower(f0, q, p, 0).size() == 1);

    // radial data, zeta = (0, e1): d^2 V = (e1 . grad) E(0) = pi / 2
    auto W = v_derivative_tower(f0, Eigen::Vector2d::Zero(), Eigen::Vector2d(1, 0), 4);
    CHECK(W[2](0) == doctest::Approx(pi / 2).epsilon(1e-9));
    CHECK(std::abs(W[3](0)) <= 1e-9);

    // frozen-field RK4 trajectory; d_t E(0, 0) = 0 here, so d^2V only sees grad E
    auto Vdot = [&](const Eigen::Vector4d& z) { return static_field(f0, z.head<2>()); };
    auto traj = [&](double t) {
        Eigen::Vector4d z(0, 0, 1, 0);
        const int n = 400;
        const double dt = t / n;
        for (int i = 0; i < n; ++i) {
            auto rhs = [&](const Eigen::Vector4d& w) {
                Eigen::Vector4d d;
                d << w.tail<2>(), Vdot(w);
                return d;
            };
            Eigen::Vector4d k1 = rhs(z), k2 = rhs(z + 0.5 * dt * k1), k3 = rhs(z + 0.5 * dt * k2),
                            k4 = rhs(z + dt * k3);
            z += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        return Eigen::Vector2d(z.tail<2>());
    };
    const double h = 0.05;
    const double fd = (traj(2 * h) - 2 * traj(h) + Eigen::Vector2d(1, 0))(0) / (h * h);
    CHECK(std::abs(fd - W[2](0)) <= 0.05 * std::abs(W[2](0)));

    // the E-tower overload needs enough orders
    CHECK_THROWS_AS(v_derivative_tower(T, q, p, 4), ConfigError);
}

TEST_CASE("delta scaling" * doctest::timeout(120))
{
    GaussianMixtureData f0;
    auto r = delta_scaling_experiment(f0, 3, {0.4, 0.2, 0.1}, 0.05);
    CHECK(r.values.size() == 3);
    CHECK(r.slope == doctest::Approx(-1.0).epsilon(0.1));
    CHECK(r.lambda == doctest::Approx(791.681).epsilon(1e-5));
    CHECK(r.predicted_intercept == doctest::Approx(0.05 * r.lambda / 4));
    CHECK(r.intercept_relative_error <= 0.1);

    auto z = delta_scaling_experiment(f0, 3, {0.4, 0.2, 0.1}, 0.0);
    for (double v : z.values) CHECK(v == doctest::Approx(z.baseline).epsilon(1e-9));

    CHECK_THROWS_AS(delta_scaling_experiment(f0, 4, {0.4, 0.1}, 0.05), ConfigError);
    CHECK_THROWS_AS(delta_scaling_experiment(f0, 3, {0.4, 0.2}, 0.05), ConfigError);
}

TEST_CASE("perturbation sequence" * doctest::timeout(300))
{
    auto none = build_sequence(1);
    CHECK(none.stages.empty());
    CHECK(none.specs.empty());
    REQUIRE(none.final_tower.size() == none.base_tower.size());
    for (std::size_t m = 0; m < none.base_tower.size(); ++m) CHECK(none.final_tower[m] == none.base_tower[m]);

    auto s = build_sequence(3);
    REQUIRE(s.stages.size() == 2);
    const auto& st3 = s.stages[1];
    CHECK(st3.spec.N == 3);
    CHECK(st3.target == 256.0);
    CHECK(st3.target_met);
    CHECK(st3.achieved >= 256.0);
    CHECK(std::abs(s.final_tower[4](0)) >= 256.0);
    CHECK(st3.low_order_shift <= 0.125);
    for (int m = 0; m <= 3; ++m) CHECK((st3.after[m] - st3.before[m]).cwiseAbs().maxCoeff() <= 0.125);
    CHECK(st3.spec.delta >= 0.05);
    CHECK(s.stages[0].low_order_shift <= 0.25);
    CHECK(s.stages[0].spec.g.v == Eigen::Vector2d::Zero());

    SequenceCalibration tight;
    tight.epsilon_start = 1e-4;
    tight.delta_floor = 0.3;
    CHECK_THROWS_AS(build_sequence(3, tight), ScheduleInfeasible);
    CHECK_THROWS_AS(build_sequence(5), ConfigError);
}

TEST_CASE("phase volume")
{
    GaussianMixtureData f0;
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    std::vector<Eigen::Vector4d> zs;
    for (int i = 0; i < 6; ++i) zs.emplace_back(U(rng), U(rng), U(rng), U(rng));
    auto rep = phase_volume_check(f0, zs, 0.5, 50);
    CHECK(rep.samples == 6);
    CHECK(rep.max_deviation <= 1e-3);

    auto f = perturbed(f0, PerturbationSpec{3, 0.3, 0.1, choose_gaussian_params(3)});
    CHECK(phase_volume_check(f, zs, 0.5, 100).max_deviation <= 1e-3);
}
