#include "lagrangian/vlasov_tower.hpp"

#include "lagrangian/errors.hpp"
#include "lagrangian/parallel.hpp"
#include "lagrangian/quadrature.hpp"
#include "lagrangian/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lagrangian {

namespace {

double factorial(int n)
{
    static const std::vector<double> table = [] {
        std::vector<double> t(64, 1.0);
        for (int i = 1; i < 64; ++i) t[i] = t[i - 1] * i;
        return t;
    }();
    return table.at(n);
}

double binomial(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

Rational rational_of(double x)
{
    if (!std::isfinite(x)) throw ConfigError("non-finite parameter in exact integral");
    int e = 0;
    double m = std::frexp(x, &e);
    auto mant = static_cast<long long>(std::ldexp(m, 53));
    e -= 53;
    Rational r(mant);
    Rational two(2);
    if (e > 0)
        for (int i = 0; i < e; ++i) r *= two;
    else
        for (int i = 0; i < -e; ++i) r /= two;
    return r;
}

Rational rpow(const Rational& x, int n)
{
    Rational r(1);
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

boost::multiprecision::cpp_int ibinomial(int n, int k)
{
    boost::multiprecision::cpp_int r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// ---------------------------------------------------------------- jets

// Truncated bivariate Taylor polynomial sum c(i,j) d1^i d2^j, i + j <= order.
struct Jet {
    int order = -1;
    std::vector<double> c;

    Jet() = default;
    explicit Jet(int n) : order(n), c(n < 0 ? 0 : (n + 1) * (n + 2) / 2, 0.0) {}

    static int index(int i, int j) { return (i + j) * (i + j + 1) / 2 + j; }
    double& operator()(int i, int j) { return c[index(i, j)]; }
    double operator()(int i, int j) const { return c[index(i, j)]; }
    // d^{i,j} at the expansion point
    double partial(int i, int j) const { return (*this)(i, j) * factorial(i) * factorial(j); }
};

// acc += s * a on the orders acc keeps
void axpy(Jet& acc, double s, const Jet& a)
{
    for (int n = 0; n <= acc.order; ++n)
        for (int j = 0; j <= n; ++j) acc(n - j, j) += s * a(n - j, j);
}

Jet product(const Jet& a, const Jet& b, int order)
{
    Jet r(order);
    for (int n1 = 0; n1 <= order; ++n1)
        for (int j1 = 0; j1 <= n1; ++j1) {
            double x = a(n1 - j1, j1);
            if (x == 0.0) continue;
            for (int n2 = 0; n2 <= order - n1; ++n2)
                for (int j2 = 0; j2 <= n2; ++j2) r(n1 - j1 + n2 - j2, j1 + j2) += x * b(n2 - j2, j2);
        }
    return r;
}

Jet derivative(const Jet& a, int m1, int m2)
{
    Jet r(a.order - m1 - m2);
    for (int n = 0; n <= r.order; ++n)
        for (int j = 0; j <= n; ++j) {
            int i = n - j;
            r(i, j) = a(i + m1, j + m2) * (factorial(i + m1) / factorial(i)) * (factorial(j + m2) / factorial(j));
        }
    return r;
}

// Taylor coefficients h_k(t)/k! of exp(-a t^2), k = 0..n.
std::vector<double> gaussian_taylor_1d(double a, double t, int n)
{
    std::vector<double> h(n + 1);
    h[0] = std::exp(-a * t * t);
    if (n >= 1) h[1] = -2.0 * a * t * h[0];
    for (int k = 1; k < n; ++k) h[k + 1] = -2.0 * a * t * h[k] - 2.0 * a * k * h[k - 1];
    for (int k = 0; k <= n; ++k) h[k] /= factorial(k);
    return h;
}

// int_0^1 u^k exp(-s u) du, k = 0..n
std::vector<double> exp_moments(double s, int n)
{
    std::vector<double> I(n + 1);
    const double es = std::exp(-s);
    if (s <= 40.0 + n) {
        // I_n = e^{-s} sum_m n! s^m / (m + n + 1)!, then the stable downward recurrence
        double term = 1.0 / (n + 1), sum = 0.0;
        for (int m = 0; m < 100000; ++m) {
            sum += term;
            term *= s / (m + n + 2);
            if (term < 1e-18 * sum) break;
        }
        I[n] = es * sum;
        for (int k = n; k > 0; --k) I[k - 1] = (s * I[k] + es) / k;
    } else {
        I[0] = (1.0 - es) / s;
        for (int k = 1; k <= n; ++k) I[k] = (k * I[k - 1] - es) / s;
    }
    return I;
}

// ---------------------------------------------------------------- mixture preparation

struct Prepared {
    struct Comp {
        double a = 1.0;
        std::map<std::pair<int, int>, double> P;
        std::vector<std::pair<std::array<int, 2>, double>> hermite;   // P e^{-a|x|^2} = sum c_beta d^beta e^{-a|x|^2}
        int beta_max = 0;
        std::vector<double> mu;   // velocity moments, Jet::index layout
        double scale = 1.0;       // 1/sqrt(a)
    };
    std::vector<Comp> comps;
    int moment_cap = 0;
    bool radial = true;            // every prefactor is a polynomial in |x|^2
    bool radial_shortcut = true;
    double scale_min = 1.0, scale_max = 1.0;

    double mu(std::size_t c, int a1, int a2) const { return comps[c].mu[Jet::index(a1, a2)]; }
};

// int v^k exp(-b (v - v0)^2) dv
double velocity_moment_1d(int k, double b, double v0)
{
    double s = 0.0;
    for (int l = 0; l <= k; l += 2)
        s += binomial(k, l) * std::pow(v0, k - l) * std::tgamma((l + 1) / 2.0) / std::pow(b, (l + 1) / 2.0);
    return s;
}

// P(x) = Q(|x|^2): x1^{2i} x2^{2k-2i} carries C(k, i) q_k, odd powers vanish.
bool is_radial(const std::map<std::pair<int, int>, double>& P)
{
    std::map<int, double> q;
    for (const auto& [e, c] : P) {
        if (c == 0.0) continue;
        if (e.first % 2 || e.second % 2) return false;
        if (e.first == 0) q[e.second / 2] = c;
    }
    for (const auto& [e, c] : P) {
        if (c == 0.0) continue;
        const int k = (e.first + e.second) / 2;
        auto it = q.find(k);
        const double want = it == q.end() ? 0.0 : it->second * binomial(k, e.first / 2);
        if (std::abs(c - want) > 1e-14 * std::max(std::abs(c), std::abs(want))) return false;
    }
    return true;
}

Prepared prepare(const GaussianMixtureData& f0, int moment_cap)
{
    Prepared prep;
    prep.moment_cap = moment_cap;
    bool first = true;
    for (const auto& mc : f0.all_components()) {
        if (!(mc.a > 0.0) || !(mc.b > 0.0)) throw ConfigError("mixture exponents must be positive");
        Prepared::Comp c;
        c.a = mc.a;
        c.P = mc.prefactor;
        c.scale = 1.0 / std::sqrt(mc.a);
        prep.radial = prep.radial && is_radial(mc.prefactor);
        int deg = 0;
        for (const auto& [e, v] : mc.prefactor) deg = std::max(deg, std::max(e.first, e.second));
        // t^m = sum_l d[m][l] h_l(t), h_l = d^l/dt^l e^{-a t^2} / e^{-a t^2}
        std::vector<std::vector<double>> d(deg + 1, std::vector<double>(deg + 1, 0.0));
        for (int m = 0; m <= deg; ++m)
            for (int l = 0; 2 * l <= m; ++l)
                d[m][m - 2 * l] = (m % 2 ? -1.0 : 1.0) * factorial(m) * std::pow(mc.a, l - m) /
                                  (std::pow(2.0, m) * factorial(l) * factorial(m - 2 * l));
        std::map<std::pair<int, int>, double> h;
        for (const auto& [e, v] : mc.prefactor)
            for (int l1 = 0; l1 <= e.first; ++l1)
                for (int l2 = 0; l2 <= e.second; ++l2) {
                    double w = v * d[e.first][l1] * d[e.second][l2];
                    if (w != 0.0) h[{l1, l2}] += w;
                }
        for (const auto& [e, v] : h) {
            c.hermite.push_back({{e.first, e.second}, v});
            c.beta_max = std::max(c.beta_max, e.first + e.second);
        }
        c.mu.assign((moment_cap + 1) * (moment_cap + 2) / 2, 0.0);
        for (int n = 0; n <= moment_cap; ++n)
            for (int j = 0; j <= n; ++j)
                c.mu[Jet::index(n - j, j)] =
                    mc.A * velocity_moment_1d(n - j, mc.b, mc.v0.x()) * velocity_moment_1d(j, mc.b, mc.v0.y());
        if (first) {
            prep.scale_min = prep.scale_max = c.scale;
            first = false;
        }
        prep.scale_min = std::min(prep.scale_min, c.scale);
        prep.scale_max = std::max(prep.scale_max, c.scale);
        prep.comps.push_back(std::move(c));
    }
    return prep;
}

// Jet of P(x) exp(-a|x|^2) at y.
Jet density_jet(const Prepared::Comp& c, const Eigen::Vector2d& y, int order)
{
    auto e1 = gaussian_taylor_1d(c.a, y.x(), order);
    auto e2 = gaussian_taylor_1d(c.a, y.y(), order);
    Jet g(order);
    for (int n = 0; n <= order; ++n)
        for (int j = 0; j <= n; ++j) g(n - j, j) = e1[n - j] * e2[j];
    Jet p(order);
    for (const auto& [e, v] : c.P)
        for (int i = 0; i <= e.first; ++i)
            for (int j = 0; j <= e.second && i + j <= order; ++j)
                p(i, j) += v * binomial(e.first, i) * std::pow(y.x(), e.first - i) * binomial(e.second, j) *
                           std::pow(y.y(), e.second - j);
    return product(p, g, order);
}

// Field of exp(-a|x|^2): G_a(x) = x phi(a|x|^2) / 2, phi(s) = (1 - e^{-s}) / s.
std::array<Jet, 2> gaussian_field_jet(double a, const Eigen::Vector2d& y, int order)
{
    const double s0 = a * y.squaredNorm();
    auto I = exp_moments(s0, order);
    Jet ds(order);
    if (order >= 1) {
        ds(1, 0) = 2.0 * a * y.x();
        ds(0, 1) = 2.0 * a * y.y();
    }
    if (order >= 2) {
        ds(2, 0) = a;
        ds(0, 2) = a;
    }
    Jet phi(order);
    phi(0, 0) = (order % 2 ? -1.0 : 1.0) * I[order] / factorial(order);
    for (int k = order - 1; k >= 0; --k) {
        phi = product(phi, ds, order);
        phi(0, 0) += (k % 2 ? -1.0 : 1.0) * I[k] / factorial(k);
    }
    std::array<Jet, 2> G{Jet(order), Jet(order)};
    for (int axis = 0; axis < 2; ++axis) {
        Jet lin(order);
        lin(0, 0) = 0.5 * y(axis);
        if (order >= 1) (axis == 0 ? lin(1, 0) : lin(0, 1)) = 0.5;
        G[axis] = product(lin, phi, order);
    }
    return G;
}

// Field of P exp(-a|x|^2) as a jet of the given order.
std::array<Jet, 2> component_field_jet(const Prepared::Comp& c, const Eigen::Vector2d& y, int order)
{
    auto G = gaussian_field_jet(c.a, y, order + c.beta_max);
    std::array<Jet, 2> F{Jet(order), Jet(order)};
    for (const auto& [beta, w] : c.hermite)
        for (int axis = 0; axis < 2; ++axis) {
            Jet dG = derivative(G[axis], beta[0], beta[1]);
            axpy(F[axis], w, dG);
        }
    return F;
}

// Part of d_t^i E(., 0) linear in f0, as jets of order top - i, i = 0..imax.
std::vector<std::array<Jet, 2>> linear_field_jets(const Prepared& prep, const Eigen::Vector2d& y, int imax, int top)
{
    std::vector<std::array<Jet, 2>> E(imax + 1);
    for (int i = 0; i <= imax; ++i) E[i] = {Jet(top - i), Jet(top - i)};
    for (std::size_t ci = 0; ci < prep.comps.size(); ++ci) {
        auto F = component_field_jet(prep.comps[ci], y, top);
        for (int i = 0; i <= imax; ++i) {
            const double sign = i % 2 ? -1.0 : 1.0;
            for (int l1 = 0; l1 <= i; ++l1) {
                const double w = sign * binomial(i, l1) * prep.mu(ci, l1, i - l1);
                if (w == 0.0) continue;
                for (int axis = 0; axis < 2; ++axis) axpy(E[i][axis], w, derivative(F[axis], l1, i - l1));
            }
        }
    }
    return E;
}

// ---------------------------------------------------------------- polar quadrature

struct PolarNode {
    double r, w;   // radial node and weight (radial rule times angular step)
    double c, s;   // cos, sin
};

struct QuadPlan {
    int panel_points = 8;
    int angular_points = 32;
    int angular_cap = 256;
};

std::vector<PolarNode> polar_nodes(const Prepared& prep, const Eigen::Vector2d& centre, const QuadPlan& plan)
{
    const double d = centre.norm();
    const double R = d + 6.5 * prep.scale_max;
    std::vector<double> br{0.0, R};
    if (d > 0.0 && d < R) br.push_back(d);
    for (const auto& c : prep.comps)
        for (double m : {0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.5}) {
            for (double b : {std::abs(d - m * c.scale), d + m * c.scale})
                if (b > 0.0 && b < R) br.push_back(b);
        }
    std::sort(br.begin(), br.end());
    std::vector<double> panels{br.front()};
    for (double b : br)
        if (b - panels.back() > 1e-6 * prep.scale_min) panels.push_back(b);
    if (panels.back() < R) panels.back() = R;

    int M = std::max(plan.angular_points,
                     static_cast<int>(std::ceil(2.0 * pi * (d + prep.scale_min) / (0.5 * prep.scale_min))));
    M = std::min(M, std::max(plan.angular_cap, plan.angular_points));
    M = (M + 3) / 4 * 4;
    const double dth = 2.0 * pi / M;

    std::vector<PolarNode> nodes;
    for (std::size_t p = 0; p + 1 < panels.size(); ++p) {
        GaussRule g = gauss_legendre(plan.panel_points, panels[p], panels[p + 1]);
        for (int q = 0; q < g.nodes.size(); ++q)
            for (int k = 0; k < M; ++k) {
                double th = (k + 0.5) * dth;
                nodes.push_back({g.nodes(q), g.weights(q) * dth, std::cos(th), std::sin(th)});
            }
    }
    return nodes;
}

// ---------------------------------------------------------------- moment hierarchy

std::vector<std::array<Jet, 2>> nonlinear_field_jets(const Prepared& prep, const Eigen::Vector2d& x, int kmax,
                                                     int R, const QuadPlan& plan, int workers);

// Nl(k, 0)(y + .) for k = 0..kmax, orders R - k: the part of d_t^k rho(., 0)
// that carries at least one factor of E. Moments evolve by
// d_t M_alpha = -sum_j d_j M_{alpha + e_j} + sum_j alpha_j E_j M_{alpha - e_j}.
std::vector<Jet> nonlinear_density_jets(const Prepared& prep, const Eigen::Vector2d& y, int kmax, int R,
                                       const QuadPlan& plan)
{
    const int nc = static_cast<int>(prep.comps.size());
    const int na = (kmax + 1) * (kmax + 2) / 2;
    auto idx = [](int a1, int a2) { return Jet::index(a1, a2); };

    std::vector<std::array<Jet, 2>> E;
    if (kmax >= 2) {
        E = linear_field_jets(prep, y, kmax - 2, R - 1);
        if (kmax - 2 == 2 && prep.radial && prep.radial_shortcut) {
            // Nl(2, 0) = -div(E rho_0); for radial data E rho_0 is a radial
            // gradient field, so its field is -E rho_0 itself.
            Jet rho(R);
            for (int c = 0; c < nc; ++c) axpy(rho, prep.mu(c, 0, 0), density_jet(prep.comps[c], y, R));
            for (int axis = 0; axis < 2; ++axis) axpy(E[2][axis], -1.0, product(E[0][axis], rho, R - 3));
        } else if (kmax - 2 >= 2) {
            QuadPlan inner{std::max(4, plan.panel_points - 2), std::max(12, plan.angular_points * 3 / 4), 96};
            auto nl = nonlinear_field_jets(prep, y, kmax - 2, R - 1, inner, 1);
            for (int i = 2; i <= kmax - 2; ++i)
                for (int axis = 0; axis < 2; ++axis) axpy(E[i][axis], 1.0, nl[i][axis]);
        }
    }

    std::vector<Jet> u(nc);
    for (int c = 0; c < nc; ++c) u[c] = density_jet(prep.comps[c], y, R);

    std::vector<std::vector<Jet>> L(kmax + 1, std::vector<Jet>(na)), N(kmax + 1, std::vector<Jet>(na));
    for (int n = 0; n <= kmax; ++n)
        for (int j = 0; j <= n; ++j) {
            Jet m(R);
            for (int c = 0; c < nc; ++c) axpy(m, prep.mu(c, n - j, j), u[c]);
            L[0][idx(n - j, j)] = std::move(m);
            N[0][idx(n - j, j)] = Jet(R);
        }
    for (int n = 0; n < kmax; ++n) {
        const int o = R - n - 1;
        for (int s = 0; s <= kmax - n - 1; ++s)
            for (int j = 0; j <= s; ++j) {
                const int a1 = s - j, a2 = j;
                Jet l(o), nl(o);
                axpy(l, -1.0, derivative(L[n][idx(a1 + 1, a2)], 1, 0));
                axpy(l, -1.0, derivative(L[n][idx(a1, a2 + 1)], 0, 1));
                axpy(nl, -1.0, derivative(N[n][idx(a1 + 1, a2)], 1, 0));
                axpy(nl, -1.0, derivative(N[n][idx(a1, a2 + 1)], 0, 1));
                for (int axis = 0; axis < 2; ++axis) {
                    const int aj = axis == 0 ? a1 : a2;
                    if (aj == 0) continue;
                    const int b1 = a1 - (axis == 0), b2 = a2 - (axis == 1);
                    for (int i = 0; i <= n; ++i) {
                        Jet m(o);
                        axpy(m, 1.0, L[n - i][idx(b1, b2)]);
                        axpy(m, 1.0, N[n - i][idx(b1, b2)]);
                        axpy(nl, aj * binomial(n, i), product(E[i][axis], m, o));
                    }
                }
                L[n + 1][idx(a1, a2)] = std::move(l);
                N[n + 1][idx(a1, a2)] = std::move(nl);
            }
    }
    std::vector<Jet> out(kmax + 1);
    for (int k = 0; k <= kmax; ++k) out[k] = N[k][0];
    return out;
}

// int K(x - y) Nl(k, 0)(y + .) dy for k = 0..kmax, jets of order R - k.
std::vector<std::array<Jet, 2>> nonlinear_field_jets(const Prepared& prep, const Eigen::Vector2d& x, int kmax,
                                                     int R, const QuadPlan& plan, int workers)
{
    std::vector<std::array<Jet, 2>> out(kmax + 1);
    for (int k = 0; k <= kmax; ++k) out[k] = {Jet(R - k), Jet(R - k)};
    if (kmax < 2) return out;
    const auto nodes = polar_nodes(prep, x, plan);
    // per-node contributions are summed in node order regardless of workers
    const int chunk = 64;
    const int nchunks = static_cast<int>((nodes.size() + chunk - 1) / chunk);
    std::vector<std::vector<std::array<Jet, 2>>> partial(nchunks);
    parallel_for(nchunks, workers, [&](int b) {
        auto& acc = partial[b];
        acc.resize(kmax + 1);
        for (int k = 0; k <= kmax; ++k) acc[k] = {Jet(R - k), Jet(R - k)};
        const std::size_t end = std::min(nodes.size(), static_cast<std::size_t>(b + 1) * chunk);
        for (std::size_t q = static_cast<std::size_t>(b) * chunk; q < end; ++q) {
            const auto& nd = nodes[q];
            Eigen::Vector2d y = x + nd.r * Eigen::Vector2d(nd.c, nd.s);
            auto nl = nonlinear_density_jets(prep, y, kmax, R, plan);
            const double w = -nd.w / (2.0 * pi);
            for (int k = 2; k <= kmax; ++k) {
                axpy(acc[k][0], w * nd.c, nl[k]);
                axpy(acc[k][1], w * nd.s, nl[k]);
            }
        }
    });
    for (const auto& acc : partial)
        for (int k = 2; k <= kmax; ++k)
            for (int axis = 0; axis < 2; ++axis) axpy(out[k][axis], 1.0, acc[k][axis]);
    return out;
}

ETower assemble_tower(const std::vector<std::array<Jet, 2>>& lin, const std::vector<std::array<Jet, 2>>& nl,
                      int s_max)
{
    ETower tower;
    for (const auto& g : multi_indices_up_to(s_max)) {
        Eigen::Vector2d e;
        for (int axis = 0; axis < 2; ++axis)
            e(axis) = lin[g.t][axis].partial(g.x[0], g.x[1]) + nl[g.t][axis].partial(g.x[0], g.x[1]);
        tower[g] = e;
    }
    return tower;
}

}  // namespace

// ---------------------------------------------------------------- multi-indices and Faa di Bruno

std::vector<MultiIndex> multi_indices_up_to(int s)
{
    std::vector<MultiIndex> out;
    for (int a = 0; a <= s; ++a)
        for (int b = 0; a + b <= s; ++b)
            for (int t = 0; a + b + t <= s; ++t) out.push_back(MultiIndex{{a, b}, t});
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<FdBTerm> faadibruno_terms(int N)
{
    if (N < 0 || N > 10) throw ConfigError("faadibruno_terms: N must lie in 0..10");
    using Atoms = std::vector<std::pair<int, int>>;   // (k, j), sorted
    using Key = std::pair<MultiIndex, Atoms>;
    std::map<Key, long long> cur{{Key{MultiIndex{}, {}}, 1}};
    for (int step = 0; step < N; ++step) {
        std::map<Key, long long> next;
        for (const auto& [key, b] : cur) {
            const auto& [g, atoms] = key;
            // d/dt d^gamma h(a(t), t) = sum_j a_j' d_{x_j} d^gamma h + d_t d^gamma h
            for (int j = 1; j <= 2; ++j) {
                MultiIndex g2 = g;
                ++g2.x[j - 1];
                Atoms a2 = atoms;
                a2.insert(std::upper_bound(a2.begin(), a2.end(), std::make_pair(1, j)), {1, j});
                next[{g2, a2}] += b;
            }
            MultiIndex gt = g;
            ++gt.t;
            next[{gt, atoms}] += b;
            for (std::size_t i = 0; i < atoms.size(); ++i) {
                Atoms a2 = atoms;
                ++a2[i].first;
                std::sort(a2.begin(), a2.end());
                next[{g, a2}] += b;
            }
        }
        cur = std::move(next);
    }
    std::vector<FdBTerm> out;
    for (const auto& [key, b] : cur) {
        FdBTerm t;
        t.gamma = key.first;
        for (const auto& [k, j] : key.second) {
            t.k.push_back(k);
            t.j.push_back(j);
        }
        t.b = b;
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------- exact polynomials

Rational PolyXi::coefficient(int i, int j) const
{
    auto it = terms.find({i, j});
    return it == terms.end() ? Rational(0) : it->second;
}

int PolyXi::homogeneous_degree() const
{
    if (terms.empty()) return -1;
    int d = terms.begin()->first.first + terms.begin()->first.second;
    for (const auto& [e, c] : terms)
        if (e.first + e.second != d) return -2;
    return d;
}

double PolyXi::operator()(const Eigen::Vector2d& xi) const
{
    double s = 0.0;
    for (const auto& [e, c] : terms)
        s += static_cast<double>(c) * std::pow(xi.x(), e.first) * std::pow(xi.y(), e.second);
    return s;
}

void PolyXi::add(int i, int j, const Rational& c)
{
    if (c == 0) return;
    auto& slot = terms[{i, j}];
    slot += c;
    if (slot == 0) terms.erase({i, j});
}

Rational gaussian_derivative_at_zero(int m)
{
    if (m < 0) throw ConfigError("negative derivative order");
    if (m % 2) return Rational(0);
    // (-1)^{m/2} m! / (m/2)!
    boost::multiprecision::cpp_int r = 1;
    for (int i = m / 2 + 1; i <= m; ++i) r *= i;
    return (m / 2) % 2 ? Rational(-r) : Rational(r);
}

PolyXi w_gamma(const MultiIndex& gamma)
{
    if (gamma.x[0] < 0 || gamma.x[1] < 0 || gamma.t < 0) throw ConfigError("negative multi-index");
    PolyXi w;
    const int T = gamma.t;
    for (int i = 0; i <= T; ++i) {
        Rational c = Rational(ibinomial(T, i)) * gaussian_derivative_at_zero(i + 1 + gamma.x[0]) *
                     gaussian_derivative_at_zero(T - i + gamma.x[1]);
        w.add(i, T - i, c);
    }
    return w;
}

PolyXi p_N(int N)
{
    if (N < 1 || N > 10) throw ConfigError("p_N: N must lie in 1..10");
    PolyXi p;
    for (const auto& t : faadibruno_terms(N)) {
        if (t.gamma.order() != N) continue;
        if (std::any_of(t.j.begin(), t.j.end(), [](int j) { return j != 1; })) continue;
        Rational s = Rational(t.gamma.t % 2 ? -t.b : t.b);
        for (const auto& [e, c] : w_gamma(t.gamma).terms) p.add(e.first, e.second, s * c);
    }
    return p;
}

double PiMultiple::value() const { return static_cast<double>(coefficient) * pi; }

PiMultiple gaussian_poly_integral(const PolyXi& poly, double A, double c, const Eigen::Vector2d& v)
{
    if (!(c > 0.0)) throw ConfigError("gaussian_poly_integral: c must be positive");
    const Rational rc = rational_of(c), rA = rational_of(A);
    const Rational v1 = rational_of(v.x()), v2 = rational_of(v.y());
    // int (v + eta)^m e^{-c eta^2} d eta = sqrt(pi/c) sum_{k even} C(m,k) v^{m-k} (k-1)!! / (2c)^{k/2}
    auto moment = [&](int m, const Rational& vv) {
        Rational s(0);
        boost::multiprecision::cpp_int dfact = 1;   // (k-1)!!
        for (int k = 0; k <= m; k += 2) {
            if (k > 0) dfact *= (k - 1);
            s += Rational(ibinomial(m, k)) * rpow(vv, m - k) * Rational(dfact) / rpow(2 * rc, k / 2);
        }
        return s;
    };
    Rational total(0);
    for (const auto& [e, coef] : poly.terms) total += coef * moment(e.first, v1) * moment(e.second, v2);
    return PiMultiple{rA * total / rc};
}

GaussianParams choose_gaussian_params(int N)
{
    if (N < 1 || N > 10) throw ConfigError("choose_gaussian_params: N must lie in 1..10");
    GaussianParams g;
    if (N % 2 == 0) return g;
    const PolyXi p = p_N(N);
    for (int i = -4; i <= 4; ++i)
        for (int j = -4; j <= 4; ++j) {
            Eigen::Vector2d v(0.5 * i, 0.5 * j);
            if (std::abs(gaussian_poly_integral(p, g.A, g.c, v).value()) >= 1e-3) {
                g.v = v;
                return g;
            }
        }
    throw SearchExhausted("no lattice centre pairs with p_" + std::to_string(N));
}

// ---------------------------------------------------------------- scaled bump identity

IdentityCheck scaled_bump_identity_check(const MultiIndex& gamma, double delta, const Eigen::Vector2d& xi)
{
    const int N = gamma.order();
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (N > 8) throw ConfigError("identity check supports order(gamma) <= 8");
    const double a = 1.0 / (delta * delta);
    const int T = gamma.t;

    // (|y|^2/delta^2 - 1) e^{-|y|^2/delta^2} = (delta^2/4) Laplacian e^{-|y|^2/delta^2}
    auto integrand = [&](const Eigen::Vector2d& y) {
        const int top = N + 2;
        std::vector<double> h1(top + 1), h2(top + 1);
        auto t1 = gaussian_taylor_1d(a, y.x(), top), t2 = gaussian_taylor_1d(a, y.y(), top);
        for (int k = 0; k <= top; ++k) {
            h1[k] = t1[k] * factorial(k);
            h2[k] = t2[k] * factorial(k);
        }
        double s = 0.0;
        for (int i = 0; i <= T; ++i) {
            const int m1 = i + gamma.x[0], m2 = T - i + gamma.x[1];
            const double c = binomial(T, i) * std::pow(xi.x(), i) * std::pow(xi.y(), T - i);
            s += c * (h1[m1 + 2] * h2[m2] + h1[m1] * h2[m2 + 2]);
        }
        return 0.25 * delta * delta * s;
    };
    auto quad = [&](int p, int M) {
        const std::vector<double> br{0, 0.25, 0.5, 1, 1.5, 2, 2.5, 3, 4, 5, 6, 7, 9};
        double sum = 0.0;
        for (std::size_t k = 0; k + 1 < br.size(); ++k) {
            GaussRule g = gauss_legendre(p, br[k] * delta, br[k + 1] * delta);
            for (int q = 0; q < g.nodes.size(); ++q) {
                double ring = 0.0;
                for (int m = 0; m < M; ++m) {
                    double th = (m + 0.5) * 2.0 * pi / M;
                    ring += std::cos(th) * integrand(g.nodes(q) * Eigen::Vector2d(std::cos(th), std::sin(th)));
                }
                sum += g.weights(q) * ring * (2.0 * pi / M);
            }
        }
        return sum / (2.0 * pi);   // K^1 = cos(theta) / (2 pi r), dy = r dr dtheta
    };
    IdentityCheck out;
    const double coarse = quad(10, 2 * N + 8), fine = quad(16, 2 * N + 16);
    out.numeric = fine;
    out.analytic = std::pow(delta, 1 - N) * w_gamma(gamma)(xi);
    out.identity_constant = (N % 2 ? -0.25 : 0.25);
    out.expected = out.identity_constant * out.analytic;
    const double floor = std::pow(delta, 1 - N) * std::pow(std::max(1.0, xi.norm()), T);
    if (std::abs(fine - coarse) > 1e-9 * std::max(std::abs(fine), floor))
        throw QuadratureNotConverged("bump identity quadrature did not settle");
    out.relative_error = std::abs(out.numeric - out.expected) / std::max(std::abs(out.expected), floor);
    return out;
}

// ---------------------------------------------------------------- mixtures

double MixtureComponent::operator()(const Eigen::Vector2d& x, const Eigen::Vector2d& v) const
{
    double p = 0.0;
    for (const auto& [e, c] : prefactor) p += c * std::pow(x.x(), e.first) * std::pow(x.y(), e.second);
    return p * std::exp(-a * x.squaredNorm()) * A * std::exp(-b * (v - v0).squaredNorm());
}

std::vector<MixtureComponent> GaussianMixtureData::all_components() const
{
    std::vector<MixtureComponent> out;
    if (base) {
        MixtureComponent c;
        c.prefactor[{0, 0}] = 1.0;
        out.push_back(c);
    }
    out.insert(out.end(), components.begin(), components.end());
    return out;
}

double GaussianMixtureData::operator()(const Eigen::Vector2d& x, const Eigen::Vector2d& v) const
{
    double s = 0.0;
    for (const auto& c : all_components()) s += c(x, v);
    return s;
}

MixtureComponent scaled_bump(const PerturbationSpec& spec)
{
    if (!(spec.delta > 0.0 && spec.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (spec.N < 2) throw ConfigError("perturbation stage must be >= 2");
    if (!(spec.g.c > 0.0) || !(spec.g.A > 0.0)) throw ConfigError("g_N needs A > 0 and c > 0");
    MixtureComponent c;
    const double s = spec.epsilon * std::pow(spec.delta, spec.N - 2);
    const double d2 = spec.delta * spec.delta;
    c.prefactor[{2, 0}] = s / d2;
    c.prefactor[{0, 2}] = s / d2;
    c.prefactor[{0, 0}] = -s;
    c.a = 1.0 / d2;
    c.A = spec.g.A;
    c.b = spec.g.c;
    c.v0 = spec.g.v;
    return c;
}

GaussianMixtureData perturbed(const GaussianMixtureData& f0, const PerturbationSpec& spec)
{
    GaussianMixtureData f = f0;
    if (spec.epsilon != 0.0) f.components.push_back(scaled_bump(spec));
    return f;
}

PositivityReport check_positivity(const GaussianMixtureData& f0, int per_axis)
{
    if (per_axis < 2) throw ConfigError("positivity grid needs at least 2 points per axis");
    PositivityReport rep;
    rep.min_value = std::numeric_limits<double>::infinity();
    const auto comps = f0.all_components();
    auto axis = [&](double L, int i) { return -L + 2.0 * L * i / (per_axis - 1); };
    for (int i = 0; i < per_axis; ++i)
        for (int j = 0; j < per_axis; ++j) {
            Eigen::Vector2d x(axis(3.0, i), axis(3.0, j));
            for (int k = 0; k < per_axis; ++k)
                for (int l = 0; l < per_axis; ++l) {
                    Eigen::Vector2d v(axis(4.0, k), axis(4.0, l));
                    double f = 0.0;
                    for (const auto& c : comps) f += c(x, v);
                    ++rep.samples;
                    if (f < rep.min_value) {
                        rep.min_value = f;
                        rep.argmin << x, v;
                    }
                }
        }
    rep.positive = rep.min_value > 0.0;
    return rep;
}

Eigen::Vector2d static_field(const GaussianMixtureData& f0, const Eigen::Vector2d& x)
{
    const Prepared prep = prepare(f0, 0);
    auto E = linear_field_jets(prep, x, 0, 0);
    return Eigen::Vector2d(E[0][0](0, 0), E[0][1](0, 0));
}

// ---------------------------------------------------------------- towers

ETower e_derivative_tower(const GaussianMixtureData& f0, const Eigen::Vector2d& x, int s_max,
                          const TowerOptions& options)
{
    if (s_max < 0 || s_max > 5) throw ConfigError("e_derivative_tower: s_max must lie in 0..5");
    Prepared prep = prepare(f0, s_max + 1);
    prep.radial_shortcut = options.radial_shortcut;
    const auto lin = linear_field_jets(prep, x, s_max, s_max);
    QuadPlan coarse{options.panel_points, options.angular_points, 256};
    QuadPlan fine{options.panel_points + 4, options.angular_points + options.angular_points / 2, 384};
    const auto nl_fine = nonlinear_field_jets(prep, x, s_max, s_max, fine, options.workers);
    ETower tower = assemble_tower(lin, nl_fine, s_max);
    if (s_max >= 2) {
        const auto nl_coarse = nonlinear_field_jets(prep, x, s_max, s_max, coarse, options.workers);
        ETower check = assemble_tower(lin, nl_coarse, s_max);
        for (const auto& [g, e] : tower) {
            double diff = (e - check.at(g)).cwiseAbs().maxCoeff();
            if (diff > options.tolerance * std::max(1.0, e.cwiseAbs().maxCoeff())) {
                std::ostringstream os;
                os << "E derivative (" << g.x[0] << "," << g.x[1] << "," << g.t << ") moved by " << diff
                   << " between quadrature levels";
                throw QuadratureNotConverged(os.str());
            }
        }
    }
    return tower;
}

Eigen::Vector2d e_derivative(const GaussianMixtureData& f0, const Eigen::Vector2d& x, const MultiIndex& gamma,
                             const TowerOptions& options)
{
    return e_derivative_tower(f0, x, gamma.order(), options).at(gamma);
}

std::vector<Eigen::Vector2d> v_derivative_tower(const ETower& e_at_q, const Eigen::Vector2d& q,
                                                const Eigen::Vector2d& p, int n_max)
{
    if (n_max < 0 || n_max > 6) throw ConfigError("v_derivative_tower: n_max must lie in 0..6");
    std::vector<Eigen::Vector2d> V{p};
    auto X = [&](int k) -> Eigen::Vector2d { return k == 0 ? q : V[k - 1]; };
    for (int n = 1; n <= n_max; ++n) {
        // d^n V = d^{n-1}/dt^{n-1} E(X(t), t)
        Eigen::Vector2d acc = Eigen::Vector2d::Zero();
        for (const auto& term : faadibruno_terms(n - 1)) {
            double prod = static_cast<double>(term.b);
            for (std::size_t i = 0; i < term.k.size(); ++i) prod *= X(term.k[i])(term.j[i] - 1);
            auto it = e_at_q.find(term.gamma);
            if (it == e_at_q.end()) throw ConfigError("E tower too short for the requested V order");
            acc += prod * it->second;
        }
        V.push_back(acc);
    }
    return V;
}

std::vector<Eigen::Vector2d> v_derivative_tower(const GaussianMixtureData& f0, const Eigen::Vector2d& q,
                                                const Eigen::Vector2d& p, int n_max, const TowerOptions& options)
{
    if (n_max < 0 || n_max > 6) throw ConfigError("v_derivative_tower: n_max must lie in 0..6");
    if (n_max == 0) return {p};
    return v_derivative_tower(e_derivative_tower(f0, q, n_max - 1, options), q, p, n_max);
}

// ---------------------------------------------------------------- experiments

DeltaScalingResult delta_scaling_experiment(const GaussianMixtureData& f0, int N, const std::vector<double>& deltas,
                                            double epsilon, const TowerOptions& options)
{
    if (N < 3 || N % 2 == 0) throw ConfigError("delta scaling needs an odd N >= 3");
    if (deltas.size() < 2) throw ConfigError("delta scaling needs at least two deltas");
    const auto [lo, hi] = std::minmax_element(deltas.begin(), deltas.end());
    if (*hi < 4.0 * *lo * (1.0 - 1e-12)) throw ConfigError("delta list must span a factor of 4");

    DeltaScalingResult res;
    res.N = N;
    res.epsilon = epsilon;
    res.g = choose_gaussian_params(N);
    res.deltas = deltas;
    const Eigen::Vector2d q = Eigen::Vector2d::Zero(), p(1.0, 0.0);
    res.baseline = v_derivative_tower(f0, q, p, N + 1, options)[N + 1](0);
    for (double d : deltas) {
        auto f = perturbed(f0, PerturbationSpec{N, d, epsilon, res.g});
        res.values.push_back(v_derivative_tower(f, q, p, N + 1, options)[N + 1](0));
    }
    auto slope_of = [&](const std::vector<double>& y) {
        Eigen::MatrixXd A(deltas.size(), 2);
        Eigen::VectorXd b(deltas.size());
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            A(i, 0) = std::log(deltas[i]);
            A(i, 1) = 1.0;
            b(i) = std::log(std::abs(y[i]));
        }
        return A.colPivHouseholderQr().solve(b)(0);
    };
    std::vector<double> shifted;
    for (double v : res.values) shifted.push_back(v - res.baseline);
    res.raw_slope = slope_of(res.values);
    res.slope = slope_of(shifted);
    // (value - baseline) delta = c + d delta
    Eigen::MatrixXd A(deltas.size(), 2);
    Eigen::VectorXd b(deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = deltas[i];
        b(i) = shifted[i] * deltas[i];
    }
    res.intercept = A.colPivHouseholderQr().solve(b)(0);
    res.lambda = gaussian_poly_integral(p_N(N), res.g.A, res.g.c, res.g.v).value();
    res.predicted_intercept = epsilon * res.lambda / 4.0;
    res.intercept_relative_error =
        std::abs(res.intercept - res.predicted_intercept) / std::max(std::abs(res.predicted_intercept), 1e-300);
    return res;
}

SequenceResult build_sequence(int n_max, const SequenceCalibration& cal)
{
    if (n_max < 1 || n_max > 4) throw ConfigError("build_sequence: n_max must lie in 1..4");
    if (!(cal.delta_floor > 0.0) || !(cal.delta_start < 1.0) || !(cal.delta_factor > 0.0 && cal.delta_factor < 1.0))
        throw ConfigError("build_sequence: bad delta calibration");
    SequenceResult res;
    const Eigen::Vector2d q = Eigen::Vector2d::Zero(), p(1.0, 0.0);
    res.base_tower = v_derivative_tower(res.f0, q, p, n_max + 1, cal.tower);

    for (int n = 2; n <= n_max; ++n) {
        StageReport st;
        st.before = v_derivative_tower(res.f0, q, p, n + 1, cal.tower);
        st.shift_cap = std::ldexp(1.0, -n);
        const bool odd = n % 2 == 1;
        st.target = odd ? std::pow(n + 1.0, n + 1.0) : 0.0;
        PerturbationSpec spec{n, odd ? cal.delta_start : cal.even_delta, cal.epsilon_start, choose_gaussian_params(n)};
        double best_achieved = 0.0;
        for (;;) {
            bool met = true;
            if (odd) {
                spec.delta = cal.delta_start;
                for (;;) {
                    st.after = v_derivative_tower(perturbed(res.f0, spec), q, p, n + 1, cal.tower);
                    st.achieved = std::abs(st.after[n + 1](0));
                    best_achieved = std::max(best_achieved, st.achieved);
                    if (st.achieved >= st.target) break;
                    double next = spec.delta * cal.delta_factor;
                    if (next < cal.delta_floor * (1.0 - 1e-12)) {
                        met = false;
                        break;
                    }
                    spec.delta = next;
                }
            } else {
                st.after = v_derivative_tower(perturbed(res.f0, spec), q, p, n + 1, cal.tower);
                st.achieved = std::abs(st.after[n + 1](0));
            }
            st.low_order_shift = 0.0;
            for (int m = 0; m <= n; ++m)
                st.low_order_shift = std::max(st.low_order_shift, (st.after[m] - st.before[m]).cwiseAbs().maxCoeff());
            if (!met) {
                std::ostringstream os;
                os << "stage " << n << ": delta reached the floor " << cal.delta_floor << " with |d^" << n + 1
                   << "V^1| = " << best_achieved << " < " << st.target << " (epsilon " << spec.epsilon << ")";
                throw ScheduleInfeasible(os.str());
            }
            if (st.low_order_shift <= st.shift_cap) break;
            if (++st.epsilon_halvings > cal.max_epsilon_halvings) {
                std::ostringstream os;
                os << "stage " << n << ": low-order shift " << st.low_order_shift << " stays above " << st.shift_cap;
                throw ScheduleInfeasible(os.str());
            }
            spec.epsilon *= 0.5;
        }
        st.target_met = !odd || st.achieved >= st.target;
        st.spec = spec;
        res.f0 = perturbed(res.f0, spec);
        st.positivity = check_positivity(res.f0);
        res.specs.push_back(spec);
        res.stages.push_back(std::move(st));
    }
    res.final_tower = v_derivative_tower(res.f0, q, p, n_max + 1, cal.tower);
    return res;
}

PhaseVolumeReport phase_volume_check(const GaussianMixtureData& f0, const std::vector<Eigen::Vector4d>& zetas,
                                     double t_end, int steps, double h)
{
    if (steps < 1 || !(h > 0.0)) throw ConfigError("phase_volume_check: bad steps or h");
    const Prepared prep = prepare(f0, 0);
    auto field = [&](const Eigen::Vector2d& x) {
        auto E = linear_field_jets(prep, x, 0, 0);
        return Eigen::Vector2d(E[0][0](0, 0), E[0][1](0, 0));
    };
    auto rhs = [&](const Eigen::Vector4d& z) {
        Eigen::Vector4d d;
        d << z.tail<2>(), field(z.head<2>());
        return d;
    };
    auto flow = [&](Eigen::Vector4d z) {
        const double dt = t_end / steps;
        for (int s = 0; s < steps; ++s) {
            Eigen::Vector4d k1 = rhs(z), k2 = rhs(z + 0.5 * dt * k1), k3 = rhs(z + 0.5 * dt * k2),
                            k4 = rhs(z + dt * k3);
            z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        return z;
    };
    PhaseVolumeReport rep;
    for (const auto& z : zetas) {
        Eigen::Matrix4d J;
        for (int c = 0; c < 4; ++c) {
            Eigen::Vector4d e = Eigen::Vector4d::Unit(c) * h;
            J.col(c) = (flow(z + e) - flow(z - e)) / (2.0 * h);
        }
        rep.max_deviation = std::max(rep.max_deviation, std::abs(J.determinant() - 1.0));
        ++rep.samples;
    }
    return rep;
}

}  // namespace lagrangian
