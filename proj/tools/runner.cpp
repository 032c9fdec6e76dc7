#include "runner.hpp"

#include "lagrangian/analyticity.hpp"
#include "lagrangian/compressible.hpp"
#include "lagrangian/errors.hpp"
#include "lagrangian/euler_poisson.hpp"
#include "lagrangian/kernels.hpp"
#include "lagrangian/picard.hpp"
#include "lagrangian/vlasov_tower.hpp"
#include "lagrangian/vortex_patch.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace lagrangian::runner {

// ---------------------------------------------------------------- tables

std::string cell(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string cell(long long v) { return std::to_string(v); }
std::string cell(int v) { return std::to_string(v); }
std::string cell(const std::string& s) { return s; }

void Table::add_row(std::vector<std::string> row)
{
    if (row.size() != columns.size()) throw std::logic_error("row width does not match the header");
    rows.push_back(std::move(row));
}

std::string Table::csv() const
{
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        os << "\n";
    };
    line(columns);
    for (const auto& r : rows) line(r);
    return os.str();
}

Assertion Assertion::check(std::string name, double value, std::string op, double threshold)
{
    Assertion a{std::move(name), value, std::move(op), threshold, false};
    a.pass = a.evaluate();
    return a;
}

bool Assertion::evaluate() const
{
    if (op == "<=") return value <= threshold;
    if (op == ">=") return value >= threshold;
    if (op == "==") return value == threshold;
    if (op == "!=") return value != threshold;
    return false;
}

bool ExperimentOutput::passed() const
{
    return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.pass; });
}

// JSON has no infinities; radii that are +inf are stored as this sentinel.
constexpr double json_infinity = 1e300;

double finite_or(double v) { return std::isinf(v) ? (v > 0 ? json_infinity : -json_infinity) : v; }

namespace {

// ---------------------------------------------------------------- parameter access

double num(const json& p, const char* k) { return p.at(k).get<double>(); }
int integer(const json& p, const char* k) { return p.at(k).get<int>(); }
std::string str(const json& p, const char* k) { return p.at(k).get<std::string>(); }

std::vector<double> num_list(const json& p, const char* k)
{
    std::vector<double> v;
    for (const auto& x : p.at(k)) v.push_back(x.get<double>());
    return v;
}

std::vector<int> int_list(const json& p, const char* k)
{
    std::vector<int> v;
    for (const auto& x : p.at(k)) v.push_back(x.get<int>());
    return v;
}

template <int D>
std::vector<Eigen::Matrix<double, D, 1>> point_list(const json& p, const char* k)
{
    std::vector<Eigen::Matrix<double, D, 1>> v;
    for (const auto& x : p.at(k)) {
        if (!x.is_array() || x.size() != D)
            throw ConfigError(std::string(k) + ": every point needs " + std::to_string(D) + " coordinates");
        Eigen::Matrix<double, D, 1> q;
        for (int i = 0; i < D; ++i) q(i) = x[i].get<double>();
        v.push_back(q);
    }
    return v;
}

std::vector<cplx> circle_times(int count, double radius)
{
    std::vector<cplx> t;
    for (int k = 0; k < count; ++k) t.push_back(std::polar(radius, 2.0 * pi * k / count + 0.3));
    return t;
}

// ---------------------------------------------------------------- kernel-audit

ExperimentOutput kernel_audit(const json& p, const RunContext& ctx)
{
    const int samples = integer(p, "samples");
    const double tol = num(p, "tolerance");
    std::mt19937_64 rng(ctx.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double odd2 = 0, odd3 = 0, hom2 = 0, hom3 = 0, real2 = 0, real3 = 0;
    for (int s = 0; s < samples; ++s) {
        ComplexPoint2 z2(cplx(u(rng), 0.2 * u(rng)), cplx(u(rng), 0.2 * u(rng)));
        ComplexPoint3 z3(cplx(u(rng), 0.2 * u(rng)), cplx(u(rng), 0.2 * u(rng)), cplx(u(rng), 0.2 * u(rng)));
        const double lam = 0.1 + 3.0 * (u(rng) + 1.0);
        const ComplexPoint2 k2 = k2d<cplx>(z2);
        const ComplexPoint3 k3 = k3d<cplx>(z3);
        const double n2 = k2.cwiseAbs().maxCoeff(), n3 = k3.cwiseAbs().maxCoeff();
        odd2 = std::max(odd2, (k2d<cplx>(ComplexPoint2(-z2)) + k2).cwiseAbs().maxCoeff() / n2);
        odd3 = std::max(odd3, (k3d<cplx>(ComplexPoint3(-z3)) + k3).cwiseAbs().maxCoeff() / n3);
        hom2 = std::max(hom2, (k2d<cplx>(ComplexPoint2(lam * z2)) - k2 / lam).cwiseAbs().maxCoeff() * lam / n2);
        hom3 = std::max(hom3,
                        (k3d<cplx>(ComplexPoint3(lam * z3)) - k3 / (lam * lam)).cwiseAbs().maxCoeff() * lam * lam / n3);

        const RealPoint2 x2 = z2.real();
        const RealPoint3 x3 = z3.real();
        const RealPoint2 biot(-x2.y() / (2 * pi * x2.squaredNorm()), x2.x() / (2 * pi * x2.squaredNorm()));
        const RealPoint3 newton = x3 / (4 * pi * std::pow(x3.norm(), 3));
        const ComplexPoint2 r2 = k2d<cplx>(ComplexPoint2(x2.cast<cplx>()));
        const ComplexPoint3 r3 = k3d<cplx>(ComplexPoint3(x3.cast<cplx>()));
        real2 = std::max(real2, ((r2.real() - biot).norm() + r2.imag().norm()) / biot.norm());
        real3 = std::max(real3, ((r3.real() - newton).norm() + r3.imag().norm()) / newton.norm());
    }
    const int bs = integer(p, "bound_samples");
    const auto b2 = kernel_bound_check(2, {0, 0}, Eigen::Matrix2d::Zero(), bs, ctx.seed);
    const auto b3 = kernel_bound_check(3, {0, 0, 0}, Eigen::Matrix3d::Zero(), bs, ctx.seed);

    ExperimentOutput out;
    out.table.columns = {"check", "value", "reference", "error"};
    auto row = [&](const std::string& name, double v, double ref, double err) {
        out.table.add_row({name, cell(v), cell(ref), cell(err)});
        out.assertions.push_back(Assertion::check(name, err, "<=", tol));
    };
    row("oddness_2d", odd2, 0.0, odd2);
    row("oddness_3d", odd3, 0.0, odd3);
    row("homogeneity_2d", hom2, 0.0, hom2);
    row("homogeneity_3d", hom3, 0.0, hom3);
    row("real_restriction_2d", real2, 0.0, real2);
    row("real_restriction_3d", real3, 0.0, real3);
    row("bound_constant_2d", b2.constant, 1.0 / (2 * pi), std::abs(b2.constant - 1.0 / (2 * pi)));
    row("bound_constant_3d", b3.constant, 1.0 / (4 * pi), std::abs(b3.constant - 1.0 / (4 * pi)));
    out.metrics["bound_spread_2d"] = b2.spread;
    out.metrics["bound_spread_3d"] = b3.spread;
    return out;
}

// ---------------------------------------------------------------- vortex-disc

ExperimentOutput vortex_disc(const json& p, const RunContext& ctx)
{
    const double R = num(p, "radius");
    ExperimentOutput out;
    out.table.columns = {"quantity", "index", "x", "y", "value", "reference", "error"};

    // Rankine oracle at the identity
    {
        Patch fine = Patch::disc(R, integer(p, "rankine_resolution"));
        auto id = TrajectoryField<2>::identity(fine.nodes());
        const int ni = integer(p, "interior_probes"), ne = integer(p, "exterior_probes");
        double worst = 0.0;
        for (int k = 0; k < ni + ne; ++k) {
            const bool inside = k < ni;
            const double s = inside ? 0.1 + 0.8 * (k + 0.5) / ni : 1.1 + 1.9 * (k - ni + 0.5) / ne;
            const double th = 2.399963229728653 * k;   // golden angle
            const Eigen::Vector2d x = R * s * Eigen::Vector2d(std::cos(th), std::sin(th));
            const Eigen::Vector2d perp(-x.y(), x.x());
            const Eigen::Vector2d exact = inside ? Eigen::Vector2d(perp / 2.0)
                                                 : Eigen::Vector2d(perp * (R * R) / (2.0 * x.squaredNorm()));
            const Eigen::Vector2d u = patch_velocity(fine, id, x, x.cast<cplx>()).real();
            const double err = (u - exact).norm() / exact.norm();
            worst = std::max(worst, err);
            out.table.add_row({inside ? "rankine_interior" : "rankine_exterior", cell(k), cell(x.x()), cell(x.y()),
                               cell(u.norm()), cell(exact.norm()), cell(err)});
        }
        out.assertions.push_back(Assertion::check("rankine_relative_error", worst, "<=", num(p, "rankine_tol")));
    }

    Patch disc = Patch::disc(R, integer(p, "resolution"));
    const int np = integer(p, "flow_probes");
    RealCloud<2> probes(2, np);
    for (int k = 0; k < np; ++k) {
        const double s = 0.2 + 0.6 * k / std::max(1, np - 1), th = 2.0 * pi * k / np + 0.1;
        // snapped to the nearest mesh node: an off-node probe evolves apart from the
        // P1 interpolant around it, and that mismatch puts near-singular quadrature
        // points of the discrete system close to t = 0
        const Eigen::Vector2d want = R * s * Eigen::Vector2d(std::cos(th), std::sin(th));
        Eigen::Index j = 0;
        (disc.nodes().colwise() - want).colwise().squaredNorm().minCoeff(&j);
        probes.col(k) = disc.nodes().col(j);
    }

    // circle sampling, radius estimates and the real-time rotation rate
    {
        PatchFlowOptions opt;
        opt.rho = num(p, "rho");
        opt.M = integer(p, "M");
        opt.N = integer(p, "N");
        opt.steps = integer(p, "steps");
        opt.workers = ctx.workers;
        const auto res = patch_flow_experiment(disc, probes, opt);
        double min_ratio = std::numeric_limits<double>::infinity(), worst_rate = 0.0, worst_branch = 1.0;
        for (std::size_t k = 0; k < res.size(); ++k) {
            const auto& r = res[k];
            const double ratio = r.radius.infinite ? std::numeric_limits<double>::infinity() : r.radius.value / opt.rho;
            min_ratio = std::min(min_ratio, ratio);
            // X at real t = rho from the series
            Eigen::Vector2d X = Eigen::Vector2d::Zero();
            double tn = 1.0;
            for (int n = 0; n <= r.series.order(); ++n, tn *= opt.rho)
                X += tn * r.series.coefficients.row(n).transpose().real();
            const Eigen::Vector2d a = r.label;
            const double angle = std::atan2(a.x() * X.y() - a.y() * X.x(), a.dot(X));
            const double rate = angle / opt.rho;
            const double err = std::abs(rate - 0.5) / 0.5;
            worst_rate = std::max(worst_rate, err);
            worst_branch = std::min(worst_branch, r.worst_branch_ratio);
            out.table.add_row({"radius", cell(static_cast<int>(k)), cell(a.x()), cell(a.y()),
                               cell(finite_or(r.radius.infinite ? std::numeric_limits<double>::infinity()
                                                                : r.radius.value)),
                               cell(opt.rho), cell(finite_or(ratio))});
            out.table.add_row({"rotation_rate", cell(static_cast<int>(k)), cell(a.x()), cell(a.y()), cell(rate),
                               cell(0.5), cell(err)});
        }
        out.assertions.push_back(Assertion::check("radius_over_rho_min", finite_or(min_ratio), ">=", 1.0));
        out.assertions.push_back(Assertion::check("rotation_rate_relative_error", worst_rate, "<=", num(p, "rate_tol")));
        out.assertions.push_back(Assertion::check("branch_ratio_min", worst_branch, ">=", 0.5));
    }

    // Picard against RK at complex times
    {
        Patch coarse = Patch::disc(R, integer(p, "picard_resolution"));
        PatchSystem sys = make_patch_system(coarse, RealCloud<2>(2, 0), ctx.workers);
        const auto init = TrajectoryField<2>::identity(sys.labels);
        double worst = 0.0;
        int k = 0;
        for (cplx t : circle_times(integer(p, "picard_times"), num(p, "picard_radius"))) {
            const auto pic = picard_solve<2>(sys.F, init, t);
            const auto ray = rk_ray_integrate<2>(sys.F, init, std::arg(t), std::abs(t), integer(p, "rk_steps"));
            const double d = sup_distance(pic.field, ray.fields.back());
            worst = std::max(worst, d);
            out.table.add_row({"picard_vs_rk", cell(k++), cell(t.real()), cell(t.imag()), cell(d), cell(0.0), cell(d)});
        }
        out.assertions.push_back(Assertion::check("picard_rk_sup", worst, "<=", num(p, "picard_tol")));
    }
    return out;
}

// ---------------------------------------------------------------- vortex-kirchhoff

ExperimentOutput vortex_kirchhoff(const json& p, const RunContext& ctx)
{
    const double a = num(p, "a"), b = num(p, "b");
    const auto fit = kirchhoff_rotation_rate(a, b, num(p, "t_end"), integer(p, "resolution"), num(p, "dt"), ctx.workers);
    const double exact = a * b / ((a + b) * (a + b));
    ExperimentOutput out;
    out.table.columns = {"t", "angle"};
    for (std::size_t i = 0; i < fit.times.size(); ++i) out.table.add_row({cell(fit.times[i]), cell(fit.angles[i])});
    const double err = std::abs(fit.rate - exact) / exact;
    out.metrics["rate"] = fit.rate;
    out.metrics["exact_rate"] = exact;
    out.metrics["max_area_drift"] = fit.max_area_drift;
    out.assertions.push_back(Assertion::check("degenerate", fit.degenerate ? 1.0 : 0.0, "==", 0.0));
    out.assertions.push_back(Assertion::check("rate_relative_error", err, "<=", num(p, "rate_tol")));
    return out;
}

// ---------------------------------------------------------------- Euler-Poisson

DensitySpec density_spec(const json& p)
{
    DensitySpec s;
    s.profile = density_profile_from_name(str(p, "profile"));
    s.spacing = num(p, "spacing");
    s.amplitude = num(p, "amplitude");
    s.radius = num(p, "radius");
    s.sigma = num(p, "sigma");
    s.shell_center = num(p, "shell_center");
    s.shell_width = num(p, "shell_width");
    return s;
}

ExperimentOutput ep_radial(const json& p, const RunContext& ctx)
{
    const DensitySpec spec = density_spec(p);
    const DensityCloud c = make_density_cloud(spec);
    ExperimentOutput out;
    out.table.columns = {"t", "node", "r0", "R", "R_shell", "error"};

    const RealCloud<3> still = RealCloud<3>::Zero(3, c.size());
    const auto ray = ep_evolve(c, still, num(p, "t_end"), integer(p, "steps"));
    double worst = 0.0;
    for (std::size_t k = 0; k < ray.s.size(); ++k) {
        int worst_node = 0;
        double worst_k = -1.0, R_w = 0.0, S_w = 0.0;
        for (Eigen::Index i = 0; i < c.size(); ++i) {
            const double r0 = c.nodes.col(i).norm();
            const double R = ray.fields[k].values.col(i).real().norm();
            const double S = shell_radius(spec.enclosed_mass(r0), r0, 0.0, ray.s[k]);
            if (std::abs(R - S) > worst_k) {
                worst_k = std::abs(R - S);
                worst_node = static_cast<int>(i);
                R_w = R;
                S_w = S;
            }
        }
        worst = std::max(worst, worst_k);
        out.table.add_row({cell(ray.s[k]), cell(worst_node), cell(c.nodes.col(worst_node).norm()), cell(R_w),
                           cell(S_w), cell(worst_k)});
    }
    out.assertions.push_back(Assertion::check("shell_trajectory_error", worst, "<=", num(p, "traj_tol")));

    // momentum with a seeded random initial velocity, on a coarser cloud so the
    // random displacements stay small against the node spacing
    DensitySpec mspec = spec;
    mspec.spacing = num(p, "momentum_spacing");
    const DensityCloud mc = make_density_cloud(mspec);
    std::mt19937_64 rng(ctx.seed);
    std::normal_distribution<double> nd(0.0, num(p, "momentum_velocity"));
    RealCloud<3> u0(3, mc.size());
    for (Eigen::Index i = 0; i < u0.size(); ++i) u0.data()[i] = nd(rng);
    const auto mray = ep_evolve(mc, u0, num(p, "t_end"), integer(p, "momentum_steps"));
    const Eigen::Vector3cd P0 = mray.fields.front().velocities * mc.weights.cast<cplx>();
    const double scale = (u0.cwiseAbs() * mc.weights).norm();
    double drift = 0.0;
    for (const auto& f : mray.fields)
        drift = std::max(drift, (f.velocities * mc.weights.cast<cplx>() - P0).norm() / scale);
    out.metrics["nodes"] = c.size();
    out.metrics["total_mass"] = c.total_mass;
    out.metrics["momentum_drift"] = drift;
    out.assertions.push_back(Assertion::check("momentum_drift", drift, "<=", num(p, "momentum_tol")));
    return out;
}

ExperimentOutput ep_complex_circle(const json& p, const RunContext& ctx)
{
    const DensitySpec spec = density_spec(p);
    const DensityCloud c = make_density_cloud(spec);
    const RealCloud<3> u0 = c.nodes * num(p, "radial_velocity");
    std::vector<int> probes;
    for (const auto& x : point_list<3>(p, "probes")) probes.push_back(nearest_node(c, x));
    const double rho = num(p, "rho");
    const auto res = ep_circle_experiment(c, u0, probes, rho, integer(p, "M"), integer(p, "N"), integer(p, "steps"),
                                          BallOptions{}, ctx.workers);
    ExperimentOutput out;
    out.table.columns = {"quantity", "node", "x", "y", "z", "value", "reference", "error"};
    double min_ratio = std::numeric_limits<double>::infinity(), c1_err = 0.0;
    for (const auto& pr : res.probes) {
        const Eigen::Vector3d a = c.nodes.col(pr.node);
        const double radius = pr.radius.infinite ? std::numeric_limits<double>::infinity() : pr.radius.value;
        min_ratio = std::min(min_ratio, radius / rho);
        const double e0 = (pr.series.coefficients.row(0).transpose() - a.cast<cplx>()).norm();
        const double e1 = (pr.series.coefficients.row(1).transpose() - u0.col(pr.node).cast<cplx>()).norm();
        c1_err = std::max({c1_err, e0, e1});
        out.table.add_row({"radius", cell(pr.node), cell(a.x()), cell(a.y()), cell(a.z()), cell(finite_or(radius)),
                           cell(rho), cell(finite_or(radius / rho))});
        out.table.add_row({"first_coefficient", cell(pr.node), cell(a.x()), cell(a.y()), cell(a.z()),
                           cell(pr.series.coefficients.row(1).norm()), cell(u0.col(pr.node).norm()), cell(e1)});
    }
    out.assertions.push_back(Assertion::check("radius_over_rho_min", finite_or(min_ratio), ">=", 1.0));
    out.assertions.push_back(Assertion::check("branch_ratio_min", res.worst_branch_ratio, ">=", 0.5));
    out.assertions.push_back(Assertion::check("low_coefficient_error", c1_err, "<=", 1e-8));

    const auto F = ep_operator(c, ctx.workers);
    const auto init = TrajectoryField<3>::identity(c.nodes, u0);
    double worst = 0.0;
    int k = 0;
    for (cplx t : circle_times(integer(p, "picard_times"), num(p, "picard_radius"))) {
        const auto pic = picard_solve<3>(F, init, t);
        const auto ray = rk_ray_integrate<3>(F, init, std::arg(t), std::abs(t), integer(p, "rk_steps"));
        const double d = sup_distance(pic.field, ray.fields.back());
        worst = std::max(worst, d);
        out.table.add_row({"picard_vs_rk", cell(k++), cell(t.real()), cell(t.imag()), cell(0.0), cell(d), cell(0.0),
                           cell(d)});
    }
    out.assertions.push_back(Assertion::check("picard_rk_sup", worst, "<=", num(p, "picard_tol")));
    out.metrics["nodes"] = c.size();
    return out;
}

// ---------------------------------------------------------------- Vlasov-Poisson

ExperimentOutput vp_identity_check(const json& p, const RunContext&)
{
    const auto deltas = num_list(p, "deltas");
    const auto xis = point_list<2>(p, "xi_points");
    const double tol = num(p, "tol");
    ExperimentOutput out;
    out.table.columns = {"gx1", "gx2", "gt", "delta", "xi1", "xi2", "numeric", "analytic", "expected", "relative_error"};
    double worst = 0.0;
    for (const auto& g : multi_indices_up_to(integer(p, "max_order")))
        for (double d : deltas)
            for (const auto& xi : xis) {
                const auto r = scaled_bump_identity_check(g, d, xi);
                worst = std::max(worst, r.relative_error);
                out.table.add_row({cell(g.x[0]), cell(g.x[1]), cell(g.t), cell(d), cell(xi.x()), cell(xi.y()),
                                   cell(r.numeric), cell(r.analytic), cell(r.expected), cell(r.relative_error)});
            }
    out.assertions.push_back(Assertion::check("identity_relative_error", worst, "<=", tol));

    // exact targets
    const PolyXi w1 = w_gamma(MultiIndex{{1, 0}, 0});
    out.assertions.push_back(
        Assertion::check("w_e1_constant", static_cast<double>(w1.coefficient(0, 0)), "==", -2.0));
    out.assertions.push_back(Assertion::check("w_e1_terms", static_cast<double>(w1.terms.size()), "==", 1.0));
    for (double d : deltas) {
        const auto r = scaled_bump_identity_check(MultiIndex{{0, 0}, 3}, d, Eigen::Vector2d(1, 0));
        // delta^{-2} * 12, exact in binary for the default deltas
        out.assertions.push_back(Assertion::check("w_t3_at_e1_delta_" + cell(d), r.analytic, "==", 12.0 / (d * d)));
    }
    const PolyXi p3 = p_N(3);
    out.assertions.push_back(
        Assertion::check("p3_xi1_cubed", static_cast<double>(p3.coefficient(3, 0)), "==", -12.0));
    for (int N : {1, 3, 5, 7})
        out.assertions.push_back(Assertion::check("p" + std::to_string(N) + "_leading_nonzero",
                                                  static_cast<double>(p_N(N).coefficient(N, 0)), "!=", 0.0));
    // chain rule on h = x1 + t, a = (t, 0): 2 at N = 1, zero from N = 2 on, in integers
    auto chain_sum = [](int N) {
        long long sum = 0;
        for (const auto& t : faadibruno_terms(N)) {
            const bool dh = (t.gamma.spatial() == 1 && t.gamma.x[0] == 1 && t.gamma.t == 0) ||
                            (t.gamma.spatial() == 0 && t.gamma.t == 1);
            bool da = true;
            for (std::size_t i = 0; i < t.k.size(); ++i) da = da && t.k[i] == 1 && t.j[i] == 1;
            if (dh && da) sum += t.b;
        }
        return sum;
    };
    out.assertions.push_back(Assertion::check("chain_rule_linear_first", static_cast<double>(chain_sum(1)), "==", 2.0));
    long long null_max = 0;
    for (int N = 2; N <= 8; ++N) null_max = std::max(null_max, std::abs(chain_sum(N)));
    out.assertions.push_back(Assertion::check("chain_rule_linear_null", static_cast<double>(null_max), "==", 0.0));
    return out;
}

TowerOptions tower_options(const json& p, int workers)
{
    TowerOptions o;
    o.panel_points = integer(p, "panel_points");
    o.angular_points = integer(p, "angular_points");
    o.tolerance = num(p, "tolerance");
    o.workers = workers;
    return o;
}

ExperimentOutput vp_delta_scaling(const json& p, const RunContext& ctx)
{
    const auto r = delta_scaling_experiment(GaussianMixtureData{}, integer(p, "N"), num_list(p, "deltas"),
                                            num(p, "epsilon"), tower_options(p, ctx.workers));
    ExperimentOutput out;
    out.table.columns = {"delta", "value", "shifted"};
    for (std::size_t i = 0; i < r.deltas.size(); ++i)
        out.table.add_row({cell(r.deltas[i]), cell(r.values[i]), cell(r.values[i] - r.baseline)});
    out.metrics["baseline"] = r.baseline;
    out.metrics["slope"] = r.slope;
    out.metrics["raw_slope"] = r.raw_slope;
    out.metrics["intercept"] = r.intercept;
    out.metrics["lambda"] = r.lambda;
    out.metrics["predicted_intercept"] = r.predicted_intercept;
    out.metrics["g_v"] = {r.g.v.x(), r.g.v.y()};
    out.assertions.push_back(Assertion::check("slope_deviation", std::abs(r.slope + 1.0), "<=", num(p, "slope_tol")));
    out.assertions.push_back(
        Assertion::check("intercept_relative_error", r.intercept_relative_error, "<=", num(p, "intercept_tol")));
    return out;
}

ExperimentOutput vp_sequence(const json& p, const RunContext& ctx)
{
    SequenceCalibration cal;
    cal.epsilon_start = num(p, "epsilon_start");
    cal.max_epsilon_halvings = integer(p, "max_epsilon_halvings");
    cal.delta_start = num(p, "delta_start");
    cal.delta_factor = num(p, "delta_factor");
    cal.delta_floor = num(p, "delta_floor");
    cal.even_delta = num(p, "even_delta");
    cal.tower = tower_options(p, ctx.workers);
    const auto res = build_sequence(integer(p, "n_max"), cal);

    ExperimentOutput out;
    out.table.columns = {"stage", "order", "before_1", "before_2", "after_1", "after_2"};
    json stages = json::array();
    for (const auto& st : res.stages) {
        for (std::size_t m = 0; m < st.after.size(); ++m)
            out.table.add_row({cell(st.spec.N), cell(static_cast<int>(m)), cell(st.before[m](0)),
                               cell(st.before[m](1)), cell(st.after[m](0)), cell(st.after[m](1))});
        stages.push_back({{"N", st.spec.N},
                          {"epsilon", st.spec.epsilon},
                          {"delta", st.spec.delta},
                          {"g_v", {st.spec.g.v.x(), st.spec.g.v.y()}},
                          {"low_order_shift", st.low_order_shift},
                          {"shift_cap", st.shift_cap},
                          {"target", st.target},
                          {"achieved", st.achieved},
                          {"target_met", st.target_met},
                          {"epsilon_halvings", st.epsilon_halvings},
                          {"positivity_min", st.positivity.min_value},
                          {"positive_on_samples", st.positivity.positive}});
        out.assertions.push_back(Assertion::check("stage_" + std::to_string(st.spec.N) + "_shift",
                                                  st.low_order_shift, "<=", st.shift_cap));
        if (st.spec.N % 2 == 1)
            out.assertions.push_back(
                Assertion::check("stage_" + std::to_string(st.spec.N) + "_target", st.achieved, ">=", st.target));
    }
    out.metrics["stages"] = stages;
    double base_diff = 0.0;
    for (std::size_t m = 0; m < res.base_tower.size(); ++m)
        base_diff = std::max(base_diff, (res.final_tower[m] - res.base_tower[m]).cwiseAbs().maxCoeff());
    out.metrics["final_minus_base"] = base_diff;
    if (res.stages.empty()) out.assertions.push_back(Assertion::check("no_stage_identity", base_diff, "==", 0.0));
    return out;
}

// ---------------------------------------------------------------- compressible

ExperimentOutput ce_counterexample(const json& p, const RunContext& ctx)
{
    EulerParams eos;
    eos.rho_bar = num(p, "rho_bar");
    eos.A = num(p, "A");
    eos.gamma = num(p, "gamma");
    FVOptions o;
    o.cfl = num(p, "cfl");
    o.order = integer(p, "order");
    o.frame_dt = num(p, "frame_dt");
    o.workers = ctx.workers;
    const double eps = num(p, "epsilon"), t_end = num(p, "t_end"), r_max = num(p, "r_max");
    const auto tl = fv_evolve(paper_initial_data(eps, RadialGrid{integer(p, "cells"), r_max}, eos), t_end, o);
    const double sigma = eos.sigma();

    ExperimentOutput out;
    out.table.columns = {"t", "M", "I", "kinetic", "pressure_excess", "mass_excess"};
    std::size_t k = 0;
    for (const auto& f : tl.frames) {
        while (k < tl.samples.size() && tl.samples[k].t < f.t) ++k;
        const auto& s = tl.samples[std::min(k, tl.samples.size() - 1)];
        out.table.add_row({cell(s.t), cell(s.M), cell(s.I), cell(s.kinetic), cell(s.pressure_excess),
                           cell(s.mass_excess)});
    }

    const auto fs = finite_speed_check(tl, sigma, num(p, "finite_speed_tol"));
    const auto md = moment_diagnostics(tl);
    out.metrics["sigma"] = sigma;
    out.metrics["steps"] = tl.steps;
    out.metrics["finite_speed_violation"] = fs.violation;
    out.metrics["inertia_residual"] = md.inertia_residual;
    out.metrics["virial_residual"] = md.virial_residual;
    out.metrics["min_dM_dt"] = md.min_dM_dt;
    out.metrics["max_abs_M"] = md.max_abs_M;
    out.metrics["mass_drift"] = md.mass_drift;
    out.metrics["max_grad_u"] = {tl.initial_max_grad_u, tl.max_grad_u};
    out.assertions.push_back(Assertion::check("finite_speed_violation", fs.violation, "<=", num(p, "finite_speed_tol")));
    out.assertions.push_back(Assertion::check("dM_dt_min_scaled", md.min_dM_dt, ">=", -1e-8 * md.max_abs_M));

    const auto traces = trace_and_detect(tl, num_list(p, "labels"), num(p, "tol_floor"), num(p, "tol_move"));
    json tj = json::array();
    int detected_in_cone = 0, causality_breaks = 0;
    for (const auto& tr : traces) {
        tj.push_back({{"label", tr.label},
                      {"t0", tr.t0 ? json(*tr.t0) : json(nullptr)},
                      {"causality_floor", tr.causality_floor},
                      {"final_radius", tr.radius.back()}});
        if (!tr.t0) continue;
        if (tr.label > 1.0 && tr.label < 1.0 + sigma * t_end) ++detected_in_cone;
        if (*tr.t0 < tr.causality_floor) ++causality_breaks;
    }
    out.metrics["traces"] = tj;
    out.assertions.push_back(Assertion::check("causality_breaks", causality_breaks, "==", 0.0));

    if (eps == 0.0) {
        double max_I = 0.0;
        for (const auto& s : tl.samples) max_I = std::max(max_I, std::abs(s.I));
        out.assertions.push_back(Assertion::check("max_abs_M", md.max_abs_M, "<=", 1e-12));
        out.assertions.push_back(Assertion::check("max_abs_I", max_I, "<=", 1e-12));
        out.assertions.push_back(Assertion::check("detections", detected_in_cone, "==", 0.0));
        return out;
    }
    out.assertions.push_back(Assertion::check("detections_in_cone", detected_in_cone, ">=", 1.0));
    out.assertions.push_back(Assertion::check("M0_positive", tl.samples.front().M, ">=", 0.0));

    const auto cells = int_list(p, "refinement_cells");
    if (!cells.empty()) {
        const auto st = refinement_study(eps, cells, num(p, "refinement_t_end"), eos, r_max, o);
        json lv = json::array();
        for (const auto& l : st.levels)
            lv.push_back({{"cells", l.cells}, {"inertia_residual", l.inertia_residual}, {"l1_error", l.l1_error}});
        out.metrics["refinement"] = {{"levels", lv}, {"inertia_orders", st.inertia_orders}, {"l1_orders", st.l1_orders}};
        for (std::size_t i = 0; i < st.inertia_orders.size(); ++i)
            out.assertions.push_back(Assertion::check("inertia_order_" + std::to_string(cells[i + 1]),
                                                      st.inertia_orders[i], ">=", num(p, "min_order")));
    }
    return out;
}

// ---------------------------------------------------------------- registry

std::vector<ExperimentInfo> make_registry()
{
    std::vector<ExperimentInfo> r;
    r.push_back({"kernel-audit", "kernels", "oddness, homogeneity, real restriction and derivative-bound constants",
                 json{{"samples", 200}, {"bound_samples", 70}, {"tolerance", 1e-10}}, kernel_audit});
    r.push_back({"vortex-disc", "vortex-patch",
                 "Rankine oracle, complex-circle Taylor radii, rotation rate and Picard/RK agreement on the unit disc",
                 json{{"radius", 1.0},
                      {"rankine_resolution", 64},
                      {"interior_probes", 20},
                      {"exterior_probes", 10},
                      {"rankine_tol", 1e-4},
                      {"resolution", 32},
                      {"flow_probes", 8},
                      {"rho", 0.05},
                      {"M", 16},
                      {"N", 6},
                      {"steps", 8},
                      {"rate_tol", 0.01},
                      {"picard_resolution", 16},
                      {"picard_times", 5},
                      {"picard_radius", 0.05},
                      {"rk_steps", 40},
                      {"picard_tol", 1e-6}},
                 vortex_disc});
    r.push_back({"vortex-kirchhoff", "vortex-patch", "shape rotation rate of an elliptical patch",
                 json{{"a", 2.0}, {"b", 1.0}, {"resolution", 24}, {"t_end", 2.0}, {"dt", 0.05}, {"rate_tol", 0.05}},
                 vortex_kirchhoff});
    r.push_back({"ep-radial", "euler-poisson", "radial shell trajectories against the shell ODE, momentum drift",
                 json{{"profile", "shell-bump"},
                      {"spacing", 0.1},
                      {"amplitude", 1.0},
                      {"radius", 1.0},
                      {"sigma", 0.4},
                      {"shell_center", 1.0},
                      {"shell_width", 0.3},
                      {"t_end", 0.5},
                      {"steps", 4},
                      {"traj_tol", 1e-4},
                      {"momentum_spacing", 0.2},
                      {"momentum_velocity", 0.02},
                      {"momentum_steps", 20},
                      {"momentum_tol", 1e-6}},
                 ep_radial});
    r.push_back({"ep-complex-circle", "euler-poisson", "complex-time circle sampling and Picard/RK agreement on a node cloud",
                 json{{"profile", "radial-bump"},
                      {"spacing", 0.25},
                      {"amplitude", 1.0},
                      {"radius", 1.0},
                      {"sigma", 0.4},
                      {"shell_center", 1.0},
                      {"shell_width", 0.3},
                      {"radial_velocity", 0.1},
                      {"probes", json::array({json::array({0.5, 0.0, 0.0}), json::array({0.0, 0.25, 0.5})})},
                      {"rho", 0.1},
                      {"M", 16},
                      {"N", 6},
                      {"steps", 8},
                      {"picard_times", 5},
                      {"picard_radius", 0.1},
                      {"rk_steps", 40},
                      {"picard_tol", 1e-6}},
                 ep_complex_circle});
    r.push_back({"vp-identity-check", "vlasov", "scaled-bump kernel identity on a grid, exact polynomial checks",
                 json{{"deltas", {0.5, 0.25}},
                      {"max_order", 4},
                      {"xi_points",
                       json::array({json::array({1.0, 0.0}), json::array({0.0, 1.0}), json::array({0.6, -0.8}),
                                    json::array({-1.2, 0.5}), json::array({0.3, 2.0})})},
                      {"tol", 1e-3}},
                 vp_identity_check});
    r.push_back({"vp-delta-scaling", "vlasov", "1/delta growth of d^{N+1}V^1 under the scaled bump",
                 json{{"N", 3},
                      {"deltas", {0.4, 0.2, 0.1}},
                      {"epsilon", 0.05},
                      {"slope_tol", 0.1},
                      {"intercept_tol", 0.1},
                      {"panel_points", 8},
                      {"angular_points", 32},
                      {"tolerance", 1e-6}},
                 vp_delta_scaling});
    r.push_back({"vp-sequence", "vlasov", "staged perturbations with measured low-order shifts and n^n targets",
                 json{{"n_max", 3},
                      {"epsilon_start", 1.0},
                      {"max_epsilon_halvings", 12},
                      {"delta_start", 0.5},
                      {"delta_factor", 0.8},
                      {"delta_floor", 0.05},
                      {"even_delta", 0.5},
                      {"panel_points", 8},
                      {"angular_points", 32},
                      {"tolerance", 1e-6}},
                 vp_sequence});
    r.push_back({"ce-counterexample", "compressible",
                 "radial compressible Euler: finite speed, moment identities, flat-then-move trajectories",
                 json{{"epsilon", 0.05},
                      {"rho_bar", 1.0},
                      {"A", 1.0},
                      {"gamma", 2.0},
                      {"cells", 800},
                      {"r_max", 4.0},
                      {"t_end", 1.0},
                      {"cfl", 0.4},
                      {"order", 2},
                      {"frame_dt", 0.01},
                      {"labels", {0.5, 1.2, 2.0, 2.6}},
                      {"tol_floor", 1e-8},
                      {"tol_move", 1e-6},
                      {"finite_speed_tol", 1e-8},
                      {"refinement_cells", {800, 1600, 3200}},
                      {"refinement_t_end", 1.0},
                      {"min_order", 0.9}},
                 ce_counterexample});
    return r;
}

bool same_kind(const json& def, const json& v)
{
    if (def.is_number_integer()) return v.is_number_integer();
    if (def.is_number()) return v.is_number();
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) return v.is_array();
    return false;
}

std::uint64_t fnv1a(const std::string& bytes)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

const std::vector<ExperimentInfo>& registry()
{
    static const std::vector<ExperimentInfo> r = make_registry();
    return r;
}

const ExperimentInfo& find_experiment(const std::string& name)
{
    for (const auto& e : registry())
        if (e.name == name) return e;
    throw ConfigError("unknown experiment '" + name + "'");
}

json resolve_config(const json& raw)
{
    if (!raw.is_object()) throw ConfigError("config must be an object");
    for (const auto& [k, v] : raw.items())
        if (k != "experiment" && k != "params" && k != "output" && k != "seed")
            throw ConfigError("unknown config key '" + k + "'");
    if (!raw.contains("experiment") || !raw["experiment"].is_string())
        throw ConfigError("config needs a string 'experiment'");
    const auto& info = find_experiment(raw["experiment"].get<std::string>());
    json params = info.defaults;
    if (raw.contains("params")) {
        if (!raw["params"].is_object()) throw ConfigError("'params' must be an object");
        for (const auto& [k, v] : raw["params"].items()) {
            if (!info.defaults.contains(k)) throw ConfigError("unknown parameter '" + k + "' for " + info.name);
            if (!same_kind(info.defaults[k], v))
                throw ConfigError("parameter '" + k + "' has the wrong type (expected " +
                                  std::string(info.defaults[k].type_name()) + ")");
            params[k] = v;
        }
    }
    json out;
    out["experiment"] = info.name;
    out["params"] = params;
    out["output"] = raw.value("output", "results/" + info.name);
    if (raw.contains("seed") && !raw["seed"].is_number_unsigned() && !raw["seed"].is_number_integer())
        throw ConfigError("'seed' must be an integer");
    out["seed"] = raw.value("seed", 1);
    if (out["seed"].get<long long>() < 0) throw ConfigError("'seed' must be nonnegative");
    if (!out["output"].is_string()) throw ConfigError("'output' must be a string");
    return out;
}

std::string fnv1a_hex(const std::string& bytes)
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
    return buf;
}

std::string code_version()
{
#ifdef LAGRANGIAN_VERSION
    return LAGRANGIAN_VERSION;
#else
    return "unknown";
#endif
}

Bundle run(const json& resolved, int workers)
{
    const auto& info = find_experiment(resolved.at("experiment").get<std::string>());
    Bundle b;
    b.config = resolved;
    b.workers = std::max(1, workers);
    RunContext ctx{b.workers, resolved.at("seed").get<std::uint64_t>()};
    const auto t0 = std::chrono::steady_clock::now();
    b.output = info.run(resolved.at("params"), ctx);
    b.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    b.results_csv = b.output.table.csv();
    b.results_hash = fnv1a_hex(b.results_csv);
    b.config_hash = fnv1a_hex(resolved.dump());
    return b;
}

namespace {

json assertions_json(const std::vector<Assertion>& as)
{
    json a = json::array();
    for (const auto& x : as)
        a.push_back({{"name", x.name}, {"value", x.value}, {"op", x.op}, {"threshold", x.threshold}, {"pass", x.pass}});
    return a;
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

void write_bundle(const Bundle& b, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    const auto& info = find_experiment(b.config.at("experiment").get<std::string>());
    {
        std::ofstream f(dir / "config.json");
        f << b.config.dump(2) << "\n";
    }
    {
        std::ofstream f(dir / "results.csv", std::ios::binary);
        f << b.results_csv;
    }
    json s;
    s["experiment"] = info.name;
    s["tag"] = info.tag;
    s["passed"] = b.output.passed();
    s["assertions"] = assertions_json(b.output.assertions);
    s["metrics"] = b.output.metrics;
    s["provenance"] = {{"config_hash", b.config_hash},
                       {"results_hash", b.results_hash},
                       {"code_version", code_version()},
                       {"wall_time_s", b.wall_time},
                       {"workers", b.workers}};
    std::ofstream f(dir / "summary.json");
    f << s.dump(2) << "\n";
}

VerifyReport verify_bundle(const std::filesystem::path& dir, bool rerun)
{
    VerifyReport rep;
    const json summary = json::parse(read_file(dir / "summary.json"));
    const json config = json::parse(read_file(dir / "config.json"));
    const std::string csv = read_file(dir / "results.csv");
    const std::string recorded = summary.at("provenance").at("results_hash").get<std::string>();
    rep.hash_ok = fnv1a_hex(csv) == recorded;
    if (!rep.hash_ok) rep.messages.push_back("results.csv does not match its recorded hash");
    if (fnv1a_hex(resolve_config(config).dump()) != summary.at("provenance").at("config_hash").get<std::string>())
        rep.messages.push_back("note: config.json differs from the recorded config hash");
    rep.assertions_ok = true;
    for (const auto& a : summary.at("assertions")) {
        Assertion x{a.at("name").get<std::string>(), a.at("value").get<double>(), a.at("op").get<std::string>(),
                    a.at("threshold").get<double>(), false};
        if (!x.evaluate()) {
            rep.assertions_ok = false;
            rep.messages.push_back("assertion failed: " + x.name + " = " + cell(x.value) + " " + x.op + " " +
                                   cell(x.threshold));
        }
    }
    if (rerun) {
        const Bundle again = run(resolve_config(config), 1);
        rep.rerun_ok = again.results_hash == recorded;
        if (!rep.rerun_ok)
            rep.messages.push_back("sequential rerun gives results hash " + again.results_hash + ", recorded " +
                                   recorded);
    }
    return rep;
}

}  // namespace lagrangian::runner
