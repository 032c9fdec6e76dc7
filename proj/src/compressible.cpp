#include "lagrangian/compressible.hpp"

#include "lagrangian/analyticity.hpp"
#include "lagrangian/errors.hpp"
#include "lagrangian/parallel.hpp"
#include "lagrangian/quadrature.hpp"
#include "lagrangian/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace lagrangian {

double EulerParams::pressure(double rho) const { return A * std::pow(rho, gamma); }

double EulerParams::sound_speed(double rho) const { return std::sqrt(A * gamma * std::pow(rho, gamma - 1.0)); }

double EulerParams::sigma() const { return sound_speed(rho_bar); }

double RadialGrid::volume(int i) const
{
    const double a = face(i), b = face(i + 1);
    return 0.5 * (b - a) * (b + a);
}

double initial_density_profile(double r)
{
    if (r >= 1.0) return 0.0;
    return std::exp(1.0 / (r * r - 1.0));
}

double initial_velocity_profile(double r)
{
    if (r <= 0.0 || r >= 1.0) return 0.0;
    const double r2 = r * r;
    return std::exp(1.0 / (r2 * (r2 - 1.0)));
}

namespace {

void check_eos(const EulerParams& eos)
{
    if (!(eos.rho_bar > 0.0) || !(eos.A > 0.0) || !(eos.gamma > 1.0))
        throw ConfigError("equation of state needs rho_bar > 0, A > 0, gamma > 1");
}

}  // namespace

RadialState paper_initial_data(double epsilon, const RadialGrid& grid, const EulerParams& eos)
{
    check_eos(eos);
    if (!(epsilon >= 0.0 && epsilon <= 0.1)) throw ConfigError("epsilon must lie in [0, 0.1]");
    if (grid.cells < 1 || !(grid.r_max > 1.0)) throw ConfigError("grid must have cells and extend past r = 1");
    if (grid.cells < 200.0 * grid.r_max * (1.0 - 1e-12)) {
        std::ostringstream os;
        os << grid.cells << " cells on [0, " << grid.r_max << "] put fewer than 200 cells on [0, 1]";
        throw ResolutionTooLow(os.str());
    }
    RadialState s;
    s.grid = grid;
    s.eos = eos;
    s.rho.resize(grid.cells);
    s.m.resize(grid.cells);
    for (int i = 0; i < grid.cells; ++i) {
        const double a = grid.face(i), b = grid.face(i + 1);
        if (a >= 1.0 || epsilon == 0.0) {
            s.rho(i) = eos.rho_bar;
            s.m(i) = 0.0;
            continue;
        }
        const GaussRule g = gauss_legendre(8, a, std::min(b, 1.0));
        double mass = 0.0, mom = 0.0;
        for (int q = 0; q < g.nodes.size(); ++q) {
            const double r = g.nodes(q), w = g.weights(q) * r;
            const double rho = eos.rho_bar + epsilon * initial_density_profile(r);
            mass += w * (rho - eos.rho_bar);
            mom += w * rho * epsilon * initial_velocity_profile(r);
        }
        const double V = grid.volume(i);
        s.rho(i) = eos.rho_bar + mass / V;
        s.m(i) = mom / V;
    }
    return s;
}

MomentSample moment_sample(const RadialState& s)
{
    MomentSample out;
    out.t = s.t;
    const double pbar = s.eos.pressure(s.eos.rho_bar);
    for (int i = 0; i < s.grid.cells; ++i) {
        const double w = 2.0 * pi * s.grid.volume(i), r = s.grid.centre(i);
        const double u = s.velocity(i);
        out.M += w * s.m(i) * r;
        out.I += w * (s.rho(i) - s.eos.rho_bar) * r * r;
        out.kinetic += w * s.m(i) * u;
        out.pressure_excess += w * (s.eos.pressure(s.rho(i)) - pbar);
        out.mass_excess += w * (s.rho(i) - s.eos.rho_bar);
    }
    return out;
}

namespace {

constexpr int G = 2;   // ghost cells per side

double mc_slope(double qm, double q0, double qp)
{
    const double d1 = q0 - qm, d2 = qp - q0;
    if (d1 * d2 <= 0.0) return 0.0;
    const double s = std::min({2.0 * std::abs(d1), 2.0 * std::abs(d2), 0.5 * std::abs(d1 + d2)});
    return d1 > 0.0 ? s : -s;
}

struct Stepper {
    const RadialGrid& grid;
    const EulerParams& eos;
    int order;
    int workers;
    std::vector<double> rho_g, u_g;         // padded primitives
    std::vector<std::array<double, 2>> flux;   // r_face * F at faces 0..n

    Stepper(const RadialGrid& g, const EulerParams& e, int o, int w)
        : grid(g), eos(e), order(o), workers(w), rho_g(g.cells + 2 * G), u_g(g.cells + 2 * G), flux(g.cells + 1)
    {
    }

    std::array<double, 2> hll(double rL, double uL, double rR, double uR) const
    {
        const double pL = eos.pressure(rL), pR = eos.pressure(rR);
        const double cL = eos.sound_speed(rL), cR = eos.sound_speed(rR);
        const double SL = std::min(uL - cL, uR - cR), SR = std::max(uL + cL, uR + cR);
        const double mL = rL * uL, mR = rR * uR;
        const std::array<double, 2> FL{mL, mL * uL + pL}, FR{mR, mR * uR + pR};
        if (SL >= 0.0) return FL;
        if (SR <= 0.0) return FR;
        const std::array<double, 2> UL{rL, mL}, UR{rR, mR};
        std::array<double, 2> F;
        for (int k = 0; k < 2; ++k) F[k] = (SR * FL[k] - SL * FR[k] + SL * SR * (UR[k] - UL[k])) / (SR - SL);
        return F;
    }

    void rhs(const Eigen::VectorXd& rho, const Eigen::VectorXd& m, Eigen::VectorXd& drho, Eigen::VectorXd& dm)
    {
        const int n = grid.cells;
        for (int i = 0; i < n; ++i) {
            rho_g[G + i] = rho(i);
            u_g[G + i] = m(i) / rho(i);
        }
        for (int k = 0; k < G; ++k) {
            rho_g[G - 1 - k] = rho(k);
            u_g[G - 1 - k] = -m(k) / rho(k);
            rho_g[G + n + k] = eos.rho_bar;
            u_g[G + n + k] = 0.0;
        }
        const int chunks = std::max(1, std::min(workers, n + 1));
        parallel_for(chunks, workers, [&](int c) {
            const int lo = static_cast<int>(static_cast<long long>(n + 1) * c / chunks);
            const int hi = static_cast<int>(static_cast<long long>(n + 1) * (c + 1) / chunks);
            for (int f = lo; f < hi; ++f) {
                // face f sits between padded cells G + f - 1 and G + f
                const int a = G + f - 1, b = G + f;
                double rL = rho_g[a], uL = u_g[a], rR = rho_g[b], uR = u_g[b];
                if (order == 2) {
                    rL += 0.5 * mc_slope(rho_g[a - 1], rho_g[a], rho_g[a + 1]);
                    uL += 0.5 * mc_slope(u_g[a - 1], u_g[a], u_g[a + 1]);
                    rR -= 0.5 * mc_slope(rho_g[b - 1], rho_g[b], rho_g[b + 1]);
                    uR -= 0.5 * mc_slope(u_g[b - 1], u_g[b], u_g[b + 1]);
                }
                const auto F = hll(rL, uL, rR, uR);
                const double r = grid.face(f);
                flux[f] = {r * F[0], r * F[1]};
            }
        });
        for (int i = 0; i < n; ++i) {
            const double V = grid.volume(i);
            const double dr = grid.face(i + 1) - grid.face(i);
            drho(i) = -(flux[i + 1][0] - flux[i][0]) / V;
            dm(i) = (-(flux[i + 1][1] - flux[i][1]) + eos.pressure(rho(i)) * dr) / V;
        }
    }
};

double max_grad_u(const RadialState& s)
{
    double g = 0.0;
    for (int i = 0; i + 1 < s.grid.cells; ++i)
        g = std::max(g, std::abs(s.velocity(i + 1) - s.velocity(i)) / s.grid.dr());
    return g;
}

double max_wave_speed(const RadialState& s)
{
    double w = 0.0;
    for (int i = 0; i < s.grid.cells; ++i)
        w = std::max(w, std::abs(s.velocity(i)) + s.eos.sound_speed(s.rho(i)));
    return w;
}

void check_vacuum(const RadialState& s, double floor)
{
    for (int i = 0; i < s.grid.cells; ++i)
        if (!(s.rho(i) >= floor * s.eos.rho_bar)) {
            std::ostringstream os;
            os << "density " << s.rho(i) << " at r = " << s.grid.centre(i) << ", t = " << s.t;
            throw VacuumFormation(os.str());
        }
}

}  // namespace

Timeline fv_evolve(const RadialState& initial, double t_end, const FVOptions& opt)
{
    check_eos(initial.eos);
    if (!(opt.cfl > 0.0 && opt.cfl <= 0.5)) throw CFLViolation("cfl must lie in (0, 0.5]");
    if (opt.order != 1 && opt.order != 2) throw ConfigError("order must be 1 or 2");
    if (!(t_end >= 0.0) || !(opt.frame_dt > 0.0)) throw ConfigError("t_end must be >= 0 and frame_dt > 0");
    if (initial.rho.size() != initial.grid.cells || initial.m.size() != initial.grid.cells)
        throw ConfigError("state size does not match the grid");
    const double reach = 1.0 + initial.eos.sigma() * t_end;
    if (initial.grid.r_max < reach + 0.25)
        throw ConfigError("outer boundary closer than 0.25 to the front at t_end");
    check_vacuum(initial, opt.vacuum_floor);

    Timeline tl;
    tl.frame_dt = opt.frame_dt;
    RadialState s = initial;
    s.t = 0.0;
    tl.frames.push_back(s);
    tl.samples.push_back(moment_sample(s));
    tl.initial_max_grad_u = max_grad_u(s);
    tl.max_grad_u = tl.initial_max_grad_u;

    Stepper st(s.grid, s.eos, opt.order, opt.workers);
    const int n = s.grid.cells;
    Eigen::VectorXd k_rho(n), k_m(n), r1(n), m1(n), r2(n), m2(n);
    const int frames = static_cast<int>(std::ceil(t_end / opt.frame_dt - 1e-9));
    for (int f = 1; f <= frames; ++f) {
        const double t_frame = std::min(t_end, f * opt.frame_dt);
        while (s.t < t_frame) {
            // equal steps up to the frame time
            const double dt_cfl = opt.cfl * s.grid.dr() / max_wave_speed(s);
            const double left = t_frame - s.t;
            const int pieces = std::max(1, static_cast<int>(std::ceil(left / dt_cfl - 1e-12)));
            const double dt = pieces == 1 ? left : left / pieces;
            if (opt.order == 1) {
                st.rhs(s.rho, s.m, k_rho, k_m);
                s.rho += dt * k_rho;
                s.m += dt * k_m;
            } else {
                st.rhs(s.rho, s.m, k_rho, k_m);
                r1 = s.rho + dt * k_rho;
                m1 = s.m + dt * k_m;
                st.rhs(r1, m1, k_rho, k_m);
                r2 = 0.75 * s.rho + 0.25 * (r1 + dt * k_rho);
                m2 = 0.75 * s.m + 0.25 * (m1 + dt * k_m);
                st.rhs(r2, m2, k_rho, k_m);
                s.rho = s.rho / 3.0 + (2.0 / 3.0) * (r2 + dt * k_rho);
                s.m = s.m / 3.0 + (2.0 / 3.0) * (m2 + dt * k_m);
            }
            s.t = pieces == 1 ? t_frame : s.t + dt;
            ++tl.steps;
            check_vacuum(s, opt.vacuum_floor);
            tl.max_grad_u = std::max(tl.max_grad_u, max_grad_u(s));
            if (tl.initial_max_grad_u > 0.0 && tl.max_grad_u > opt.shock_factor * tl.initial_max_grad_u) {
                std::ostringstream os;
                os << "max |d_r u| = " << tl.max_grad_u << " at t = " << s.t << ", initially "
                   << tl.initial_max_grad_u;
                throw ShockSuspected(os.str());
            }
            tl.samples.push_back(moment_sample(s));
        }
        tl.frames.push_back(s);
    }
    return tl;
}

FiniteSpeedReport finite_speed_check(const Timeline& tl, double sigma, double tol, double margin)
{
    FiniteSpeedReport rep;
    for (const auto& s : tl.frames) {
        const double edge = 1.0 + margin * sigma * s.t;
        for (int i = 0; i < s.grid.cells; ++i) {
            if (s.grid.face(i) < edge) continue;
            const double v = std::abs(s.rho(i) - s.eos.rho_bar) + std::abs(s.velocity(i));
            if (v > rep.violation) {
                rep.violation = v;
                rep.t_at = s.t;
                rep.r_at = s.grid.centre(i);
            }
        }
    }
    rep.pass = rep.violation <= tol;
    return rep;
}

MomentReport moment_diagnostics(const Timeline& tl)
{
    MomentReport rep;
    const auto& S = tl.samples;
    if (S.empty()) return rep;
    const double mass0 = S.front().mass_excess;
    for (const auto& s : S) {
        rep.max_abs_M = std::max(rep.max_abs_M, std::abs(s.M));
        rep.mass_drift = std::max(rep.mass_drift, std::abs(s.mass_excess - mass0));
    }
    rep.mass_drift /= std::max(std::abs(mass0), 1e-300);
    rep.min_dM_dt = S.size() >= 3 ? std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t k = 1; k + 1 < S.size(); ++k) {
        const double h1 = S[k].t - S[k - 1].t, h2 = S[k + 1].t - S[k].t;
        auto d = [&](double fm, double f0, double fp) {
            return -h2 / (h1 * (h1 + h2)) * fm + (h2 - h1) / (h1 * h2) * f0 + h1 / (h2 * (h1 + h2)) * fp;
        };
        MomentRecord r;
        r.sample = S[k];
        r.dI_dt = d(S[k - 1].I, S[k].I, S[k + 1].I);
        r.dM_dt = d(S[k - 1].M, S[k].M, S[k + 1].M);
        rep.inertia_residual = std::max(rep.inertia_residual, std::abs(r.dI_dt - 2.0 * S[k].M));
        rep.virial_residual =
            std::max(rep.virial_residual, std::abs(r.dM_dt - (S[k].kinetic + 2.0 * S[k].pressure_excess)));
        rep.min_dM_dt = std::min(rep.min_dM_dt, r.dM_dt);
        rep.records.push_back(r);
    }
    rep.monotone = rep.min_dM_dt >= -1e-8 * rep.max_abs_M;
    return rep;
}

double frame_velocity(const RadialState& s, double r)
{
    const double dr = s.grid.dr();
    const int n = s.grid.cells;
    if (r <= 0.0) return 0.0;
    const double x = r / dr - 0.5;   // position in centre units
    if (x < 0.0) return s.velocity(0) * (r / s.grid.centre(0));
    const int i = static_cast<int>(std::floor(x));
    if (i >= n - 1) return s.velocity(n - 1);
    const double th = x - i;
    return (1.0 - th) * s.velocity(i) + th * s.velocity(i + 1);
}

std::vector<TraceResult> trace_and_detect(const Timeline& tl, const std::vector<double>& labels, double tol_floor,
                                          double tol_move, int substeps)
{
    if (tl.frames.size() < 2) throw ConfigError("trace needs at least two frames");
    if (substeps < 1) throw ConfigError("substeps must be positive");
    const double sigma = tl.frames.front().eos.sigma();
    std::vector<TraceResult> out;
    for (double a : labels) {
        if (!(a >= 0.0)) throw ConfigError("labels are radii, >= 0");
        TraceResult tr;
        tr.label = a;
        tr.causality_floor = (a - 1.0) / sigma - tl.frame_dt;
        double X = a;
        for (std::size_t k = 0; k < tl.frames.size(); ++k) {
            const auto& F = tl.frames[k];
            tr.times.push_back(F.t);
            tr.radius.push_back(X);
            tr.speed.push_back(std::abs(frame_velocity(F, X)));
            if (k + 1 == tl.frames.size()) break;
            const auto& G1 = tl.frames[k + 1];
            const double T = G1.t - F.t, h = T / substeps;
            auto u = [&](double r, double tau) {
                const double th = tau / T;
                return (1.0 - th) * frame_velocity(F, r) + th * frame_velocity(G1, r);
            };
            for (int j = 0; j < substeps; ++j) {
                const double tau = j * h;
                const double k1 = u(X, tau), k2 = u(X + 0.5 * h * k1, tau + 0.5 * h),
                             k3 = u(X + 0.5 * h * k2, tau + 0.5 * h), k4 = u(X + h * k3, tau + h);
                X += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        tr.t0 = flat_then_move_detect(tr.times, tr.speed, tol_floor, tol_move);
        out.push_back(std::move(tr));
    }
    return out;
}

RefinementStudy refinement_study(double epsilon, const std::vector<int>& cells, double t_end, const EulerParams& eos,
                                 double r_max, const FVOptions& options)
{
    if (cells.size() < 2) throw ConfigError("refinement study needs at least two resolutions");
    for (std::size_t i = 1; i < cells.size(); ++i)
        if (cells[i] != 2 * cells[i - 1]) throw ConfigError("resolutions must double");
    const int ref_cells = 2 * cells.back();
    const Timeline ref = fv_evolve(paper_initial_data(epsilon, RadialGrid{ref_cells, r_max}, eos), t_end, options);
    const RadialState& R = ref.frames.back();

    RefinementStudy st;
    for (int n : cells) {
        const Timeline tl = fv_evolve(paper_initial_data(epsilon, RadialGrid{n, r_max}, eos), t_end, options);
        const RadialState& s = tl.frames.back();
        RefinementLevel lv;
        lv.cells = n;
        lv.inertia_residual = moment_diagnostics(tl).inertia_residual;
        const int f = ref_cells / n;
        for (int i = 0; i < n; ++i) {
            double mass = 0.0;
            for (int j = 0; j < f; ++j) mass += R.rho(i * f + j) * R.grid.volume(i * f + j);
            const double V = s.grid.volume(i);
            lv.l1_error += 2.0 * pi * V * std::abs(s.rho(i) - mass / V);
        }
        st.levels.push_back(lv);
    }
    for (std::size_t i = 1; i < st.levels.size(); ++i) {
        st.inertia_orders.push_back(std::log2(st.levels[i - 1].inertia_residual / st.levels[i].inertia_residual));
        st.l1_orders.push_back(std::log2(st.levels[i - 1].l1_error / st.levels[i].l1_error));
    }
    return st;
}

}  // namespace lagrangian
