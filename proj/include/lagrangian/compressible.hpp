#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace lagrangian {

// p = A rho^gamma around the constant state (rho_bar, 0).
struct EulerParams {
    double rho_bar = 1.0;
    double A = 1.0;
    double gamma = 2.0;

    double pressure(double rho) const;
    double sound_speed(double rho) const;
    // sqrt(p'(rho_bar)), the speed of the front.
    double sigma() const;
};

// Uniform cells on [0, r_max].
struct RadialGrid {
    int cells = 800;
    double r_max = 4.0;

    double dr() const { return r_max / cells; }
    double face(int i) const { return i * dr(); }
    double centre(int i) const { return (i + 0.5) * dr(); }
    // Integral of r dr over the cell; the 2D area is 2 pi times this.
    double volume(int i) const;
};

struct RadialState {
    RadialGrid grid;
    EulerParams eos;
    Eigen::VectorXd rho;   // cell averages
    Eigen::VectorXd m;     // radial momentum rho u_r
    double t = 0.0;

    double velocity(int i) const { return m(i) / rho(i); }
};

// Pointwise initial profiles without the epsilon factor: rho_tilde and the radial u_tilde.
double initial_density_profile(double r);
double initial_velocity_profile(double r);

// Cell averages (Gauss-Legendre in r dr) of rho_bar + eps rho_tilde and eps rho_0 u_tilde.
RadialState paper_initial_data(double epsilon, const RadialGrid& grid, const EulerParams& eos = {});

struct FVOptions {
    double cfl = 0.4;
    int order = 2;              // 1: piecewise constant + forward Euler, 2: MC-limited MUSCL + SSP-RK3
    double frame_dt = 0.01;
    double vacuum_floor = 1e-6; // relative to rho_bar
    double shock_factor = 50.0; // abort once max |d_r u| grows by this factor
    int workers = 1;
};

// Integrals over the plane, each with the cell rule 2 pi volume(i) g(centre(i)).
struct MomentSample {
    double t = 0.0;
    double M = 0.0;                // int rho u . x
    double I = 0.0;                // int (rho - rho_bar) |x|^2
    double kinetic = 0.0;          // int rho |u|^2
    double pressure_excess = 0.0;  // int (p(rho) - p(rho_bar))
    double mass_excess = 0.0;      // int (rho - rho_bar)
};

MomentSample moment_sample(const RadialState& s);

struct Timeline {
    std::vector<RadialState> frames;    // t = 0, frame_dt, 2 frame_dt, ..., t_end
    std::vector<MomentSample> samples;  // after every time step, t = 0 first
    double frame_dt = 0.0;
    int steps = 0;
    double initial_max_grad_u = 0.0;
    double max_grad_u = 0.0;
};

// Area-weighted radial form: d_t(r rho) + d_r(r m) = 0, d_t(r m) + d_r(r(m u + p)) = p.
// HLL fluxes, reflecting ghost at r = 0, constant state outside.
Timeline fv_evolve(const RadialState& initial, double t_end, const FVOptions& options = {});

struct FiniteSpeedReport {
    double violation = 0.0;   // max |rho - rho_bar| + |u| over cells inside D(t)
    double t_at = 0.0;
    double r_at = 0.0;
    bool pass = false;
};

// D(t) = {r >= 1 + margin sigma t}; a cell counts once its inner face lies in D(t).
FiniteSpeedReport finite_speed_check(const Timeline& timeline, double sigma, double tol, double margin = 1.0);

struct MomentRecord {
    MomentSample sample;
    double dI_dt = 0.0;   // centred differences over the step samples
    double dM_dt = 0.0;
};

struct MomentReport {
    std::vector<MomentRecord> records;   // interior step samples
    double inertia_residual = 0.0;       // max |dI/dt - 2 M|
    double virial_residual = 0.0;        // max |dM/dt - (kinetic + 2 pressure_excess)|
    double min_dM_dt = 0.0;
    double max_abs_M = 0.0;
    bool monotone = false;               // min dM/dt >= -1e-8 max |M|
    double mass_drift = 0.0;             // max |mass_excess - mass_excess(0)| / max(|mass_excess(0)|, tiny)
};

MomentReport moment_diagnostics(const Timeline& timeline);

struct TraceResult {
    double label = 0.0;
    std::vector<double> times;    // frame times
    std::vector<double> radius;   // X at the frame times
    std::vector<double> speed;    // |u(X, t)| at the frame times
    std::optional<double> t0;
    double causality_floor = 0.0; // (|alpha| - 1)/sigma - frame_dt
};

// dX/dt = u(X, t) with u linear in r between centres and linear in t between
// frames; the speed series goes to flat_then_move_detect.
std::vector<TraceResult> trace_and_detect(const Timeline& timeline, const std::vector<double>& labels,
                                          double tol_floor = 1e-8, double tol_move = 1e-6,
                                          int substeps = 8);

// Piecewise-linear radial velocity of a frame.
double frame_velocity(const RadialState& s, double r);

struct RefinementLevel {
    int cells = 0;
    double inertia_residual = 0.0;
    double l1_error = 0.0;   // against the finest level, density at t_end
};

struct RefinementStudy {
    std::vector<RefinementLevel> levels;
    std::vector<double> inertia_orders;   // log2 ratios of consecutive residuals
    std::vector<double> l1_orders;
};

// Resolutions are successive doublings; the finest level doubles once more
// as the reference for the L1 errors.
RefinementStudy refinement_study(double epsilon, const std::vector<int>& cells, double t_end,
                                 const EulerParams& eos = {}, double r_max = 4.0,
                                 const FVOptions& options = {});

}  // namespace lagrangian
