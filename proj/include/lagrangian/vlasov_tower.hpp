#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <Eigen/Dense>

#include <array>
#include <compare>
#include <map>
#include <utility>
#include <vector>

namespace lagrangian {

using Rational = boost::multiprecision::cpp_rational;

// gamma = (gamma_x, gamma_t) for derivatives d^gamma_x d^gamma_t on R^2 x R.
struct MultiIndex {
    std::array<int, 2> x{0, 0};
    int t = 0;

    int spatial() const { return x[0] + x[1]; }
    int order() const { return x[0] + x[1] + t; }
    auto operator<=>(const MultiIndex&) const = default;
};

// All multi-indices with order() <= s, in ascending order.
std::vector<MultiIndex> multi_indices_up_to(int s);

// One summand b * prod_i d^{k_i} a_{j_i} * d^gamma h of the chain rule for
// d^N/dt^N h(a(t), t). Atoms are sorted by (k, j); j is 1 or 2.
struct FdBTerm {
    MultiIndex gamma;
    std::vector<int> k;
    std::vector<int> j;
    long long b = 0;
};

std::vector<FdBTerm> faadibruno_terms(int N);

// Sparse polynomial in (xi_1, xi_2) with exact rational coefficients.
struct PolyXi {
    std::map<std::pair<int, int>, Rational> terms;   // (i, j) -> coefficient of xi1^i xi2^j

    Rational coefficient(int i, int j) const;
    bool is_zero() const { return terms.empty(); }
    // Degree shared by every monomial, -1 for the zero polynomial and -2 if mixed.
    int homogeneous_degree() const;
    double operator()(const Eigen::Vector2d& xi) const;
    void add(int i, int j, const Rational& c);
};

// d^m/dx^m exp(-x^2) at 0.
Rational gaussian_derivative_at_zero(int m);

PolyXi w_gamma(const MultiIndex& gamma);
PolyXi p_N(int N);

// Exact value coefficient * pi.
struct PiMultiple {
    Rational coefficient;
    double value() const;
};

// Integral of poly(xi) * A exp(-c |xi - v|^2) over R^2. The double
// arguments are taken as the exact rationals they represent.
PiMultiple gaussian_poly_integral(const PolyXi& poly, double A, double c, const Eigen::Vector2d& v);

struct GaussianParams {
    double A = 1.0;
    double c = 2.0;
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
};

// Odd N: A = 1, c = 2 and the first lattice v in {-2, -1.5, ..., 2}^2
// (lexicographic) with |integral of p_N g| >= 1e-3. Even N: (1, 2, 0).
GaussianParams choose_gaussian_params(int N);

struct IdentityCheck {
    double numeric = 0.0;            // polar quadrature of the bump integral
    double analytic = 0.0;           // delta^{1-N} w_gamma(xi)
    double identity_constant = 0.0;  // (-1)^N / 4, exact ratio numeric / analytic
    double expected = 0.0;           // identity_constant * analytic
    double relative_error = 0.0;     // |numeric - expected| / max(|expected|, floor)
};

// integral of K^1(y) (xi . grad)^{gamma_t} d^{gamma_x} [(|y|^2/delta^2 - 1) exp(-|y|^2/delta^2)] dy
IdentityCheck scaled_bump_identity_check(const MultiIndex& gamma, double delta, const Eigen::Vector2d& xi);

// P(x) exp(-a|x|^2) * A exp(-b|v - v0|^2)
struct MixtureComponent {
    std::map<std::pair<int, int>, double> prefactor;   // (i, j) -> coefficient of x1^i x2^j
    double a = 1.0;
    double A = 1.0;
    double b = 1.0;
    Eigen::Vector2d v0 = Eigen::Vector2d::Zero();

    double operator()(const Eigen::Vector2d& x, const Eigen::Vector2d& v) const;
};

// exp(-|x|^2 - |v|^2) (when base is set) plus the components.
struct GaussianMixtureData {
    bool base = true;
    std::vector<MixtureComponent> components;

    double operator()(const Eigen::Vector2d& x, const Eigen::Vector2d& v) const;
    std::vector<MixtureComponent> all_components() const;
};

struct PerturbationSpec {
    int N = 2;
    double delta = 0.5;
    double epsilon = 0.0;
    GaussianParams g;
};

// epsilon * F_{delta,N} = epsilon delta^{N-2} (|x|^2/delta^2 - 1) exp(-|x|^2/delta^2) g_N(v)
MixtureComponent scaled_bump(const PerturbationSpec& spec);
GaussianMixtureData perturbed(const GaussianMixtureData& f0, const PerturbationSpec& spec);

struct PositivityReport {
    double min_value = 0.0;
    Eigen::Vector4d argmin = Eigen::Vector4d::Zero();
    long samples = 0;
    bool positive = false;
};

// Dense sampling of f0 on [-3, 3]^2 x [-4, 4]^2; a check, not a proof.
PositivityReport check_positivity(const GaussianMixtureData& f0, int per_axis = 25);

// E(x, 0) of f0 in closed form.
Eigen::Vector2d static_field(const GaussianMixtureData& f0, const Eigen::Vector2d& x);

struct TowerOptions {
    int panel_points = 8;      // Gauss points per radial panel
    int angular_points = 32;   // trapezoid points at the quadrature centre scale
    double tolerance = 1e-6;   // coarse/fine agreement, relative to max(1, |value|)
    int workers = 1;
    // Radial data: the order-2 nonlinear field is -E rho_0 in closed form
    // instead of a nested quadrature.
    bool radial_shortcut = true;
};

using ETower = std::map<MultiIndex, Eigen::Vector2d>;

// d^gamma_{x,t} E(x, 0) for order(gamma) <= s_max. The part linear in f0 is
// closed form; terms carrying E factors go through polar quadrature about x.
ETower e_derivative_tower(const GaussianMixtureData& f0, const Eigen::Vector2d& x, int s_max,
                          const TowerOptions& options = {});

// Single entry, computed on its own.
Eigen::Vector2d e_derivative(const GaussianMixtureData& f0, const Eigen::Vector2d& x, const MultiIndex& gamma,
                             const TowerOptions& options = {});

// d^n V(zeta, 0)/dt^n for n = 0..n_max, zeta = (q, p).
std::vector<Eigen::Vector2d> v_derivative_tower(const GaussianMixtureData& f0, const Eigen::Vector2d& q,
                                                const Eigen::Vector2d& p, int n_max,
                                                const TowerOptions& options = {});

// Same, from a precomputed E tower at q.
std::vector<Eigen::Vector2d> v_derivative_tower(const ETower& e_at_q, const Eigen::Vector2d& q,
                                                const Eigen::Vector2d& p, int n_max);

struct DeltaScalingResult {
    int N = 3;
    double epsilon = 0.0;
    GaussianParams g;
    std::vector<double> deltas;
    std::vector<double> values;      // d^{N+1} V^1 (0, e1, 0) with the bump
    double baseline = 0.0;           // same derivative at epsilon = 0
    double raw_slope = 0.0;          // log|value| against log delta
    double slope = 0.0;              // log|value - baseline| against log delta
    double intercept = 0.0;          // c in (value - baseline) ~ c / delta + d
    double lambda = 0.0;             // integral of p_N g_N
    double predicted_intercept = 0.0;   // epsilon lambda / 4
    double intercept_relative_error = 0.0;
};

DeltaScalingResult delta_scaling_experiment(const GaussianMixtureData& f0, int N, const std::vector<double>& deltas,
                                            double epsilon, const TowerOptions& options = {});

struct SequenceCalibration {
    double epsilon_start = 1.0;
    int max_epsilon_halvings = 12;
    double delta_start = 0.5;
    double delta_factor = 0.8;
    double delta_floor = 0.05;
    double even_delta = 0.5;
    TowerOptions tower;
};

struct StageReport {
    PerturbationSpec spec;
    std::vector<Eigen::Vector2d> before;   // d^m V(0, e1, 0), m = 0..N+1
    std::vector<Eigen::Vector2d> after;
    double low_order_shift = 0.0;          // max over m <= N and both components
    double shift_cap = 0.0;                // 2^-N
    double target = 0.0;                   // (N+1)^{N+1}, odd stages
    double achieved = 0.0;                 // |d^{N+1} V^1| after the stage
    bool target_met = true;
    int epsilon_halvings = 0;
    PositivityReport positivity;
};

struct SequenceResult {
    GaussianMixtureData f0;
    std::vector<PerturbationSpec> specs;
    std::vector<StageReport> stages;
    std::vector<Eigen::Vector2d> base_tower;   // orders 0..n_max+1 of the base data
    std::vector<Eigen::Vector2d> final_tower;
};

// Stages n = 2..n_max on top of exp(-|x|^2 - |v|^2).
SequenceResult build_sequence(int n_max, const SequenceCalibration& calibration = {});

struct PhaseVolumeReport {
    double max_deviation = 0.0;   // max |det d(X, V)/d zeta - 1|
    int samples = 0;
};

// Trajectories in the frozen field E(x, 0), RK4, central-difference Jacobian.
PhaseVolumeReport phase_volume_check(const GaussianMixtureData& f0, const std::vector<Eigen::Vector4d>& zetas,
                                     double t_end, int steps, double h = 1e-4);

}  // namespace lagrangian
