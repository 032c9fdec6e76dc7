#pragma once

#include "lagrangian/types.hpp"

#include <optional>
#include <vector>

namespace lagrangian {

// Time-Taylor coefficients at one label. Row n holds c_n for every component.
struct TaylorSeries {
    cplx center = 0.0;
    Eigen::MatrixXcd coefficients;
    double sample_radius = 1.0;
    bool alias_risk = false;

    int order() const { return static_cast<int>(coefficients.rows()) - 1; }
    // |c_n| as the Euclidean norm over components.
    Eigen::VectorXd magnitudes() const { return coefficients.rowwise().norm(); }
};

// samples.row(m) is the trajectory value at t = rho e^{2 pi i m / M}.
TaylorSeries taylor_from_circle(const Eigen::MatrixXcd& samples, double rho, int N);

// Series with prescribed coefficients (one component), sample radius 1.
TaylorSeries taylor_series_from(const std::vector<cplx>& coefficients);

struct RadiusEstimate {
    double value = 0.0;
    bool infinite = false;
    int fit_first = 0;
    int fit_last = 0;
    double fit_residual = 0.0;
    double growth_exponent = 0.0;   // fitted algebraic prefactor n^k
};

// Fit log|c_n| = a + b n + k log n over [fit_first, fit_last]; radius = e^{-b}.
// fit_first < 0 selects the upper half of the usable orders.
RadiusEstimate radius_estimate(const TaylorSeries& series, int fit_first = -1, int fit_last = -1);

struct FactorialVerdict {
    bool non_analytic_signature = false;
    double slope = 0.0;
    bool dominates_power = false;   // every |d_n| >= n^n / 2
};

FactorialVerdict factorial_growth_test(const std::vector<int>& orders,
                                       const std::vector<double>& magnitudes);

// Time at the end of the initial flat run (speed <= tol_floor), provided the
// run covers at least 10% of the series and a later speed exceeds tol_move.
std::optional<double> flat_then_move_detect(const std::vector<double>& times,
                                            const std::vector<double>& speeds, double tol_floor,
                                            double tol_move);

}  // namespace lagrangian
