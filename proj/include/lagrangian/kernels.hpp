#pragma once

#include "lagrangian/trajectory.hpp"
#include "lagrangian/types.hpp"

#include <cstdint>
#include <vector>

namespace lagrangian {

// Complexified 2D Biot-Savart kernel (1/2pi)(-z2, z1)/(z1^2 + z2^2).
template <typename S>
Point<S, 2> k2d(const Point<S, 2>& z);

// d k2d_i / d z_j.
template <typename S>
Eigen::Matrix<S, 2, 2> k2d_jacobian(const Point<S, 2>& z);

// Complexified Newtonian field kernel z / (4pi s^{3/2}), s = z.z, principal branch.
template <typename S>
Point<S, 3> k3d(const Point<S, 3>& z);

template <typename S>
Eigen::Matrix<S, 3, 3> k3d_jacobian(const Point<S, 3>& z);

// Real 2D gradient-of-Newtonian kernel x / (2pi |x|^2).
RealPoint2 kvp(const RealPoint2& x);

inline double kernel_denominator_tol(double abs_z_squared) { return 1e-12 * (1.0 + abs_z_squared); }

struct KernelBoundReport {
    double constant = 0.0;              // max over samples of |d^g K| |b|^{|g|+dim-1}
    std::vector<double> radii;
    std::vector<double> per_radius;     // same maximum restricted to each radius
    double spread = 0.0;                // max/min of per_radius
    bool pass = false;
};

// gamma has `dimension` entries. M is dimension x dimension; samples are
// beta(I+M) with beta on log-spaced radii times a shared set of random
// directions.
KernelBoundReport kernel_bound_check(int dimension, const std::vector<int>& gamma,
                                     const Eigen::MatrixXd& M, int sample_count,
                                     std::uint64_t seed = 1);

// Partial derivative d^gamma of the real-argument kernel at x.
Eigen::VectorXd kernel_derivative(int dimension, const std::vector<int>& gamma,
                                  const Eigen::VectorXd& x);

struct NearIdentityCertificate {
    double delta = 0.0;
    double worst_ratio = 1.0;
    bool pass() const { return worst_ratio >= 0.5; }
};

template <int Dim>
NearIdentityCertificate branch_safety(const TrajectoryField<Dim>& field,
                                      std::int64_t pair_samples = default_pair_budget);

}  // namespace lagrangian
