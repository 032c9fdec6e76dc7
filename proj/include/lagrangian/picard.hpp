#pragma once

#include "lagrangian/trajectory.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace lagrangian {

// F maps current positions (one column per label) to dX/dt for first-order
// systems, or to d^2X/dt^2 for second-order (X, V) systems.
template <int Dim>
using FieldOperator = std::function<ComplexCloud<Dim>(const ComplexCloud<Dim>&)>;

struct BallOptions {
    double delta = std::numeric_limits<double>::infinity();
    bool check_branch = true;
    std::int64_t pair_budget = default_pair_budget;
};

inline constexpr double default_delta_2d = 0.25;
inline constexpr double default_delta_3d = 0.1;

// Throws BallExit / BranchCutViolation when the field leaves the safe ball.
template <int Dim>
void validate_field(const TrajectoryField<Dim>& field, const BallOptions& ball);

struct PicardOptions {
    int max_iters = 80;
    double tol = 1e-12;
    int initial_segments = 1;
    int max_segments = 64;
    BallOptions ball;
};

struct PicardTrace {
    std::vector<double> differences;  // sup |X_{k+1} - X_k| of the accepted solve
    int iterations = 0;
    int segments = 0;
    double contraction_ratio = 0.0;   // largest successive-difference ratio observed
};

template <int Dim>
struct PicardResult {
    TrajectoryField<Dim> field;
    PicardTrace trace;
};

// Fixed point of X(t) = Id + int_0^t F(X(z)) dz along the straight segment
// z = s t, s in [0, 1], discretized by composite 8-point Gauss-Legendre.
template <int Dim>
PicardResult<Dim> picard_solve(const FieldOperator<Dim>& F, const TrajectoryField<Dim>& initial,
                               cplx t, const PicardOptions& options = {});

// Halve r from r_start until picard_solve at t = r e^{i theta} contracts.
template <int Dim>
double find_contraction_radius(const FieldOperator<Dim>& F, const TrajectoryField<Dim>& initial,
                               double r_start, double theta, const PicardOptions& options = {},
                               int max_halvings = 12);

template <int Dim>
struct RaySolution {
    double theta = 0.0;
    std::vector<double> s;
    std::vector<TrajectoryField<Dim>> fields;
};

// Classical RK4 for dX/ds = e^{i theta} F(X) on s in [0, s_max].
template <int Dim>
RaySolution<Dim> rk_ray_integrate(const FieldOperator<Dim>& F, const TrajectoryField<Dim>& initial,
                                  double theta, double s_max, int steps,
                                  const BallOptions& ball = {});

// Endpoints of M rays at theta_m = 2 pi m / M, ordered by m.
template <int Dim>
std::vector<TrajectoryField<Dim>> circle_samples(const FieldOperator<Dim>& F,
                                                 const TrajectoryField<Dim>& initial, double rho,
                                                 int M, int steps, const BallOptions& ball = {},
                                                 int workers = 1);

}  // namespace lagrangian
