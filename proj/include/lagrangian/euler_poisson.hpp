#pragma once

#include "lagrangian/analyticity.hpp"
#include "lagrangian/picard.hpp"
#include "lagrangian/trajectory.hpp"

#include <string>
#include <vector>

namespace lagrangian {

enum class DensityProfile {
    RadialBump,         // amplitude (1 - r^2/R^2)^4 on r < R
    TruncatedGaussian,  // amplitude exp(-r^2 / (2 sigma^2)) on r < R
    ShellBump,          // amplitude (1 - ((r - shell_center)/shell_width)^2)^4
};

DensityProfile density_profile_from_name(const std::string& name);
std::string density_profile_name(DensityProfile profile);

struct DensitySpec {
    DensityProfile profile = DensityProfile::RadialBump;
    double amplitude = 1.0;
    double radius = 1.0;        // support radius for the bump and the Gaussian
    double sigma = 0.4;
    double shell_center = 1.0;
    double shell_width = 0.3;
    double spacing = 0.1;       // Cartesian grid step, nodes at integer multiples

    double density(double r) const;
    double density_slope(double r) const;   // d rho / dr
    double support_radius() const;
    double inner_radius() const;   // density vanishes for r <= inner_radius
    // Continuum mass inside radius r.
    double enclosed_mass(double r) const;
};

struct DensityCloud {
    RealCloud<3> nodes;
    Eigen::VectorXd weights;            // rho_0 * spacing^3
    Eigen::VectorXd density;            // rho_0 at the nodes
    RealCloud<3> self_correction;       // lattice correction for the dropped self term
    Eigen::Matrix3Xi indices;           // integer grid coordinates
    double spacing = 0.0;
    double total_mass = 0.0;
    double support_radius = 0.0;

    Eigen::Index size() const { return nodes.cols(); }
};

// Grid points with strictly positive density.
DensityCloud make_density_cloud(const DensitySpec& spec);

// Node accelerations sum_{j != i} w_j k3d(X_i - X_j) (q = +1, repulsive),
// plus the fixed lattice correction for the dropped self term.
template <typename S>
Eigen::Matrix<S, 3, Eigen::Dynamic> ep_accelerations(const DensityCloud& cloud,
                                                     const Eigen::Matrix<S, 3, Eigen::Dynamic>& X,
                                                     int workers = 1);

// Field at one label. X holds the node values; a node whose label equals
// alpha is dropped from the sum and its lattice correction added.
ComplexPoint3 ep_field(const DensityCloud& cloud, const TrajectoryField<3>& X,
                       const Eigen::Vector3d& alpha, const ComplexPoint3& X_alpha);

// Second-order operator on the node cloud, real fast path for real input.
// The cloud is held by reference.
FieldOperator<3> ep_operator(const DensityCloud& cloud, int workers = 1);

// Real-time (X, V) on [0, t_end]; t_end < 0 runs backwards.
RaySolution<3> ep_evolve(const DensityCloud& cloud, const RealCloud<3>& u0, double t_end, int steps,
                         const BallOptions& ball = {});

// Endpoints of M rays on the complex circle |t| = rho.
std::vector<TrajectoryField<3>> ep_evolve_circle(const DensityCloud& cloud, const RealCloud<3>& u0,
                                                 double rho, int M, int steps,
                                                 const BallOptions& ball = {}, int workers = 1);

struct EPProbeResult {
    int node = 0;
    TaylorSeries series;
    RadiusEstimate radius;
};

struct EPCircleResult {
    std::vector<EPProbeResult> probes;
    double worst_branch_ratio = 1.0;
};

// Taylor series of X at the chosen nodes from circle samples.
EPCircleResult ep_circle_experiment(const DensityCloud& cloud, const RealCloud<3>& u0,
                                    const std::vector<int>& probe_nodes, double rho, int M, int N,
                                    int steps = 8, const BallOptions& ball = {}, int workers = 1);

// Closest node to a point.
int nearest_node(const DensityCloud& cloud, const Eigen::Vector3d& x);

struct JacobianReport {
    double residual = 0.0;     // max |det grad X * m_cell - w| / w over stencil nodes
    double min_det = 0.0;
    double max_det = 0.0;
    int stencil_nodes = 0;
    double pushed_mass = 0.0;  // carried weights of the pushed-forward cloud
};

// Central-difference det grad X on the label grid and nearest-node mass
// deposition of the evolved cloud. m_cell is the deposited mass in the cell
// of X(alpha), so the residual is the density relation times cell volume.
JacobianReport jacobian_density_check(const DensityCloud& cloud, const RealCloud<3>& X);

// Radial shell ODE R'' = m_enc(r0) / (4 pi R^2), R(0) = r0, R'(0) = v0.
double shell_radius(double m_enclosed, double r0, double v0, double t, int steps = 2000);

}  // namespace lagrangian
