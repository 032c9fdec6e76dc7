#pragma once

#include "lagrangian/analyticity.hpp"
#include "lagrangian/picard.hpp"
#include "lagrangian/trajectory.hpp"

#include <array>
#include <vector>

namespace lagrangian {

// Triangulated patch. Cells live in a parameter plane; disc and ellipse
// patches use the exact polar map p = (r, theta) -> c + (a r cos, b r sin),
// polygons use the identity map.
class Patch {
public:
    struct Cell {
        std::array<int, 3> nodes;              // label indices of the vertices
        std::array<Eigen::Vector2d, 3> param;  // vertex parameter coordinates
    };

    static Patch disc(double R, int resolution, const Eigen::Vector2d& center = Eigen::Vector2d::Zero());
    static Patch ellipse(double a, double b, int resolution,
                         const Eigen::Vector2d& center = Eigen::Vector2d::Zero());
    static Patch polygon(std::vector<Eigen::Vector2d> boundary, int resolution);

    const RealCloud<2>& nodes() const { return nodes_; }
    int node_count() const { return static_cast<int>(nodes_.cols()); }
    const std::vector<Cell>& cells() const { return cells_; }
    double area() const { return area_; }
    double quadrature_area() const;
    const std::vector<Eigen::Vector2d>& boundary() const { return boundary_; }
    bool polar() const { return polar_; }

    Eigen::Vector2d physical(const Eigen::Vector2d& p) const;
    Eigen::Matrix2d jacobian(const Eigen::Vector2d& p) const;
    // Polar patches: label mapped onto the unit disc (before the polar split).
    Eigen::Vector2d unit_coordinates(const Eigen::Vector2d& x) const;

    // Label-space centroid and diameter per cell, used by the near-cell test.
    const RealCloud<2>& cell_centroids() const { return centroids_; }
    const Eigen::VectorXd& cell_diameters() const { return diameters_; }

private:
    void finish();

    bool polar_ = false;
    double a_ = 1.0, b_ = 1.0;
    Eigen::Vector2d center_ = Eigen::Vector2d::Zero();
    RealCloud<2> nodes_;
    std::vector<Cell> cells_;
    std::vector<Eigen::Vector2d> boundary_;
    double area_ = 0.0;
    RealCloud<2> centroids_;
    Eigen::VectorXd diameters_;
};

// Quadrature plan for a fixed set of target labels. Cells near a target get
// target-specific points (a polar sweep about the target when it lies within
// about one cell, adaptive 4-way subdivision otherwise), chosen once on the
// identity map and reused for every X.
class PatchOperator {
public:
    struct Point {
        int cell;
        double l1, l2;          // barycentric weights of vertices 1 and 2
        Eigen::Vector2d beta;   // reference position
        double w;
    };

    PatchOperator(const Patch& patch, const RealCloud<2>& target_labels);

    template <typename S>
    Eigen::Matrix<S, 2, Eigen::Dynamic> apply(const Eigen::Matrix<S, 2, Eigen::Dynamic>& node_values,
                                              const Eigen::Matrix<S, 2, Eigen::Dynamic>& target_values,
                                              int workers = 1) const;

    std::size_t special_point_count() const { return special_.size(); }

private:
    const Patch* patch_;
    std::vector<Point> regular_;                  // 3 per cell
    std::vector<Point> special_;
    std::vector<std::size_t> special_offset_;     // per target range into special_
    std::vector<std::vector<int>> special_cells_; // sorted, excluded from the regular sum
};

// Velocity F(X)(alpha) = int_Omega K(X(alpha) - X(beta)) d beta at each
// target. X between mesh nodes is beta plus the P1 interpolant of the nodal
// displacement X - Id. node_values holds X at the patch nodes.
template <typename S>
Eigen::Matrix<S, 2, Eigen::Dynamic> patch_velocities(const Patch& patch,
                                                     const Eigen::Matrix<S, 2, Eigen::Dynamic>& node_values,
                                                     const Eigen::Matrix<S, 2, Eigen::Dynamic>& target_values,
                                                     const RealCloud<2>& target_labels,
                                                     int workers = 1);

// Single label with X given at the nodes.
ComplexPoint2 patch_velocity(const Patch& patch, const TrajectoryField<2>& X,
                             const Eigen::Vector2d& alpha, const ComplexPoint2& X_alpha);

// Labels = patch nodes followed by probes; F acts on the whole column set.
struct PatchSystem {
    RealCloud<2> labels;
    int node_count = 0;
    FieldOperator<2> F;
};
PatchSystem make_patch_system(const Patch& patch, const RealCloud<2>& probes, int workers = 1);

// Sum over quadrature points of det(dX_h/d beta) for a real field on the nodes.
double deformed_area(const Patch& patch, const RealCloud<2>& node_positions);

struct ProbeResult {
    Eigen::Vector2d label;
    TaylorSeries series;
    RadiusEstimate radius;
    double worst_branch_ratio = 1.0;
};

struct PatchFlowOptions {
    double rho = 0.05;
    int M = 32;
    int N = 10;
    int steps = 8;
    double delta = default_delta_2d;
    int workers = 1;
};

std::vector<ProbeResult> patch_flow_experiment(const Patch& patch, const RealCloud<2>& probes,
                                               const PatchFlowOptions& options);

struct RotationFit {
    double rate = 0.0;
    bool degenerate = false;
    std::vector<double> times;
    std::vector<double> angles;
    double max_area_drift = 0.0;   // relative, over the evolution
};

RotationFit kirchhoff_rotation_rate(double a, double b, double t_end, int resolution,
                                    double dt = 0.05, int workers = 1);

}  // namespace lagrangian
