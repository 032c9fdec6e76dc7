#pragma once

#include <Eigen/Dense>
#include <array>

namespace lagrangian {

struct GaussRule {
    Eigen::VectorXd nodes;    // on [-1, 1], ascending
    Eigen::VectorXd weights;
};

// Golub-Welsch: eigen-decomposition of the Legendre Jacobi matrix.
GaussRule gauss_legendre(int n);

// Same rule mapped to [a, b].
GaussRule gauss_legendre(int n, double a, double b);

// W(q, j) = integral from -1 to node q of the j-th Lagrange basis polynomial
// through the Gauss nodes. Multiplying nodal values by W integrates the
// interpolant from the left end to every node.
Eigen::MatrixXd gauss_integration_matrix(const GaussRule& rule);

// Symmetric 3-point rule on the reference triangle (0,0),(1,0),(0,1),
// exact for degree 2. Weights sum to 1/2.
struct TriangleRule {
    std::array<Eigen::Vector2d, 3> points;
    std::array<double, 3> weights;
};
const TriangleRule& triangle_rule3();

}  // namespace lagrangian
