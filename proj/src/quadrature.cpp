#include "lagrangian/quadrature.hpp"

#include <cmath>

namespace lagrangian {

GaussRule gauss_legendre(int n)
{
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        double b = k / std::sqrt(4.0 * k * k - 1.0);
        jacobi(k, k - 1) = b;
        jacobi(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    GaussRule rule;
    rule.nodes = es.eigenvalues();
    rule.weights = 2.0 * es.eigenvectors().row(0).transpose().array().square();
    // symmetrize to kill eigen-solver noise
    for (int k = 0; k < n / 2; ++k) {
        double x = 0.5 * (rule.nodes(n - 1 - k) - rule.nodes(k));
        double w = 0.5 * (rule.weights(k) + rule.weights(n - 1 - k));
        rule.nodes(k) = -x;
        rule.nodes(n - 1 - k) = x;
        rule.weights(k) = rule.weights(n - 1 - k) = w;
    }
    if (n % 2) rule.nodes(n / 2) = 0.0;
    return rule;
}

GaussRule gauss_legendre(int n, double a, double b)
{
    GaussRule rule = gauss_legendre(n);
    double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    rule.nodes = (mid + half * rule.nodes.array()).matrix();
    rule.weights *= half;
    return rule;
}

namespace {

// Legendre values P_0..P_m at x.
Eigen::VectorXd legendre_values(double x, int m)
{
    Eigen::VectorXd p(m + 1);
    p(0) = 1.0;
    if (m >= 1) p(1) = x;
    for (int k = 1; k < m; ++k) p(k + 1) = ((2 * k + 1) * x * p(k) - k * p(k - 1)) / (k + 1);
    return p;
}

}  // namespace

Eigen::MatrixXd gauss_integration_matrix(const GaussRule& rule)
{
    const int n = static_cast<int>(rule.nodes.size());
    Eigen::MatrixXd vander(n, n), prim(n, n);
    for (int q = 0; q < n; ++q) {
        double x = rule.nodes(q);
        Eigen::VectorXd p = legendre_values(x, n);
        vander.row(q) = p.head(n).transpose();
        prim(q, 0) = x + 1.0;
        for (int m = 1; m < n; ++m) prim(q, m) = (p(m + 1) - p(m - 1)) / (2 * m + 1);
    }
    // nodal values -> Legendre coefficients -> primitive at the nodes
    return prim * vander.partialPivLu().inverse();
}

const TriangleRule& triangle_rule3()
{
    static const TriangleRule rule{
        {Eigen::Vector2d(1.0 / 6, 1.0 / 6), Eigen::Vector2d(2.0 / 3, 1.0 / 6),
         Eigen::Vector2d(1.0 / 6, 2.0 / 3)},
        {1.0 / 6, 1.0 / 6, 1.0 / 6}};
    return rule;
}

}  // namespace lagrangian
