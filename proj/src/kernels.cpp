#include "lagrangian/kernels.hpp"

#include "lagrangian/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace lagrangian {

namespace {

template <typename S>
double abs_sq(const S& v)
{
    return std::norm(v);
}

template <typename S, int Dim>
double abs_sq(const Point<S, Dim>& z)
{
    double a = 0.0;
    for (int k = 0; k < Dim; ++k) a += std::norm(z(k));
    return a;
}

template <typename S, int Dim>
S sum_squares(const Point<S, Dim>& z)
{
    S s = z(0) * z(0);
    for (int k = 1; k < Dim; ++k) s += z(k) * z(k);
    return s;
}

template <typename S, int Dim>
std::string describe(const Point<S, Dim>& z)
{
    std::ostringstream os;
    os << "z = (";
    for (int k = 0; k < Dim; ++k) os << (k ? ", " : "") << z(k);
    os << ")";
    return os.str();
}

template <typename S>
S checked_denominator_2d(const Point<S, 2>& z)
{
    S s = sum_squares(z);
    if (std::abs(s) < kernel_denominator_tol(abs_sq(z)))
        throw DegenerateKernelArgument("z1^2 + z2^2 vanishes at " + describe(z));
    return s;
}

double sqrt_branch(double s)
{
    return std::sqrt(s);
}
cplx sqrt_branch(cplx s)
{
    return std::sqrt(s);
}

template <typename S>
S checked_sum_3d(const Point<S, 3>& z)
{
    S s = sum_squares(z);
    double tol = kernel_denominator_tol(abs_sq(z));
    if (std::real(s) <= 0.0 && std::abs(std::imag(s)) < tol)
        throw BranchCutViolation("z.z on the negative real axis at " + describe(z));
    return s;
}

}  // namespace

template <typename S>
Point<S, 2> k2d(const Point<S, 2>& z)
{
    S s = checked_denominator_2d(z);
    S c = S(1.0 / (2.0 * pi)) / s;
    return Point<S, 2>(-z(1) * c, z(0) * c);
}

template <typename S>
Eigen::Matrix<S, 2, 2> k2d_jacobian(const Point<S, 2>& z)
{
    S s = checked_denominator_2d(z);
    S c = S(1.0 / (2.0 * pi)) / s;
    S c2 = S(2.0) * c / s;
    Eigen::Matrix<S, 2, 2> j;
    j(0, 0) = z(1) * z(0) * c2;
    j(0, 1) = -c + z(1) * z(1) * c2;
    j(1, 0) = c - z(0) * z(0) * c2;
    j(1, 1) = -z(0) * z(1) * c2;
    return j;
}

template <typename S>
Point<S, 3> k3d(const Point<S, 3>& z)
{
    S s = checked_sum_3d(z);
    S c = S(1.0 / (4.0 * pi)) / (s * sqrt_branch(s));
    return z * c;
}

template <typename S>
Eigen::Matrix<S, 3, 3> k3d_jacobian(const Point<S, 3>& z)
{
    S s = checked_sum_3d(z);
    S c = S(1.0 / (4.0 * pi)) / (s * sqrt_branch(s));
    S c5 = S(3.0) * c / s;
    Eigen::Matrix<S, 3, 3> j = -c5 * (z * z.transpose());
    for (int k = 0; k < 3; ++k) j(k, k) += c;
    return j;
}

RealPoint2 kvp(const RealPoint2& x)
{
    double r2 = x.squaredNorm();
    if (r2 == 0.0) throw DegenerateKernelArgument("kvp evaluated at x = 0");
    return x / (2.0 * pi * r2);
}

template Point<double, 2> k2d<double>(const Point<double, 2>&);
template Point<cplx, 2> k2d<cplx>(const Point<cplx, 2>&);
template Eigen::Matrix<double, 2, 2> k2d_jacobian<double>(const Point<double, 2>&);
template Eigen::Matrix<cplx, 2, 2> k2d_jacobian<cplx>(const Point<cplx, 2>&);
template Point<double, 3> k3d<double>(const Point<double, 3>&);
template Point<cplx, 3> k3d<cplx>(const Point<cplx, 3>&);
template Eigen::Matrix<double, 3, 3> k3d_jacobian<double>(const Point<double, 3>&);
template Eigen::Matrix<cplx, 3, 3> k3d_jacobian<cplx>(const Point<cplx, 3>&);

namespace {

Eigen::VectorXd kernel_value(int dimension, const Eigen::VectorXd& x)
{
    if (dimension == 2) return k2d<double>(RealPoint2(x));
    return k3d<double>(RealPoint3(x));
}

Eigen::VectorXd kernel_gradient_column(int dimension, int j, const Eigen::VectorXd& x)
{
    if (dimension == 2) return k2d_jacobian<double>(RealPoint2(x)).col(j);
    return k3d_jacobian<double>(RealPoint3(x)).col(j);
}

}  // namespace

Eigen::VectorXd kernel_derivative(int dimension, const std::vector<int>& gamma,
                                  const Eigen::VectorXd& x)
{
    if (dimension != 2 && dimension != 3) throw ConfigError("kernel dimension must be 2 or 3");
    if (static_cast<int>(gamma.size()) != dimension)
        throw ConfigError("derivative multi-index length must equal the dimension");
    int order = 0;
    for (int g : gamma) {
        if (g < 0) throw ConfigError("negative derivative order");
        order += g;
    }
    if (order == 0) return kernel_value(dimension, x);
    if (order == 1) {
        int j = static_cast<int>(std::find(gamma.begin(), gamma.end(), 1) - gamma.begin());
        return kernel_gradient_column(dimension, j, x);
    }
    // peel one derivative off and difference it
    std::vector<int> rest = gamma;
    int j = static_cast<int>(std::find_if(rest.begin(), rest.end(), [](int g) { return g > 0; }) -
                             rest.begin());
    rest[j] -= 1;
    double h = 1e-5 * x.norm();
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    return (kernel_derivative(dimension, rest, xp) - kernel_derivative(dimension, rest, xm)) /
           (2.0 * h);
}

KernelBoundReport kernel_bound_check(int dimension, const std::vector<int>& gamma,
                                     const Eigen::MatrixXd& M, int sample_count,
                                     std::uint64_t seed)
{
    if (M.rows() != dimension || M.cols() != dimension)
        throw ConfigError("perturbation matrix must be dimension x dimension");
    int order = 0;
    for (int g : gamma) order += g;

    constexpr int n_radii = 7;
    const int n_dirs = std::max(1, sample_count / n_radii);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<Eigen::VectorXd> dirs;
    for (int d = 0; d < n_dirs; ++d) {
        Eigen::VectorXd v(dimension);
        for (int k = 0; k < dimension; ++k) v(k) = normal(rng);
        dirs.push_back(v.normalized());
    }

    KernelBoundReport rep;
    const Eigen::MatrixXd map = (Eigen::MatrixXd::Identity(dimension, dimension) + M).transpose();
    bool finite = true;
    for (int r = 0; r < n_radii; ++r) {
        double radius = std::pow(10.0, -3.0 + r);
        double best = 0.0;
        for (const auto& dir : dirs) {
            Eigen::VectorXd beta = radius * dir;
            Eigen::VectorXd d = kernel_derivative(dimension, gamma, map * beta);
            double v = d.norm() * std::pow(radius, order + dimension - 1);
            if (!std::isfinite(v)) finite = false;
            best = std::max(best, v);
        }
        rep.radii.push_back(radius);
        rep.per_radius.push_back(best);
        rep.constant = std::max(rep.constant, best);
    }
    auto [lo, hi] = std::minmax_element(rep.per_radius.begin(), rep.per_radius.end());
    rep.spread = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
    rep.pass = finite && rep.spread <= 1.01;
    return rep;
}

template <int Dim>
NearIdentityCertificate branch_safety(const TrajectoryField<Dim>& field, std::int64_t pair_samples)
{
    NearIdentityCertificate cert;
    PairScan scan = scan_pairs(field, pair_samples);
    double sup = 0.0;
    for (Eigen::Index i = 0; i < field.size(); ++i)
        sup = std::max(sup,
                       (field.values.col(i) - field.labels.col(i).template cast<cplx>()).norm());
    cert.delta = sup + scan.lipschitz;
    cert.worst_ratio = scan.worst_ratio;
    return cert;
}

template NearIdentityCertificate branch_safety<2>(const TrajectoryField<2>&, std::int64_t);
template NearIdentityCertificate branch_safety<3>(const TrajectoryField<3>&, std::int64_t);

}  // namespace lagrangian
