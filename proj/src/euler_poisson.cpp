#include "lagrangian/euler_poisson.hpp"

#include "lagrangian/errors.hpp"
#include "lagrangian/kernels.hpp"
#include "lagrangian/parallel.hpp"
#include "lagrangian/quadrature.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

namespace lagrangian {

DensityProfile density_profile_from_name(const std::string& name)
{
    if (name == "radial-bump") return DensityProfile::RadialBump;
    if (name == "truncated-gaussian") return DensityProfile::TruncatedGaussian;
    if (name == "shell-bump") return DensityProfile::ShellBump;
    throw ConfigError("unknown density profile '" + name + "'");
}

std::string density_profile_name(DensityProfile profile)
{
    switch (profile) {
    case DensityProfile::RadialBump: return "radial-bump";
    case DensityProfile::TruncatedGaussian: return "truncated-gaussian";
    case DensityProfile::ShellBump: return "shell-bump";
    }
    return "";
}

double DensitySpec::density(double r) const
{
    switch (profile) {
    case DensityProfile::RadialBump: {
        if (r >= radius) return 0.0;
        double q = 1.0 - r * r / (radius * radius);
        return amplitude * q * q * q * q;
    }
    case DensityProfile::TruncatedGaussian:
        if (r >= radius) return 0.0;
        return amplitude * std::exp(-r * r / (2.0 * sigma * sigma));
    case DensityProfile::ShellBump: {
        double s = (r - shell_center) / shell_width;
        if (std::abs(s) >= 1.0) return 0.0;
        double q = 1.0 - s * s;
        return amplitude * q * q * q * q;
    }
    }
    return 0.0;
}

double DensitySpec::density_slope(double r) const
{
    switch (profile) {
    case DensityProfile::RadialBump: {
        if (r >= radius) return 0.0;
        double q = 1.0 - r * r / (radius * radius);
        return amplitude * 4.0 * q * q * q * (-2.0 * r / (radius * radius));
    }
    case DensityProfile::TruncatedGaussian:
        if (r >= radius) return 0.0;
        return -amplitude * r / (sigma * sigma) * std::exp(-r * r / (2.0 * sigma * sigma));
    case DensityProfile::ShellBump: {
        double s = (r - shell_center) / shell_width;
        if (std::abs(s) >= 1.0) return 0.0;
        double q = 1.0 - s * s;
        return amplitude * 4.0 * q * q * q * (-2.0 * s / shell_width);
    }
    }
    return 0.0;
}

double DensitySpec::support_radius() const
{
    return profile == DensityProfile::ShellBump ? shell_center + shell_width : radius;
}

double DensitySpec::inner_radius() const
{
    return profile == DensityProfile::ShellBump ? shell_center - shell_width : 0.0;
}

double DensitySpec::enclosed_mass(double r) const
{
    const double lo = inner_radius();
    const double hi = std::min(r, support_radius());
    if (hi <= lo) return 0.0;
    // polynomial profiles are integrated exactly; the Gaussian converges fast
    static const GaussRule g = gauss_legendre(12);
    const int panels = 32;
    const double step = (hi - lo) / panels;
    double m = 0.0;
    for (int p = 0; p < panels; ++p) {
        double a = lo + p * step;
        for (int q = 0; q < g.nodes.size(); ++q) {
            double s = a + 0.5 * step * (g.nodes(q) + 1.0);
            m += 0.5 * step * g.weights(q) * 4.0 * pi * s * s * density(s);
        }
    }
    return m;
}

namespace {

// Dropping the self node from the lattice sum of rho(beta) K(alpha - beta)
// misses (h^2 / 3) Z(1) grad rho / (4 pi) at leading order, where Z is the
// Epstein zeta function of the cubic lattice; Z(1) = -2.8372974794806...
constexpr double lattice_self_term = -2.8372974794806 / (12.0 * pi);

}  // namespace

DensityCloud make_density_cloud(const DensitySpec& spec)
{
    if (!(spec.spacing > 0)) throw ConfigError("grid spacing must be positive");
    if (!(spec.amplitude > 0)) throw ConfigError("density amplitude must be positive");
    if (spec.profile == DensityProfile::ShellBump) {
        if (!(spec.shell_width > 0) || !(spec.shell_center > spec.shell_width))
            throw ConfigError("shell needs 0 < width < center");
    } else {
        if (!(spec.radius > 0)) throw ConfigError("support radius must be positive");
        if (spec.profile == DensityProfile::TruncatedGaussian && !(spec.sigma > 0))
            throw ConfigError("Gaussian sigma must be positive");
    }

    const double h = spec.spacing;
    const int n = static_cast<int>(std::ceil(spec.support_radius() / h));
    std::vector<Eigen::Vector3d> pts;
    std::vector<Eigen::Vector3i> idx;
    std::vector<double> rho;
    for (int i = -n; i <= n; ++i)
        for (int j = -n; j <= n; ++j)
            for (int k = -n; k <= n; ++k) {
                Eigen::Vector3d x(i * h, j * h, k * h);
                double d = spec.density(x.norm());
                if (d <= 0.0) continue;
                pts.push_back(x);
                idx.emplace_back(i, j, k);
                rho.push_back(d);
            }
    if (pts.empty()) throw MeshTooCoarse("no grid node inside the density support");

    DensityCloud c;
    const Eigen::Index m = static_cast<Eigen::Index>(pts.size());
    c.nodes.resize(3, m);
    c.indices.resize(3, m);
    c.weights.resize(m);
    c.density.resize(m);
    c.self_correction.resize(3, m);
    c.spacing = h;
    c.support_radius = spec.support_radius();
    const double volume = h * h * h;
    for (Eigen::Index a = 0; a < m; ++a) {
        c.nodes.col(a) = pts[a];
        c.indices.col(a) = idx[a];
        c.density(a) = rho[a];
        c.weights(a) = rho[a] * volume;
        double r = pts[a].norm();
        Eigen::Vector3d grad = r > 0 ? Eigen::Vector3d(spec.density_slope(r) / r * pts[a]) : Eigen::Vector3d::Zero();
        c.self_correction.col(a) = lattice_self_term * h * h * grad;
    }
    c.total_mass = c.weights.sum();
    return c;
}

namespace {

constexpr double inv_four_pi = 1.0 / (4.0 * pi);

// w_j z / s^{3/2}; the branch test is k3d's.
inline void add_source(double zx, double zy, double zz, double w, double& ax, double& ay, double& az)
{
    double s = zx * zx + zy * zy + zz * zz;
    if (s < kernel_denominator_tol(s)) throw DegenerateKernelArgument("coincident positions in the density cloud");
    double c = w / (s * std::sqrt(s));
    ax += c * zx;
    ay += c * zy;
    az += c * zz;
}

inline void add_source(cplx zx, cplx zy, cplx zz, double w, cplx& ax, cplx& ay, cplx& az)
{
    cplx s = zx * zx + zy * zy + zz * zz;
    double m = std::norm(zx) + std::norm(zy) + std::norm(zz);
    double tol = kernel_denominator_tol(m);
    if (std::norm(s) < tol * tol) throw DegenerateKernelArgument("coincident positions in the density cloud");
    if (s.real() <= 0.0 && std::abs(s.imag()) < tol) k3d<cplx>(ComplexPoint3(zx, zy, zz));
    cplx p = s * std::sqrt(s);
    cplx c = std::conj(p) * (w / std::norm(p));
    ax += c * zx;
    ay += c * zy;
    az += c * zz;
}

}  // namespace

template <typename S>
Eigen::Matrix<S, 3, Eigen::Dynamic> ep_accelerations(const DensityCloud& cloud,
                                                     const Eigen::Matrix<S, 3, Eigen::Dynamic>& X,
                                                     int workers)
{
    const Eigen::Index n = cloud.size();
    if (X.cols() != n) throw ConfigError("field size does not match the density cloud");
    const double* w = cloud.weights.data();
    const RealCloud<3>& corr = cloud.self_correction;
    Eigen::Matrix<S, 3, Eigen::Dynamic> out(3, n);
    parallel_for(static_cast<int>(n), workers, [&](int i) {
        const S xi = X(0, i), yi = X(1, i), zi = X(2, i);
        S ax(0.0), ay(0.0), az(0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            add_source(xi - X(0, j), yi - X(1, j), zi - X(2, j), w[j], ax, ay, az);
        }
        out(0, i) = ax * inv_four_pi + corr(0, i);
        out(1, i) = ay * inv_four_pi + corr(1, i);
        out(2, i) = az * inv_four_pi + corr(2, i);
    });
    return out;
}

template Eigen::Matrix<double, 3, Eigen::Dynamic> ep_accelerations<double>(
    const DensityCloud&, const Eigen::Matrix<double, 3, Eigen::Dynamic>&, int);
template Eigen::Matrix<cplx, 3, Eigen::Dynamic> ep_accelerations<cplx>(
    const DensityCloud&, const Eigen::Matrix<cplx, 3, Eigen::Dynamic>&, int);

ComplexPoint3 ep_field(const DensityCloud& cloud, const TrajectoryField<3>& X,
                       const Eigen::Vector3d& alpha, const ComplexPoint3& X_alpha)
{
    if (X.values.cols() != cloud.size()) throw ConfigError("field size does not match the density cloud");
    cplx ax(0.0), ay(0.0), az(0.0);
    Eigen::Vector3d correction = Eigen::Vector3d::Zero();
    for (Eigen::Index j = 0; j < cloud.size(); ++j) {
        if (cloud.nodes.col(j) == alpha) {
            correction = cloud.self_correction.col(j);
            continue;
        }
        add_source(X_alpha(0) - X.values(0, j), X_alpha(1) - X.values(1, j), X_alpha(2) - X.values(2, j),
                   cloud.weights(j), ax, ay, az);
    }
    return ComplexPoint3(ax, ay, az) * inv_four_pi + correction.cast<cplx>();
}

FieldOperator<3> ep_operator(const DensityCloud& cloud, int workers)
{
    return [&cloud, workers](const ComplexCloud<3>& X) -> ComplexCloud<3> {
        if ((X.imag().array() == 0.0).all()) {
            RealCloud<3> xr = X.real();
            return ep_accelerations<double>(cloud, xr, workers).cast<cplx>();
        }
        return ep_accelerations<cplx>(cloud, X, workers);
    };
}

RaySolution<3> ep_evolve(const DensityCloud& cloud, const RealCloud<3>& u0, double t_end, int steps,
                         const BallOptions& ball)
{
    if (u0.cols() != cloud.size()) throw ConfigError("u0 size does not match the density cloud");
    if (!u0.allFinite()) throw ConfigError("u0 must be finite");
    auto initial = TrajectoryField<3>::identity(cloud.nodes, u0);
    return rk_ray_integrate<3>(ep_operator(cloud), initial, t_end < 0 ? pi : 0.0, std::abs(t_end), steps,
                               ball);
}

std::vector<TrajectoryField<3>> ep_evolve_circle(const DensityCloud& cloud, const RealCloud<3>& u0,
                                                 double rho, int M, int steps, const BallOptions& ball,
                                                 int workers)
{
    if (u0.cols() != cloud.size()) throw ConfigError("u0 size does not match the density cloud");
    if (!u0.allFinite()) throw ConfigError("u0 must be finite");
    auto initial = TrajectoryField<3>::identity(cloud.nodes, u0);
    return circle_samples<3>(ep_operator(cloud), initial, rho, M, steps, ball, workers);
}

EPCircleResult ep_circle_experiment(const DensityCloud& cloud, const RealCloud<3>& u0,
                                    const std::vector<int>& probe_nodes, double rho, int M, int N,
                                    int steps, const BallOptions& ball, int workers)
{
    auto samples = ep_evolve_circle(cloud, u0, rho, M, steps, ball, workers);
    EPCircleResult res;
    for (const auto& s : samples) res.worst_branch_ratio = std::min(res.worst_branch_ratio, scan_pairs(s).worst_ratio);
    for (int node : probe_nodes) {
        if (node < 0 || node >= cloud.size()) throw ConfigError("probe node out of range");
        Eigen::MatrixXcd values(M, 3);
        for (int m = 0; m < M; ++m) values.row(m) = samples[m].values.col(node).transpose();
        EPProbeResult p;
        p.node = node;
        p.series = taylor_from_circle(values, rho, N);
        p.radius = radius_estimate(p.series);
        res.probes.push_back(std::move(p));
    }
    return res;
}

int nearest_node(const DensityCloud& cloud, const Eigen::Vector3d& x)
{
    Eigen::Index best = 0;
    (cloud.nodes.colwise() - x).colwise().squaredNorm().minCoeff(&best);
    return static_cast<int>(best);
}

namespace {

std::uint64_t cell_key(const Eigen::Vector3i& c)
{
    auto part = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v + (1 << 20))) & 0x1fffff; };
    return (part(c.x()) << 42) | (part(c.y()) << 21) | part(c.z());
}

}  // namespace

JacobianReport jacobian_density_check(const DensityCloud& cloud, const RealCloud<3>& X)
{
    if (X.cols() != cloud.size()) throw ConfigError("field size does not match the density cloud");
    const double h = cloud.spacing;
    std::unordered_map<std::uint64_t, int> by_index;
    for (Eigen::Index a = 0; a < cloud.size(); ++a) by_index.emplace(cell_key(cloud.indices.col(a)), static_cast<int>(a));

    JacobianReport rep;
    std::unordered_map<std::uint64_t, double> deposit;
    auto cell_of = [h](const Eigen::Vector3d& x) {
        return Eigen::Vector3i(static_cast<int>(std::lround(x.x() / h)), static_cast<int>(std::lround(x.y() / h)),
                               static_cast<int>(std::lround(x.z() / h)));
    };
    for (Eigen::Index a = 0; a < cloud.size(); ++a) {
        deposit[cell_key(cell_of(X.col(a)))] += cloud.weights(a);
    }
    rep.pushed_mass = cloud.weights.sum();

    rep.min_det = std::numeric_limits<double>::infinity();
    rep.max_det = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < cloud.size(); ++a) {
        Eigen::Matrix3d J;
        bool complete = true;
        for (int d = 0; d < 3 && complete; ++d) {
            Eigen::Vector3i lo = cloud.indices.col(a), hi = lo;
            lo(d) -= 1;
            hi(d) += 1;
            auto ilo = by_index.find(cell_key(lo)), ihi = by_index.find(cell_key(hi));
            if (ilo == by_index.end() || ihi == by_index.end()) {
                complete = false;
                break;
            }
            double dl = cloud.nodes(d, ihi->second) - cloud.nodes(d, ilo->second);
            J.col(d) = (X.col(ihi->second) - X.col(ilo->second)) / dl;
        }
        if (!complete) continue;
        double det = J.determinant();
        double m_cell = deposit[cell_key(cell_of(X.col(a)))];
        rep.residual = std::max(rep.residual, std::abs(det * m_cell - cloud.weights(a)) / cloud.weights(a));
        rep.min_det = std::min(rep.min_det, det);
        rep.max_det = std::max(rep.max_det, det);
        ++rep.stencil_nodes;
    }
    if (rep.stencil_nodes == 0) throw MeshTooCoarse("no node has a full central-difference stencil");
    return rep;
}

double shell_radius(double m_enclosed, double r0, double v0, double t, int steps)
{
    const double a0 = m_enclosed / (4.0 * pi);
    const double h = t / steps;
    double R = r0, V = v0;
    auto acc = [a0](double r) { return a0 / (r * r); };
    for (int k = 0; k < steps; ++k) {
        double k1r = V, k1v = acc(R);
        double k2r = V + 0.5 * h * k1v, k2v = acc(R + 0.5 * h * k1r);
        double k3r = V + 0.5 * h * k2v, k3v = acc(R + 0.5 * h * k2r);
        double k4r = V + h * k3v, k4v = acc(R + h * k3r);
        R += h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        V += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    return R;
}

}  // namespace lagrangian
