#include "lagrangian/picard.hpp"

#include "lagrangian/errors.hpp"
#include "lagrangian/kernels.hpp"
#include "lagrangian/parallel.hpp"
#include "lagrangian/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lagrangian {

template <int Dim>
void validate_field(const TrajectoryField<Dim>& field, const BallOptions& ball)
{
    const bool ball_active = std::isfinite(ball.delta);
    if (!ball_active && !ball.check_branch) return;
    NearIdentityCertificate cert = branch_safety(field, ball.pair_budget);
    if (ball_active && !(cert.delta <= ball.delta)) {
        std::ostringstream os;
        os << "distance to identity " << cert.delta << " exceeds ball radius " << ball.delta;
        throw BallExit(os.str());
    }
    if (ball.check_branch && !cert.pass()) {
        std::ostringstream os;
        os << "branch-safety ratio " << cert.worst_ratio << " below 1/2";
        throw BranchCutViolation(os.str());
    }
}

namespace {

// (X, V) or X alone; V is empty for first-order systems.
template <int Dim>
struct State {
    ComplexCloud<Dim> x, v;

    State& operator+=(const State& o)
    {
        x += o.x;
        if (v.cols()) v += o.v;
        return *this;
    }
    State scaled(cplx c) const
    {
        State s{x * c, v.cols() ? ComplexCloud<Dim>(v * c) : ComplexCloud<Dim>()};
        return s;
    }
    double distance(const State& o) const
    {
        double d = (x - o.x).cwiseAbs().maxCoeff();
        if (v.cols()) d = std::max(d, (v - o.v).cwiseAbs().maxCoeff());
        return d;
    }
};

template <int Dim>
State<Dim> rhs(const FieldOperator<Dim>& F, const State<Dim>& y)
{
    if (y.v.cols()) return State<Dim>{y.v, F(y.x)};
    return State<Dim>{F(y.x), ComplexCloud<Dim>()};
}

template <int Dim>
TrajectoryField<Dim> to_field(const TrajectoryField<Dim>& like, const State<Dim>& y)
{
    TrajectoryField<Dim> f;
    f.labels = like.labels;
    f.values = y.x;
    f.velocities = y.v;
    return f;
}

template <int Dim>
State<Dim> axpy(const State<Dim>& y, cplx a, const State<Dim>& k)
{
    State<Dim> out = y;
    out += k.scaled(a);
    return out;
}

constexpr int gauss_points = 8;

struct SolveOutcome {
    double ratio = 0.0;
    std::vector<double> differences;
};

template <int Dim>
State<Dim> picard_fixed_segments(const FieldOperator<Dim>& F, const TrajectoryField<Dim>& initial,
                                 cplx t, int segments, const PicardOptions& opt,
                                 SolveOutcome& outcome)
{
    static const GaussRule rule = gauss_legendre(gauss_points);
    static const Eigen::MatrixXd W = gauss_integration_matrix(rule);
    const State<Dim> y0{initial.values, initial.velocities};
    const double half = 0.5 / segments;

    std::vector<State<Dim>> nodes(segments * gauss_points, y0);
    State<Dim> end = y0;
    double prev_diff = 0.0;
    int growth_streak = 0;

    for (int it = 1; it <= opt.max_iters; ++it) {
        std::vector<State<Dim>> g(nodes.size());
        for (std::size_t q = 0; q < nodes.size(); ++q) g[q] = rhs(F, nodes[q]).scaled(t);

        std::vector<State<Dim>> next(nodes.size());
        State<Dim> start = y0;
        for (int seg = 0; seg < segments; ++seg) {
            const int base = seg * gauss_points;
            for (int q = 0; q < gauss_points; ++q) {
                State<Dim> acc = start;
                for (int j = 0; j < gauss_points; ++j) acc += g[base + j].scaled(half * W(q, j));
                next[base + q] = std::move(acc);
            }
            for (int j = 0; j < gauss_points; ++j) start += g[base + j].scaled(half * rule.weights(j));
        }

        double diff = end.distance(start);
        for (std::size_t q = 0; q < nodes.size(); ++q) diff = std::max(diff, nodes[q].distance(next[q]));
        nodes = std::move(next);
        end = start;
        outcome.differences.push_back(diff);

        validate_field(to_field(initial, end), opt.ball);

        if (diff < opt.tol) return end;
        if (it > 1 && prev_diff > 0.0) {
            double ratio = diff / prev_diff;
            outcome.ratio = std::max(outcome.ratio, ratio);
            growth_streak = ratio > 1.0 ? growth_streak + 1 : 0;
            if (growth_streak >= 3) {
                std::ostringstream os;
                os << "successive differences grew for 3 iterations at |t| = " << std::abs(t);
                throw NoContraction(os.str());
            }
        }
        prev_diff = diff;
    }
    std::ostringstream os;
    os << "no convergence to " << opt.tol << " within " << opt.max_iters << " iterations";
    throw NoContraction(os.str());
}

}  // namespace

template <int Dim>
PicardResult<Dim> picard_solve(const FieldOperator<Dim>& F, const TrajectoryField<Dim>& initial,
                               cplx t, const PicardOptions& options)
{
    int segments = std::max(1, options.initial_segments);
    SolveOutcome outcome;
    State<Dim> current = picard_fixed_segments(F, initial, t, segments, options, outcome);
    while (true) {
        if (2 * segments > options.max_segments) break;
        SolveOutcome refined;
        State<Dim> finer = picard_fixed_segments(F, initial, t, 2 * segments, options, refined);
        double change = current.distance(finer);
        current = std::move(finer);
        outcome = std::move(refined);
        segments *= 2;
        if (change < options.tol / 10) break;
    }
    PicardResult<Dim> result;
    result.field = to_field(initial, current);
    result.trace.differences = outcome.differences;
    result.trace.iterations = static_cast<int>(outcome.differences.size());
    result.trace.segments = segments;
    result.trace.contraction_ratio = outcome.ratio;
    return result;
}

template <int Dim>
double find_contraction_radius(const FieldOperator<Dim>& F, const TrajectoryField<Dim>& initial,
                               double r_start, double theta, const PicardOptions& options,
                               int max_halvings)
{
    double r = r_start;
    for (int k = 0; k <= max_halvings; ++k, r *= 0.5) {
        try {
            picard_solve(F, initial, std::polar(r, theta), options);
            return r;
        } catch (const NoContraction&) {
        }
    }
    throw NoContraction("no contracting radius found below the starting bound");
}

template <int Dim>
RaySolution<Dim> rk_ray_integrate(const FieldOperator<Dim>& F, const TrajectoryField<Dim>& initial,
                                  double theta, double s_max, int steps, const BallOptions& ball)
{
    if (steps < 4) throw ConfigError("rk_ray_integrate needs at least 4 steps");
    RaySolution<Dim> ray;
    ray.theta = theta;
    ray.s.push_back(0.0);
    ray.fields.push_back(initial);

    const cplx dir = theta == 0.0 ? cplx(1.0, 0.0) : theta == pi ? cplx(-1.0, 0.0) : std::polar(1.0, theta);
    const double h = s_max / steps;
    const cplx dt = dir * h;
    State<Dim> y{initial.values, initial.velocities};
    for (int k = 1; k <= steps; ++k) {
        State<Dim> k1 = rhs(F, y);
        State<Dim> k2 = rhs(F, axpy(y, 0.5 * dt, k1));
        State<Dim> k3 = rhs(F, axpy(y, 0.5 * dt, k2));
        State<Dim> k4 = rhs(F, axpy(y, dt, k3));
        k2 += k3;
        k1 += k2.scaled(2.0);
        k1 += k4;
        y += k1.scaled(dt / 6.0);
        TrajectoryField<Dim> f = to_field(initial, y);
        validate_field(f, ball);
        ray.s.push_back(k == steps ? s_max : k * h);
        ray.fields.push_back(std::move(f));
    }
    return ray;
}

template <int Dim>
std::vector<TrajectoryField<Dim>> circle_samples(const FieldOperator<Dim>& F,
                                                 const TrajectoryField<Dim>& initial, double rho,
                                                 int M, int steps, const BallOptions& ball,
                                                 int workers)
{
    if (M < 1 || (M & (M - 1)) != 0) throw ConfigError("circle sample count must be a power of two");
    std::vector<TrajectoryField<Dim>> out(M);
    parallel_for(M, workers, [&](int m) {
        double theta = 2.0 * pi * m / M;
        out[m] = rk_ray_integrate(F, initial, theta, rho, steps, ball).fields.back();
    });
    return out;
}

#define LAGRANGIAN_INSTANTIATE(D)                                                                 \
    template void validate_field<D>(const TrajectoryField<D>&, const BallOptions&);              \
    template PicardResult<D> picard_solve<D>(const FieldOperator<D>&, const TrajectoryField<D>&,  \
                                             cplx, const PicardOptions&);                        \
    template double find_contraction_radius<D>(const FieldOperator<D>&,                          \
                                               const TrajectoryField<D>&, double, double,        \
                                               const PicardOptions&, int);                       \
    template RaySolution<D> rk_ray_integrate<D>(const FieldOperator<D>&,                         \
                                                const TrajectoryField<D>&, double, double, int,  \
                                                const BallOptions&);                             \
    template std::vector<TrajectoryField<D>> circle_samples<D>(                                  \
        const FieldOperator<D>&, const TrajectoryField<D>&, double, int, int, const BallOptions&, \
        int);

LAGRANGIAN_INSTANTIATE(2)
LAGRANGIAN_INSTANTIATE(3)

#undef LAGRANGIAN_INSTANTIATE

}  // namespace lagrangian
