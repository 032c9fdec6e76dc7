#include "lagrangian/analyticity.hpp"

#include "lagrangian/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lagrangian {

TaylorSeries taylor_from_circle(const Eigen::MatrixXcd& samples, double rho, int N)
{
    const int M = static_cast<int>(samples.rows());
    if (M < 2 * N + 2) throw ConfigError("taylor_from_circle needs M >= 2N + 2 samples");
    TaylorSeries series;
    series.sample_radius = rho;
    series.coefficients = Eigen::MatrixXcd::Zero(N + 1, samples.cols());
    // extended-precision twiddles and accumulation; the 1/rho^n factor
    // amplifies every rounding error of the sum
    using ld = long double;
    const ld two_pi = 6.283185307179586476925286766559L;
    std::vector<std::complex<ld>> twiddle(M);
    for (int k = 0; k < M; ++k) {
        if (4 * k % M == 0) {
            static const std::complex<ld> quarter[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
            twiddle[k] = quarter[4 * k / M];
        } else {
            twiddle[k] = std::polar<ld>(1.0L, -two_pi * k / M);
        }
    }
    for (int n = 0; n <= N; ++n) {
        ld scale = 1.0L / (M * std::pow(static_cast<ld>(rho), n));
        for (Eigen::Index c = 0; c < samples.cols(); ++c) {
            std::complex<ld> acc = 0;
            for (int m = 0; m < M; ++m) {
                long k = (static_cast<long>(n) * m) % M;
                acc += std::complex<ld>(samples(m, c).real(), samples(m, c).imag()) * twiddle[k];
            }
            acc *= scale;
            series.coefficients(n, c) = cplx(static_cast<double>(acc.real()), static_cast<double>(acc.imag()));
        }
    }
    Eigen::VectorXd mag = series.magnitudes();
    if (N >= 1) series.alias_risk = mag(N) * std::pow(rho, N) > 0.1 * mag(1) * rho;
    return series;
}

TaylorSeries taylor_series_from(const std::vector<cplx>& coefficients)
{
    TaylorSeries series;
    series.coefficients = Eigen::Map<const Eigen::VectorXcd>(coefficients.data(), coefficients.size());
    return series;
}

RadiusEstimate radius_estimate(const TaylorSeries& series, int fit_first, int fit_last)
{
    const Eigen::VectorXd mag = series.magnitudes();
    const int N = series.order();
    const double rho = series.sample_radius;

    // threshold on |c_n| rho^n, the scale at which the circle data resolve c_n
    std::vector<double> scaled(N + 1);
    for (int n = 0; n <= N; ++n) scaled[n] = mag(n) * std::pow(rho, n);
    const double peak = *std::max_element(scaled.begin(), scaled.end());
    const double floor = 1e-13 * peak;
    auto usable = [&](int n) { return n >= 1 && scaled[n] > floor && mag(n) > 0.0; };

    RadiusEstimate est;
    bool any_high = false;
    for (int n = 2; n <= N; ++n) any_high = any_high || usable(n);
    if (!any_high) {
        est.infinite = true;
        est.value = std::numeric_limits<double>::infinity();
        return est;
    }

    // convexity of log|c_n| over the leading run of usable orders
    int last_usable = 1;
    while (last_usable + 1 <= N && usable(last_usable + 1)) ++last_usable;
    if (last_usable >= 3) {
        double sum = 0.0;
        int count = 0;
        for (int n = 2; n < last_usable; ++n) {
            sum += std::log(mag(n + 1)) - 2.0 * std::log(mag(n)) + std::log(mag(n - 1));
            ++count;
        }
        if (count > 0 && sum / count <= -0.1) {
            est.infinite = true;
            est.value = std::numeric_limits<double>::infinity();
            est.fit_first = 1;
            est.fit_last = last_usable;
            return est;
        }
    }

    int hi = fit_last >= 0 ? std::min(fit_last, N) : N;
    while (hi > 0 && !usable(hi)) --hi;
    int lo = fit_first >= 0 ? fit_first : std::max(1, hi / 2);
    std::vector<int> orders;
    for (int n = lo; n <= hi; ++n)
        if (usable(n)) orders.push_back(n);
    if (fit_first < 0) {
        // extend the default window downward to reach six points
        for (int n = lo - 1; n >= 1 && orders.size() < 6; --n)
            if (usable(n)) orders.insert(orders.begin(), n);
    }
    if (orders.size() < 6)
        throw InsufficientCoefficients("radius fit needs at least 6 usable coefficients");

    Eigen::MatrixXd A(orders.size(), 3);
    Eigen::VectorXd y(orders.size());
    for (std::size_t i = 0; i < orders.size(); ++i) {
        int n = orders[i];
        A(i, 0) = 1.0;
        A(i, 1) = n;
        A(i, 2) = std::log(static_cast<double>(n));
        y(i) = std::log(mag(n));
    }
    Eigen::Vector3d coef = A.colPivHouseholderQr().solve(y);
    est.value = std::exp(-coef(1));
    est.growth_exponent = coef(2);
    est.fit_first = orders.front();
    est.fit_last = orders.back();
    est.fit_residual = (A * coef - y).cwiseAbs().maxCoeff();
    return est;
}

FactorialVerdict factorial_growth_test(const std::vector<int>& orders,
                                       const std::vector<double>& magnitudes)
{
    if (orders.size() < 3 || orders.size() != magnitudes.size())
        throw ConfigError("factorial_growth_test needs at least 3 matching orders and magnitudes");
    FactorialVerdict v;
    const std::size_t k = orders.size();
    Eigen::MatrixXd A(k, 2);
    Eigen::VectorXd y(k);
    v.dominates_power = true;
    for (std::size_t i = 0; i < k; ++i) {
        double n = orders[i];
        A(i, 0) = 1.0;
        A(i, 1) = n > 0 ? n * std::log(n) : 0.0;
        y(i) = std::log(magnitudes[i]);
        if (!(magnitudes[i] >= 0.5 * std::pow(n, n))) v.dominates_power = false;
    }
    Eigen::Vector2d coef = A.colPivHouseholderQr().solve(y);
    v.slope = coef(1);
    v.non_analytic_signature = v.slope >= 0.8 && v.dominates_power;
    return v;
}

std::optional<double> flat_then_move_detect(const std::vector<double>& times,
                                            const std::vector<double>& speeds, double tol_floor,
                                            double tol_move)
{
    if (times.size() != speeds.size()) throw ConfigError("times and speeds differ in length");
    if (tol_move < 10.0 * tol_floor) throw ConfigError("tol_move must be at least 10 tol_floor");
    const std::size_t n = times.size();
    std::size_t flat = 0;
    while (flat < n && speeds[flat] <= tol_floor) ++flat;
    if (flat == 0 || flat == n) return std::nullopt;
    if (flat < std::max<std::size_t>(1, (n + 9) / 10)) return std::nullopt;
    bool moves = false;
    for (std::size_t i = flat; i < n; ++i) moves = moves || speeds[i] > tol_move;
    if (!moves) return std::nullopt;
    return times[flat - 1];
}

}  // namespace lagrangian
