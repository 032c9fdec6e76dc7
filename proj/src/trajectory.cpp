#include "lagrangian/trajectory.hpp"

#include <algorithm>
#include <cmath>

namespace lagrangian {

template <int Dim>
PairScan scan_pairs(const TrajectoryField<Dim>& field, std::int64_t pair_budget)
{
    PairScan scan;
    const Eigen::Index n = field.size();
    if (n < 2) return scan;
    const std::int64_t all = static_cast<std::int64_t>(n) * (n - 1) / 2;
    const Eigen::Index stride =
        pair_budget <= 0 || all <= pair_budget ? 1 : (all + pair_budget - 1) / pair_budget;

    const ComplexCloud<Dim> dev = field.values - field.labels.template cast<cplx>();
    for (Eigen::Index i = 0; i < n; i += stride) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i || (stride == 1 && j < i)) continue;
            double d2 = (field.labels.col(i) - field.labels.col(j)).squaredNorm();
            if (d2 == 0.0) continue;
            Point<cplx, Dim> dx = field.values.col(i) - field.values.col(j);
            double re = 0.0;
            for (int k = 0; k < Dim; ++k) re += (dx(k) * dx(k)).real();
            scan.worst_ratio = std::min(scan.worst_ratio, re / d2);
            scan.lipschitz =
                std::max(scan.lipschitz, (dev.col(i) - dev.col(j)).norm() / std::sqrt(d2));
            ++scan.pairs;
        }
    }
    return scan;
}

template <int Dim>
DeviationNorm norm_to_identity(const TrajectoryField<Dim>& field, std::int64_t pair_budget)
{
    DeviationNorm norm;
    for (Eigen::Index i = 0; i < field.size(); ++i)
        norm.sup = std::max(
            norm.sup, (field.values.col(i) - field.labels.col(i).template cast<cplx>()).norm());
    norm.lipschitz = scan_pairs(field, pair_budget).lipschitz;
    return norm;
}

template <int Dim>
double sup_distance(const TrajectoryField<Dim>& a, const TrajectoryField<Dim>& b)
{
    double d = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        d = std::max(d, (a.values.col(i) - b.values.col(i)).norm());
        if (a.second_order() && b.second_order())
            d = std::max(d, (a.velocities.col(i) - b.velocities.col(i)).norm());
    }
    return d;
}

template PairScan scan_pairs<2>(const TrajectoryField<2>&, std::int64_t);
template PairScan scan_pairs<3>(const TrajectoryField<3>&, std::int64_t);
template DeviationNorm norm_to_identity<2>(const TrajectoryField<2>&, std::int64_t);
template DeviationNorm norm_to_identity<3>(const TrajectoryField<3>&, std::int64_t);
template double sup_distance<2>(const TrajectoryField<2>&, const TrajectoryField<2>&);
template double sup_distance<3>(const TrajectoryField<3>&, const TrajectoryField<3>&);

}  // namespace lagrangian
