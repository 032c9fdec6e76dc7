#pragma once

#include "lagrangian/types.hpp"

#include <cstdint>

namespace lagrangian {

// Values of a (possibly complexified) trajectory map at a fixed set of real
// labels. Second-order systems also carry V = dX/dt.
template <int Dim>
struct TrajectoryField {
    RealCloud<Dim> labels;
    ComplexCloud<Dim> values;
    ComplexCloud<Dim> velocities;

    Eigen::Index size() const { return labels.cols(); }
    bool second_order() const { return velocities.cols() > 0; }

    static TrajectoryField identity(const RealCloud<Dim>& labels)
    {
        TrajectoryField f;
        f.labels = labels;
        f.values = labels.template cast<cplx>();
        return f;
    }
    static TrajectoryField identity(const RealCloud<Dim>& labels, const RealCloud<Dim>& u0)
    {
        TrajectoryField f = identity(labels);
        f.velocities = u0.template cast<cplx>();
        return f;
    }
};

// Label pairs examined by the pairwise scans. All pairs are used when their
// count fits the budget; otherwise every s-th label is paired with all others.
inline constexpr std::int64_t default_pair_budget = 250000;

struct PairScan {
    double lipschitz = 0.0;    // max |D(a)-D(b)| / |a-b|, D = X - Id
    double worst_ratio = 1.0;  // min Re sum (X_i(a)-X_i(b))^2 / |a-b|^2
    std::int64_t pairs = 0;
};

template <int Dim>
PairScan scan_pairs(const TrajectoryField<Dim>& field, std::int64_t pair_budget = default_pair_budget);

struct DeviationNorm {
    double sup = 0.0;
    double lipschitz = 0.0;
    double total() const { return sup + lipschitz; }
};

// sup |X - Id| plus the discrete Lipschitz constant of X - Id.
template <int Dim>
DeviationNorm norm_to_identity(const TrajectoryField<Dim>& field,
                               std::int64_t pair_budget = default_pair_budget);

// Sup-norm distance between two fields on the same labels (positions and,
// when present, velocities).
template <int Dim>
double sup_distance(const TrajectoryField<Dim>& a, const TrajectoryField<Dim>& b);

}  // namespace lagrangian
