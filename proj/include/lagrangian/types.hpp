#pragma once

#include <Eigen/Dense>
#include <complex>

namespace lagrangian {

using cplx = std::complex<double>;

template <typename Scalar, int Dim>
using Point = Eigen::Matrix<Scalar, Dim, 1>;

using ComplexPoint2 = Point<cplx, 2>;
using ComplexPoint3 = Point<cplx, 3>;
using RealPoint2 = Point<double, 2>;
using RealPoint3 = Point<double, 3>;

// One column per label.
template <int Dim>
using ComplexCloud = Eigen::Matrix<cplx, Dim, Eigen::Dynamic>;
template <int Dim>
using RealCloud = Eigen::Matrix<double, Dim, Eigen::Dynamic>;

inline constexpr double pi = 3.14159265358979323846;

}  // namespace lagrangian
