#include "lagrangian/vortex_patch.hpp"

#include "lagrangian/errors.hpp"
#include "lagrangian/kernels.hpp"
#include "lagrangian/parallel.hpp"
#include "lagrangian/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <optional>

namespace lagrangian {

namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b)
{
    return a.x() * b.y() - a.y() * b.x();
}

double signed_area(const std::vector<Eigen::Vector2d>& pts)
{
    double s = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) s += cross(pts[i], pts[(i + 1) % pts.size()]);
    return 0.5 * s;
}

bool segments_cross(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2, const Eigen::Vector2d& q1,
                    const Eigen::Vector2d& q2)
{
    auto orient = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
        double v = cross(b - a, c - a);
        return (v > 0) - (v < 0);
    };
    auto on_segment = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
        return std::min(a.x(), b.x()) <= c.x() && c.x() <= std::max(a.x(), b.x()) &&
               std::min(a.y(), b.y()) <= c.y() && c.y() <= std::max(a.y(), b.y());
    };
    int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
    int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
}

bool point_in_triangle(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                       const Eigen::Vector2d& c)
{
    return cross(b - a, p - a) >= 0 && cross(c - b, p - b) >= 0 && cross(a - c, p - c) >= 0;
}

std::vector<std::array<int, 3>> ear_clip(const std::vector<Eigen::Vector2d>& pts)
{
    std::vector<int> idx(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) idx[i] = static_cast<int>(i);
    std::vector<std::array<int, 3>> tris;
    while (idx.size() > 3) {
        bool clipped = false;
        const std::size_t n = idx.size();
        for (std::size_t i = 0; i < n && !clipped; ++i) {
            int a = idx[(i + n - 1) % n], b = idx[i], c = idx[(i + 1) % n];
            if (cross(pts[b] - pts[a], pts[c] - pts[b]) <= 0) continue;
            bool empty = true;
            for (int k : idx) {
                if (k == a || k == b || k == c) continue;
                if (point_in_triangle(pts[k], pts[a], pts[b], pts[c])) {
                    empty = false;
                    break;
                }
            }
            if (!empty) continue;
            tris.push_back({a, b, c});
            idx.erase(idx.begin() + static_cast<long>(i));
            clipped = true;
        }
        if (!clipped) throw InvalidGeometry("polygon could not be triangulated");
    }
    tris.push_back({idx[0], idx[1], idx[2]});
    return tris;
}

}  // namespace

Patch Patch::disc(double R, int resolution, const Eigen::Vector2d& center)
{
    return ellipse(R, R, resolution, center);
}

Patch Patch::ellipse(double a, double b, int resolution, const Eigen::Vector2d& center)
{
    if (!(a > 0) || !(b > 0)) throw InvalidGeometry("ellipse semi-axes must be positive");
    if (resolution < 8) throw InvalidGeometry("resolution must be at least 8");
    Patch p;
    p.polar_ = true;
    p.a_ = a;
    p.b_ = b;
    p.center_ = center;
    const int n_theta = resolution;
    const int n_r = std::max(2, resolution / 4);
    auto node_of = [&](int ring, int j) { return ring == 0 ? 0 : 1 + (ring - 1) * n_theta + (j % n_theta); };

    p.nodes_.resize(2, 1 + n_r * n_theta);
    p.nodes_.col(0) = center;
    for (int ring = 1; ring <= n_r; ++ring)
        for (int j = 0; j < n_theta; ++j)
            p.nodes_.col(node_of(ring, j)) =
                p.physical(Eigen::Vector2d(double(ring) / n_r, 2.0 * pi * j / n_theta));

    for (int ring = 0; ring < n_r; ++ring) {
        double r0 = double(ring) / n_r, r1 = double(ring + 1) / n_r;
        for (int j = 0; j < n_theta; ++j) {
            double t0 = 2.0 * pi * j / n_theta, t1 = 2.0 * pi * (j + 1) / n_theta;
            Eigen::Vector2d p00(r0, t0), p10(r1, t0), p11(r1, t1), p01(r0, t1);
            p.cells_.push_back({{node_of(ring, j), node_of(ring + 1, j), node_of(ring + 1, j + 1)},
                                {p00, p10, p11}});
            p.cells_.push_back({{node_of(ring, j), node_of(ring + 1, j + 1), node_of(ring, j + 1)},
                                {p00, p11, p01}});
        }
    }
    for (int j = 0; j < n_theta; ++j) p.boundary_.push_back(p.nodes_.col(node_of(n_r, j)));
    p.area_ = pi * a * b;
    p.finish();
    return p;
}

Patch Patch::polygon(std::vector<Eigen::Vector2d> pts, int resolution)
{
    if (resolution < 8) throw InvalidGeometry("resolution must be at least 8");
    if (pts.size() < 3) throw InvalidGeometry("polygon needs at least 3 vertices");
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]))
                throw InvalidGeometry("polygon boundary intersects itself");
        }
    double area = signed_area(pts);
    if (area == 0.0) throw InvalidGeometry("polygon has zero area");
    if (area < 0) std::reverse(pts.begin(), pts.end());

    Patch p;
    p.boundary_ = pts;
    p.area_ = std::abs(area);
    double perimeter = 0.0, longest = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double len = (pts[(i + 1) % n] - pts[i]).norm();
        perimeter += len;
        longest = std::max(longest, len);
    }
    const int k = std::max(1, static_cast<int>(std::ceil(longest / (perimeter / resolution))));

    std::map<std::pair<long long, long long>, int> lookup;
    std::vector<Eigen::Vector2d> verts;
    auto vertex = [&](const Eigen::Vector2d& x) {
        auto key = std::make_pair(std::llround(x.x() * 1e10), std::llround(x.y() * 1e10));
        auto it = lookup.find(key);
        if (it != lookup.end()) return it->second;
        int id = static_cast<int>(verts.size());
        verts.push_back(x);
        lookup.emplace(key, id);
        return id;
    };
    for (const auto& tri : ear_clip(pts)) {
        const Eigen::Vector2d &A = pts[tri[0]], &B = pts[tri[1]], &C = pts[tri[2]];
        auto at = [&](int i, int j) { return Eigen::Vector2d(A + (B - A) * (double(i) / k) + (C - A) * (double(j) / k)); };
        for (int i = 0; i < k; ++i)
            for (int j = 0; i + j < k; ++j) {
                Eigen::Vector2d q0 = at(i, j), q1 = at(i + 1, j), q2 = at(i, j + 1);
                p.cells_.push_back({{vertex(q0), vertex(q1), vertex(q2)}, {q0, q1, q2}});
                if (i + j + 1 < k) {
                    Eigen::Vector2d q3 = at(i + 1, j + 1);
                    p.cells_.push_back({{vertex(q1), vertex(q3), vertex(q2)}, {q1, q3, q2}});
                }
            }
    }
    p.nodes_.resize(2, static_cast<Eigen::Index>(verts.size()));
    for (std::size_t i = 0; i < verts.size(); ++i) p.nodes_.col(static_cast<Eigen::Index>(i)) = verts[i];
    p.finish();
    return p;
}

void Patch::finish()
{
    centroids_.resize(2, static_cast<Eigen::Index>(cells_.size()));
    diameters_.resize(static_cast<Eigen::Index>(cells_.size()));
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        Eigen::Vector2d x[3];
        for (int k = 0; k < 3; ++k) x[k] = nodes_.col(cells_[c].nodes[k]);
        centroids_.col(c) = (x[0] + x[1] + x[2]) / 3.0;
        // polar cells curve between vertices; the parameter midpoints bound the bulge
        double d = std::max({(x[0] - x[1]).norm(), (x[1] - x[2]).norm(), (x[2] - x[0]).norm()});
        if (polar_) {
            const auto& pr = cells_[c].param;
            for (int k = 0; k < 3; ++k) {
                Eigen::Vector2d mid = physical(0.5 * (pr[k] + pr[(k + 1) % 3]));
                d = std::max(d, 2.0 * (mid - centroids_.col(c)).norm());
            }
        }
        diameters_(c) = d;
    }
}

Eigen::Vector2d Patch::unit_coordinates(const Eigen::Vector2d& x) const
{
    return Eigen::Vector2d((x.x() - center_.x()) / a_, (x.y() - center_.y()) / b_);
}

Eigen::Vector2d Patch::physical(const Eigen::Vector2d& p) const
{
    if (!polar_) return p;
    return center_ + Eigen::Vector2d(a_ * p.x() * std::cos(p.y()), b_ * p.x() * std::sin(p.y()));
}

Eigen::Matrix2d Patch::jacobian(const Eigen::Vector2d& p) const
{
    if (!polar_) return Eigen::Matrix2d::Identity();
    Eigen::Matrix2d j;
    j << a_ * std::cos(p.y()), -a_ * p.x() * std::sin(p.y()), b_ * std::sin(p.y()),
        b_ * p.x() * std::cos(p.y());
    return j;
}

double Patch::quadrature_area() const
{
    const TriangleRule& rule = triangle_rule3();
    double sum = 0.0;
    for (const auto& cell : cells_) {
        Eigen::Matrix2d A;
        A << cell.param[1] - cell.param[0], cell.param[2] - cell.param[0];
        double scale = std::abs(A.determinant());
        for (int q = 0; q < 3; ++q) {
            Eigen::Vector2d p = cell.param[0] + A * rule.points[q];
            sum += rule.weights[q] * scale * jacobian(p).determinant();
        }
    }
    return sum;
}

namespace {

constexpr int max_near_depth = 12;
constexpr double near_factor = 2.5;
constexpr int sweep_points = 10;
constexpr int near_points = 5;
constexpr double separation = 0.5;
constexpr double containment_margin = 1e-9;

template <typename S>
using Vec2 = Eigen::Matrix<S, 2, 1>;

struct CellFrame {
    Eigen::Matrix2d A, A_inv;
};

CellFrame frame_of(const Patch::Cell& cell)
{
    CellFrame f;
    f.A << cell.param[1] - cell.param[0], cell.param[2] - cell.param[0];
    f.A_inv = f.A.inverse();
    return f;
}

// Quadrature point bound to a cell: barycentric weights of the cell's
// vertices, the reference position beta and the area weight.
PatchOperator::Point make_point(const Patch& patch, const Patch::Cell& cell, const CellFrame& f,
                                int c, const Eigen::Vector2d& p, double w)
{
    Eigen::Vector2d lam = f.A_inv * (p - cell.param[0]);
    return PatchOperator::Point{c, lam.x(), lam.y(), patch.physical(p), w};
}

void rule_points(const Patch& patch, const Patch::Cell& cell, const CellFrame& f, int c,
                 const std::array<Eigen::Vector2d, 3>& sub, std::vector<PatchOperator::Point>& out)
{
    const TriangleRule& rule = triangle_rule3();
    Eigen::Matrix2d B;
    B << sub[1] - sub[0], sub[2] - sub[0];
    double scale = std::abs(B.determinant());
    for (int q = 0; q < 3; ++q) {
        Eigen::Vector2d p = sub[0] + B * rule.points[q];
        out.push_back(make_point(patch, cell, f, c, p, rule.weights[q] * scale * patch.jacobian(p).determinant()));
    }
}

// Collapsed Gauss product rule on the unit triangle, exact to degree 2n-2.
const std::vector<std::pair<Eigen::Vector2d, double>>& collapsed_rule()
{
    static const std::vector<std::pair<Eigen::Vector2d, double>> rule = [] {
        GaussRule g = gauss_legendre(near_points, 0.0, 1.0);
        std::vector<std::pair<Eigen::Vector2d, double>> r;
        for (int i = 0; i < near_points; ++i)
            for (int j = 0; j < near_points; ++j) {
                double u = g.nodes(i);
                r.push_back({Eigen::Vector2d(u, g.nodes(j) * (1.0 - u)), g.weights(i) * g.weights(j) * (1.0 - u)});
            }
        return r;
    }();
    return rule;
}

void collapsed_points(const Patch& patch, const Patch::Cell& cell, const CellFrame& f, int c,
                      const std::array<Eigen::Vector2d, 3>& sub, std::vector<PatchOperator::Point>& out)
{
    Eigen::Matrix2d B;
    B << sub[1] - sub[0], sub[2] - sub[0];
    double scale = std::abs(B.determinant());
    for (const auto& [q, w] : collapsed_rule()) {
        Eigen::Vector2d p = sub[0] + B * q;
        out.push_back(make_point(patch, cell, f, c, p, w * scale * patch.jacobian(p).determinant()));
    }
}

// Subdivide (decided on the identity map) until every piece is at least one
// of its own diameters away from the target, then apply the collapsed rule.
void near_points_for(const Patch& patch, const Patch::Cell& cell, const CellFrame& f, int c,
                     const std::array<Eigen::Vector2d, 3>& sub, const Eigen::Vector2d& target, int depth,
                     std::vector<PatchOperator::Point>& out)
{
    std::array<Eigen::Vector2d, 3> phys{patch.physical(sub[0]), patch.physical(sub[1]), patch.physical(sub[2])};
    double diam = std::max({(phys[0] - phys[1]).norm(), (phys[1] - phys[2]).norm(), (phys[2] - phys[0]).norm()});
    double dist = std::min({(target - phys[0]).norm(), (target - phys[1]).norm(), (target - phys[2]).norm(),
                            (target - (phys[0] + phys[1] + phys[2]) / 3.0).norm()});
    if (dist < separation * diam && depth < max_near_depth) {
        Eigen::Vector2d m01 = 0.5 * (sub[0] + sub[1]), m12 = 0.5 * (sub[1] + sub[2]),
                        m20 = 0.5 * (sub[2] + sub[0]);
        near_points_for(patch, cell, f, c, {sub[0], m01, m20}, target, depth + 1, out);
        near_points_for(patch, cell, f, c, {m01, sub[1], m12}, target, depth + 1, out);
        near_points_for(patch, cell, f, c, {m20, m12, sub[2]}, target, depth + 1, out);
        near_points_for(patch, cell, f, c, {m12, m20, m01}, target, depth + 1, out);
        return;
    }
    collapsed_points(patch, cell, f, c, sub, out);
}

// Signed sub-triangles (apex, v_i, v_{i+1}). Each is swept along rays from
// the apex; u dA cancels the 1/|x| singularity and the edge coordinate
// s = h sinh(sigma) flattens the peak when the apex sits close to the edge.
// Distances are measured in the local physical metric at the apex, since
// the polar parameter plane is strongly anisotropic near the centre.
void sweep_points_about(const Patch& patch, const Patch::Cell& cell, const CellFrame& f, int c,
                        const std::array<Eigen::Vector2d, 3>& sub, const Eigen::Vector2d& apex,
                        std::vector<PatchOperator::Point>& out)
{
    static const GaussRule g = gauss_legendre(sweep_points, 0.0, 1.0);
    Eigen::Matrix2d L = patch.jacobian(apex);
    if (std::abs(L.determinant()) <= 1e-12 * L.squaredNorm()) L.setIdentity();
    const Eigen::Matrix2d L_inv = L.inverse();
    const double metric = 1.0 / std::abs(L.determinant());
    Eigen::Matrix2d B;
    B << sub[1] - sub[0], sub[2] - sub[0];
    const double cell_det = (L * B).determinant();
    const double orientation = cell_det > 0 ? 1.0 : -1.0;
    for (int e = 0; e < 3; ++e) {
        const Eigen::Vector2d a = L * (sub[e] - apex);
        const Eigen::Vector2d b = L * (sub[(e + 1) % 3] - apex);
        double det = a.x() * b.y() - a.y() * b.x();
        if (std::abs(det) <= 1e-14 * std::abs(cell_det)) continue;
        const Eigen::Vector2d t = (b - a).normalized();
        const double sa = a.dot(t), sb = b.dot(t);
        const Eigen::Vector2d foot = a - sa * t;
        const double h = foot.norm();
        const double lo = std::asinh(sa / h), hi = std::asinh(sb / h);
        const double sign = (det > 0 ? 1.0 : -1.0) * orientation;
        for (int j = 0; j < sweep_points; ++j) {
            double sigma = lo + g.nodes(j) * (hi - lo);
            Eigen::Vector2d edge_point = L_inv * (foot + h * std::sinh(sigma) * t);
            double jac = g.weights(j) * (hi - lo) * h * h * std::cosh(sigma) * sign * metric;
            for (int i = 0; i < sweep_points; ++i) {
                double u = g.nodes(i);
                Eigen::Vector2d p = apex + u * edge_point;
                out.push_back(make_point(patch, cell, f, c, p, g.weights(i) * u * jac * patch.jacobian(p).determinant()));
            }
        }
    }
}

void singular_points(const Patch& patch, const Patch::Cell& cell, const CellFrame& f, int c,
                     const Eigen::Vector2d& apex, std::vector<PatchOperator::Point>& out)
{
    if (patch.polar() && apex.x() == 0.0) {
        // the polar area element already cancels the singularity at the centre
        collapsed_points(patch, cell, f, c, cell.param, out);
        return;
    }
    sweep_points_about(patch, cell, f, c, cell.param, apex, out);
}

// Parameter-plane location of a target label lying in the closed cell.
std::optional<Eigen::Vector2d> apex_near_cell(const Patch& patch, const Patch::Cell& cell,
                                              const CellFrame& f, const Eigen::Vector2d& label)
{
    std::array<Eigen::Vector2d, 3> candidates;
    int count = 0;
    if (patch.polar()) {
        Eigen::Vector2d q = patch.unit_coordinates(label);
        double r = q.norm();
        if (r == 0.0) {
            // the centre is the whole r = 0 edge of the parameter strip
            for (const auto& v : cell.param)
                if (v.x() == 0.0) return v;
            return std::nullopt;
        }
        double theta = std::atan2(q.y(), q.x());
        if (theta < 0) theta += 2.0 * pi;
        candidates[count++] = Eigen::Vector2d(r, theta);
        candidates[count++] = Eigen::Vector2d(r, theta + 2.0 * pi);
        candidates[count++] = Eigen::Vector2d(r, theta - 2.0 * pi);
    } else {
        candidates[count++] = label;
    }
    for (int k = 0; k < count; ++k) {
        Eigen::Vector2d lam = f.A_inv * (candidates[k] - cell.param[0]);
        double l0 = 1.0 - lam.x() - lam.y();
        if (std::min({l0, lam.x(), lam.y()}) >= -containment_margin) return candidates[k];
    }
    return std::nullopt;
}

}  // namespace

PatchOperator::PatchOperator(const Patch& patch, const RealCloud<2>& target_labels)
    : patch_(&patch)
{
    const auto& cells = patch.cells();
    const int nc = static_cast<int>(cells.size());
    std::vector<CellFrame> frames;
    frames.reserve(nc);
    for (int c = 0; c < nc; ++c) {
        frames.push_back(frame_of(cells[c]));
        rule_points(patch, cells[c], frames.back(), c, cells[c].param, regular_);
    }

    const Eigen::Index nt = target_labels.cols();
    special_offset_.assign(nt + 1, 0);
    special_cells_.resize(nt);
    for (Eigen::Index t = 0; t < nt; ++t) {
        const Eigen::Vector2d label = target_labels.col(t);
        for (int c = 0; c < nc; ++c) {
            double dist = (label - patch.cell_centroids().col(c)).norm();
            if (dist > near_factor * patch.cell_diameters()(c)) continue;
            special_cells_[t].push_back(c);
            if (auto apex = apex_near_cell(patch, cells[c], frames[c], label)) {
                singular_points(patch, cells[c], frames[c], c, *apex, special_);
            } else {
                near_points_for(patch, cells[c], frames[c], c, cells[c].param, label, 0, special_);
            }
        }
        special_offset_[t + 1] = special_.size();
    }
}

namespace {

// Inlined k2d for the quadrature loops; degenerate arguments fall through to
// k2d, which raises.
inline Vec2<double> kernel(double z0, double z1)
{
    double s = z0 * z0 + z1 * z1;
    if (s < kernel_denominator_tol(s)) return k2d<double>(RealPoint2(z0, z1));
    double c = 1.0 / (2.0 * pi * s);
    return Vec2<double>(-z1 * c, z0 * c);
}

inline Vec2<cplx> kernel(cplx z0, cplx z1)
{
    cplx s = z0 * z0 + z1 * z1;
    double n = std::norm(s);
    double m = std::norm(z0) + std::norm(z1);
    double tol = kernel_denominator_tol(m);
    if (n < tol * tol) return k2d<cplx>(ComplexPoint2(z0, z1));
    cplx c = std::conj(s) * (1.0 / (2.0 * pi * n));
    return Vec2<cplx>(-z1 * c, z0 * c);
}

}  // namespace

template <typename S>
Eigen::Matrix<S, 2, Eigen::Dynamic> PatchOperator::apply(const Eigen::Matrix<S, 2, Eigen::Dynamic>& node_values,
                                                         const Eigen::Matrix<S, 2, Eigen::Dynamic>& target_values,
                                                         int workers) const
{
    const Patch& patch = *patch_;
    const auto& cells = patch.cells();
    const std::size_t nc = cells.size();

    // nodal displacement per cell vertex
    std::vector<std::array<Vec2<S>, 3>> disp(nc);
    for (std::size_t c = 0; c < nc; ++c)
        for (int k = 0; k < 3; ++k)
            disp[c][k] = node_values.col(cells[c].nodes[k]) - patch.nodes().col(cells[c].nodes[k]).template cast<S>();

    auto position = [&](const Point& q) -> Vec2<S> {
        const auto& d = disp[q.cell];
        return q.beta.template cast<S>() + d[0] * S(1.0 - q.l1 - q.l2) + d[1] * S(q.l1) + d[2] * S(q.l2);
    };

    Eigen::Matrix<S, 2, Eigen::Dynamic> regular_x(2, regular_.size());
    for (std::size_t k = 0; k < regular_.size(); ++k) regular_x.col(k) = position(regular_[k]);

    const Eigen::Index nt = target_values.cols();
    Eigen::Matrix<S, 2, Eigen::Dynamic> out(2, nt);
    parallel_for(static_cast<int>(nt), workers, [&](int t) {
        const Vec2<S> target = target_values.col(t);
        Vec2<S> acc = Vec2<S>::Zero();
        const auto& skip = special_cells_[t];
        std::size_t next_skip = 0;
        for (std::size_t c = 0; c < nc; ++c) {
            if (next_skip < skip.size() && skip[next_skip] == static_cast<int>(c)) {
                ++next_skip;
                continue;
            }
            for (std::size_t q = 3 * c; q < 3 * c + 3; ++q)
                {
                Vec2<S> z = target - regular_x.col(q);
                acc += kernel(z(0), z(1)) * regular_[q].w;
            }
        }
        for (std::size_t k = special_offset_[t]; k < special_offset_[t + 1]; ++k) {
            Vec2<S> z = target - position(special_[k]);
            acc += kernel(z(0), z(1)) * special_[k].w;
        }
        out.col(t) = acc;
    });
    return out;
}

template Eigen::Matrix<double, 2, Eigen::Dynamic> PatchOperator::apply<double>(
    const Eigen::Matrix<double, 2, Eigen::Dynamic>&, const Eigen::Matrix<double, 2, Eigen::Dynamic>&, int) const;
template Eigen::Matrix<cplx, 2, Eigen::Dynamic> PatchOperator::apply<cplx>(
    const Eigen::Matrix<cplx, 2, Eigen::Dynamic>&, const Eigen::Matrix<cplx, 2, Eigen::Dynamic>&, int) const;

template <typename S>
Eigen::Matrix<S, 2, Eigen::Dynamic> patch_velocities(const Patch& patch,
                                                     const Eigen::Matrix<S, 2, Eigen::Dynamic>& node_values,
                                                     const Eigen::Matrix<S, 2, Eigen::Dynamic>& target_values,
                                                     const RealCloud<2>& target_labels, int workers)
{
    return PatchOperator(patch, target_labels).apply<S>(node_values, target_values, workers);
}

template Eigen::Matrix<double, 2, Eigen::Dynamic> patch_velocities<double>(
    const Patch&, const Eigen::Matrix<double, 2, Eigen::Dynamic>&,
    const Eigen::Matrix<double, 2, Eigen::Dynamic>&, const RealCloud<2>&, int);
template Eigen::Matrix<cplx, 2, Eigen::Dynamic> patch_velocities<cplx>(
    const Patch&, const Eigen::Matrix<cplx, 2, Eigen::Dynamic>&,
    const Eigen::Matrix<cplx, 2, Eigen::Dynamic>&, const RealCloud<2>&, int);

ComplexPoint2 patch_velocity(const Patch& patch, const TrajectoryField<2>& X,
                             const Eigen::Vector2d& alpha, const ComplexPoint2& X_alpha)
{
    ComplexCloud<2> nodes = X.values.leftCols(patch.node_count());
    ComplexCloud<2> target = X_alpha;
    RealCloud<2> label = alpha;
    return patch_velocities<cplx>(patch, nodes, target, label).col(0);
}

PatchSystem make_patch_system(const Patch& patch, const RealCloud<2>& probes, int workers)
{
    PatchSystem sys;
    sys.node_count = patch.node_count();
    sys.labels.resize(2, sys.node_count + probes.cols());
    sys.labels << patch.nodes(), probes;
    auto op = std::make_shared<const PatchOperator>(patch, sys.labels);
    const int nn = sys.node_count;
    sys.F = [op, nn, workers](const ComplexCloud<2>& X) -> ComplexCloud<2> {
        if ((X.imag().array() == 0.0).all()) {
            RealCloud<2> xr = X.real();
            RealCloud<2> nodes = xr.leftCols(nn);
            return op->apply<double>(nodes, xr, workers).cast<cplx>();
        }
        ComplexCloud<2> nodes = X.leftCols(nn);
        return op->apply<cplx>(nodes, X, workers);
    };
    return sys;
}

double deformed_area(const Patch& patch, const RealCloud<2>& node_positions)
{
    const TriangleRule& rule = triangle_rule3();
    double sum = 0.0;
    for (const auto& cell : patch.cells()) {
        Eigen::Matrix2d A, D;
        A << cell.param[1] - cell.param[0], cell.param[2] - cell.param[0];
        Eigen::Vector2d d[3];
        for (int k = 0; k < 3; ++k)
            d[k] = node_positions.col(cell.nodes[k]) - patch.nodes().col(cell.nodes[k]);
        D << d[1] - d[0], d[2] - d[0];
        Eigen::Matrix2d dDdp = D * A.inverse();
        double scale = std::abs(A.determinant());
        for (int q = 0; q < 3; ++q) {
            Eigen::Vector2d p = cell.param[0] + A * rule.points[q];
            Eigen::Matrix2d J = patch.jacobian(p);
            double w = rule.weights[q] * scale * J.determinant();
            Eigen::Matrix2d grad = Eigen::Matrix2d::Identity() + dDdp * J.inverse();
            sum += w * grad.determinant();
        }
    }
    return sum;
}

std::vector<ProbeResult> patch_flow_experiment(const Patch& patch, const RealCloud<2>& probes,
                                               const PatchFlowOptions& opt)
{
    PatchSystem sys = make_patch_system(patch, probes, 1);
    auto initial = TrajectoryField<2>::identity(sys.labels);
    BallOptions ball;
    ball.delta = opt.delta;
    auto samples = circle_samples<2>(sys.F, initial, opt.rho, opt.M, opt.steps, ball, opt.workers);

    double worst = 1.0;
    for (const auto& s : samples) worst = std::min(worst, scan_pairs(s).worst_ratio);

    std::vector<ProbeResult> out;
    for (Eigen::Index p = 0; p < probes.cols(); ++p) {
        Eigen::MatrixXcd values(opt.M, 2);
        for (int m = 0; m < opt.M; ++m) values.row(m) = samples[m].values.col(sys.node_count + p).transpose();
        ProbeResult r;
        r.label = probes.col(p);
        r.series = taylor_from_circle(values, opt.rho, opt.N);
        r.radius = radius_estimate(r.series);
        r.worst_branch_ratio = worst;
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

// Orientation of the principal axis of the evolved quadrature cloud.
std::pair<double, double> principal_angle(const Patch& patch, const RealCloud<2>& nodes)
{
    const TriangleRule& rule = triangle_rule3();
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
    double mass = 0.0;
    for (const auto& cell : patch.cells()) {
        CellFrame f = frame_of(cell);
        Eigen::Vector2d d[3];
        for (int k = 0; k < 3; ++k) d[k] = nodes.col(cell.nodes[k]) - patch.nodes().col(cell.nodes[k]);
        double scale = std::abs(f.A.determinant());
        for (int q = 0; q < 3; ++q) {
            const Eigen::Vector2d& l = rule.points[q];
            Eigen::Vector2d p = cell.param[0] + f.A * l;
            double w = rule.weights[q] * scale * patch.jacobian(p).determinant();
            Eigen::Vector2d x = patch.physical(p) + d[0] * (1.0 - l.x() - l.y()) + d[1] * l.x() + d[2] * l.y();
            mean += w * x;
            second += w * x * x.transpose();
            mass += w;
        }
    }
    mean /= mass;
    Eigen::Matrix2d J = second / mass - mean * mean.transpose();
    double angle = 0.5 * std::atan2(2.0 * J(0, 1), J(0, 0) - J(1, 1));
    double anisotropy = std::hypot(J(0, 0) - J(1, 1), 2.0 * J(0, 1)) / J.trace();
    return {angle, anisotropy};
}

}  // namespace

RotationFit kirchhoff_rotation_rate(double a, double b, double t_end, int resolution, double dt,
                                    int workers)
{
    if (!(a >= b) || !(b > 0)) throw InvalidGeometry("Kirchhoff ellipse needs a >= b > 0");
    Patch patch = Patch::ellipse(a, b, resolution);
    PatchSystem sys = make_patch_system(patch, RealCloud<2>(2, 0), workers);
    auto initial = TrajectoryField<2>::identity(sys.labels);
    BallOptions free_flight;
    free_flight.check_branch = false;
    const int steps = std::max(4, static_cast<int>(std::lround(t_end / dt)));
    auto ray = rk_ray_integrate<2>(sys.F, initial, 0.0, t_end, steps, free_flight);

    RotationFit fit;
    const double area0 = patch.quadrature_area();
    double unwrap = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < ray.s.size(); ++k) {
        RealCloud<2> x = ray.fields[k].values.real();
        auto [angle, anisotropy] = principal_angle(patch, x);
        if (k == 0 && anisotropy < 1e-3) fit.degenerate = true;
        if (k > 0) {
            double d = angle - prev;
            while (d > pi / 2) d -= pi;
            while (d < -pi / 2) d += pi;
            unwrap += d;
        } else {
            unwrap = angle;
        }
        prev = angle;
        fit.times.push_back(ray.s[k]);
        fit.angles.push_back(unwrap);
        fit.max_area_drift = std::max(fit.max_area_drift, std::abs(deformed_area(patch, x) / area0 - 1.0));
    }
    if (fit.degenerate) return fit;
    const std::size_t n = fit.times.size();
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd y(n);
    for (std::size_t k = 0; k < n; ++k) {
        A(k, 0) = 1.0;
        A(k, 1) = fit.times[k];
        y(k) = fit.angles[k];
    }
    fit.rate = A.colPivHouseholderQr().solve(y)(1);
    return fit;
}

}  // namespace lagrangian
