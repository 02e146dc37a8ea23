#pragma once

// Structured triangulations of axis-aligned rectangles, P1 scalar/vector
// fields on them, and the bridge from fields to matrix-valued measures:
// symmetrized gradients, products of a P1 scalar with a measure, traces
// along segments, and the two sides of the product rule
// E(alpha u) = alpha~ E(u) + grad(alpha) (.) u.
//
// The triangulation is implicit: an nx-by-ny grid of squares, each split
// along one of its diagonals.  The split direction is chosen per cell at
// construction time so that piecewise-affine model fields whose kinks run
// diagonally are exactly representable.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "reshlab/errors.hpp"
#include "reshlab/measure.hpp"

namespace reshlab {

enum class BoundaryLabel { Dirichlet, Neumann };

struct BoundaryEdge {
    int v0 = 0, v1 = 0;   // vertex ids, ordered along the boundary walk
    int tri = 0;          // incident triangle
    Vec2 normal;          // outward unit normal
    BoundaryLabel label = BoundaryLabel::Dirichlet;
};

struct Mesh {
    Rect bounds;
    int nx = 0, ny = 0;
    double hx = 0.0, hy = 0.0;
    std::vector<std::uint8_t> anti;  // per cell: 1 = anti diagonal, 0 = main
    std::vector<BoundaryEdge> boundary;

    int n_vertices() const { return (nx + 1) * (ny + 1); }
    int n_cells() const { return nx * ny; }
    int n_triangles() const { return 2 * nx * ny; }

    int vertex_id(int i, int j) const { return j * (nx + 1) + i; }
    Vec2 vertex(int vid) const {
        const int i = vid % (nx + 1), j = vid / (nx + 1);
        return {bounds.x0 + i * hx, bounds.y0 + j * hy};
    }

    double tri_area() const { return 0.5 * hx * hy; }

    // Triangle -> vertex ids, counter-clockwise.
    std::array<int, 3> tri_vertices(int t) const {
        const int cell = t / 2, half = t % 2;
        const int ci = cell % nx, cj = cell / nx;
        const int v00 = vertex_id(ci, cj), v10 = vertex_id(ci + 1, cj);
        const int v01 = vertex_id(ci, cj + 1), v11 = vertex_id(ci + 1, cj + 1);
        if (anti[cell]) {
            return half == 0 ? std::array<int, 3>{v00, v10, v01}
                             : std::array<int, 3>{v10, v11, v01};
        }
        return half == 0 ? std::array<int, 3>{v00, v10, v11}
                         : std::array<int, 3>{v00, v11, v01};
    }

    std::array<Vec2, 3> tri_coords(int t) const {
        const auto vs = tri_vertices(t);
        return {vertex(vs[0]), vertex(vs[1]), vertex(vs[2])};
    }

    Vec2 tri_centroid(int t) const {
        const auto c = tri_coords(t);
        return barycenter(c[0], c[1], c[2]);
    }

    // Triangle containing p (points on edges may resolve to either side).
    int locate(Vec2 p) const {
        const int i = std::clamp(static_cast<int>(std::floor((p.x - bounds.x0) / hx)), 0, nx - 1);
        const int j = std::clamp(static_cast<int>(std::floor((p.y - bounds.y0) / hy)), 0, ny - 1);
        const int cell = j * nx + i;
        const double xi = (p.x - (bounds.x0 + i * hx)) / hx;
        const double eta = (p.y - (bounds.y0 + j * hy)) / hy;
        int half;
        if (anti[cell])
            half = (xi + eta <= 1.0) ? 0 : 1;
        else
            half = (eta <= xi) ? 0 : 1;
        return 2 * cell + half;
    }

    // Distance-based test whether p lies on some mesh edge (grid line or the
    // diagonal of its cell).
    bool on_edge(Vec2 p, double tol) const {
        const double fx = (p.x - bounds.x0) / hx;
        const double fy = (p.y - bounds.y0) / hy;
        const double dx = std::abs(fx - std::round(fx)) * hx;
        const double dy = std::abs(fy - std::round(fy)) * hy;
        if (dx <= tol || dy <= tol) return true;
        const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, nx - 1);
        const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, ny - 1);
        const Vec2 base{bounds.x0 + i * hx, bounds.y0 + j * hy};
        const int cell = j * nx + i;
        Vec2 a, b;
        if (anti[cell]) {
            a = {base.x + hx, base.y};
            b = {base.x, base.y + hy};
        } else {
            a = base;
            b = {base.x + hx, base.y + hy};
        }
        return distance_to_segment(p, a, b) <= tol;
    }
};

using SplitRule = std::function<bool(Vec2 cell_center)>;
using BoundaryLabeler = std::function<BoundaryLabel(Vec2 edge_midpoint)>;

inline std::shared_ptr<const Mesh> make_mesh(Rect bounds, int nx, int ny,
                                             const SplitRule& anti_rule = nullptr,
                                             const BoundaryLabeler& labeler = nullptr) {
    if (nx <= 0 || ny <= 0) throw std::invalid_argument("make_mesh: need positive subdivisions");
    if (!(bounds.width() > 0.0) || !(bounds.height() > 0.0))
        throw std::invalid_argument("make_mesh: degenerate bounds");
    auto mesh = std::make_shared<Mesh>();
    mesh->bounds = bounds;
    mesh->nx = nx;
    mesh->ny = ny;
    mesh->hx = bounds.width() / nx;
    mesh->hy = bounds.height() / ny;
    mesh->anti.assign(static_cast<std::size_t>(nx) * ny, 0);
    if (anti_rule) {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const Vec2 c{bounds.x0 + (i + 0.5) * mesh->hx, bounds.y0 + (j + 0.5) * mesh->hy};
                mesh->anti[static_cast<std::size_t>(j) * nx + i] = anti_rule(c) ? 1 : 0;
            }
    }
    auto label_of = [&](Vec2 mid) {
        return labeler ? labeler(mid) : BoundaryLabel::Dirichlet;
    };
    auto add_edge = [&](int i0, int j0, int i1, int j1, Vec2 normal, int tri) {
        BoundaryEdge e;
        e.v0 = mesh->vertex_id(i0, j0);
        e.v1 = mesh->vertex_id(i1, j1);
        e.tri = tri;
        e.normal = normal;
        e.label = label_of(0.5 * (mesh->vertex(e.v0) + mesh->vertex(e.v1)));
        mesh->boundary.push_back(e);
    };
    // Bottom and top rows (the bottom edge always belongs to the cell's first
    // triangle and the top edge to its second, in both split patterns).
    for (int i = 0; i < nx; ++i) {
        add_edge(i, 0, i + 1, 0, {0.0, -1.0}, 2 * i);
        const int cell_top = (ny - 1) * nx + i;
        add_edge(i, ny, i + 1, ny, {0.0, 1.0}, 2 * cell_top + 1);
    }
    for (int j = 0; j < ny; ++j) {
        const int cell_left = j * nx;
        const int cell_right = j * nx + (nx - 1);
        const int tri_left = 2 * cell_left + (mesh->anti[cell_left] ? 0 : 1);
        const int tri_right = 2 * cell_right + (mesh->anti[cell_right] ? 1 : 0);
        add_edge(0, j, 0, j + 1, {-1.0, 0.0}, tri_left);
        add_edge(nx, j, nx, j + 1, {1.0, 0.0}, tri_right);
    }
    return mesh;
}

// ----------------------------------------------------------------------------
// P1 fields.

namespace detail {

// Gradients of the barycentric coordinates of a triangle.
inline std::array<Vec2, 3> barycentric_gradients(const std::array<Vec2, 3>& p) {
    const double a2 = cross(p[1] - p[0], p[2] - p[0]);  // twice the signed area
    return {(1.0 / a2) * perp(p[2] - p[1]), (1.0 / a2) * perp(p[0] - p[2]),
            (1.0 / a2) * perp(p[1] - p[0])};
}

inline std::array<double, 3> barycentric_coords(const std::array<Vec2, 3>& p, Vec2 x) {
    const double a2 = cross(p[1] - p[0], p[2] - p[0]);
    const double l1 = cross(x - p[0], p[2] - p[0]) / a2;
    const double l2 = cross(p[1] - p[0], x - p[0]) / a2;
    return {1.0 - l1 - l2, l1, l2};
}

}  // namespace detail

struct ScalarP1Field {
    std::shared_ptr<const Mesh> mesh;
    std::vector<double> values;  // one per vertex

    double eval(Vec2 p) const {
        const int t = mesh->locate(p);
        const auto vs = mesh->tri_vertices(t);
        const auto l = detail::barycentric_coords(mesh->tri_coords(t), p);
        return l[0] * values[vs[0]] + l[1] * values[vs[1]] + l[2] * values[vs[2]];
    }

    // Evaluate using a prescribed triangle's affine extension (exact for
    // points on that triangle's closure, robust on shared edges).
    double eval_on_tri(int t, Vec2 p) const {
        const auto vs = mesh->tri_vertices(t);
        const auto l = detail::barycentric_coords(mesh->tri_coords(t), p);
        return l[0] * values[vs[0]] + l[1] * values[vs[1]] + l[2] * values[vs[2]];
    }

    Vec2 gradient(int t) const {
        const auto vs = mesh->tri_vertices(t);
        const auto g = detail::barycentric_gradients(mesh->tri_coords(t));
        return values[vs[0]] * g[0] + values[vs[1]] * g[1] + values[vs[2]] * g[2];
    }

    // integral of |grad f|^q (exact: the gradient is constant per triangle).
    double integral_grad_pow(double q) const {
        double s = 0.0;
        const double area = mesh->tri_area();
        for (int t = 0; t < mesh->n_triangles(); ++t) {
            const double g = norm(gradient(t));
            s += area * std::pow(g, q);
        }
        return s;
    }

    // integral of f^2 (exact P1 mass formula).
    double integral_sq() const {
        double s = 0.0;
        const double area = mesh->tri_area();
        for (int t = 0; t < mesh->n_triangles(); ++t) {
            const auto vs = mesh->tri_vertices(t);
            const double f0 = values[vs[0]], f1 = values[vs[1]], f2 = values[vs[2]];
            const double sum = f0 + f1 + f2;
            s += area / 12.0 * (sum * sum + f0 * f0 + f1 * f1 + f2 * f2);
        }
        return s;
    }
};

// Piecewise vector fields: either a continuous P1 field (vertex values) or a
// piecewise-constant field over disjoint polygonal regions on a zero
// background (the regions must be resolved by the mesh).
struct RegionPiece {
    std::vector<Vec2> polygon;  // counter-clockwise
    Vec2 value;
};

struct VectorFieldPW {
    std::shared_ptr<const Mesh> mesh;
    std::variant<std::vector<Vec2>, std::vector<RegionPiece>> data;

    bool is_p1() const { return data.index() == 0; }
    const std::vector<Vec2>& vertex_values() const { return std::get<0>(data); }
    const std::vector<RegionPiece>& regions() const { return std::get<1>(data); }
};

inline VectorFieldPW make_p1_field(std::shared_ptr<const Mesh> mesh, std::vector<Vec2> values) {
    if (static_cast<int>(values.size()) != mesh->n_vertices())
        throw std::invalid_argument("make_p1_field: one value per vertex required");
    return VectorFieldPW{std::move(mesh), std::move(values)};
}

inline VectorFieldPW make_region_field(std::shared_ptr<const Mesh> mesh,
                                       std::vector<RegionPiece> regions) {
    for (auto& r : regions) {
        if (r.polygon.size() < 3)
            throw std::invalid_argument("make_region_field: polygon needs at least 3 vertices");
        if (polygon_signed_area(r.polygon) < 0.0)
            std::reverse(r.polygon.begin(), r.polygon.end());
        if (polygon_signed_area(r.polygon) <= 0.0)
            throw std::invalid_argument("make_region_field: degenerate polygon");
    }
    return VectorFieldPW{std::move(mesh), std::move(regions)};
}

inline Vec2 p1_vector_eval(const VectorFieldPW& u, Vec2 p) {
    const auto& vals = u.vertex_values();
    const int t = u.mesh->locate(p);
    const auto vs = u.mesh->tri_vertices(t);
    const auto l = detail::barycentric_coords(u.mesh->tri_coords(t), p);
    return l[0] * vals[vs[0]] + l[1] * vals[vs[1]] + l[2] * vals[vs[2]];
}

inline SymTensor2 p1_sym_gradient(const Mesh& mesh, const std::vector<Vec2>& vals, int t) {
    const auto vs = mesh.tri_vertices(t);
    const auto g = detail::barycentric_gradients(mesh.tri_coords(t));
    SymTensor2 e{};
    for (int i = 0; i < 3; ++i) e = e + sym_outer(vals[vs[i]], g[i]);
    return e;
}

// ----------------------------------------------------------------------------
// Segment splitting along mesh lines.  Returns parameter values 0 = t_0 < ...
// < t_m = 1 such that each sub-segment lies inside a single triangle.

inline std::vector<double> split_at_mesh_lines(const Mesh& mesh, Vec2 a, Vec2 b) {
    std::vector<double> ts{0.0, 1.0};
    const Vec2 d = b - a;
    auto add_axis_cuts = [&](double origin, double h, int count, double pa, double pd) {
        if (pd == 0.0) return;
        for (int i = 0; i <= count; ++i) {
            const double line = origin + i * h;
            const double t = (line - pa) / pd;
            if (t > 1e-14 && t < 1.0 - 1e-14) ts.push_back(t);
        }
    };
    add_axis_cuts(mesh.bounds.x0, mesh.hx, mesh.nx, a.x, d.x);
    add_axis_cuts(mesh.bounds.y0, mesh.hy, mesh.ny, a.y, d.y);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end(),
                         [](double u, double v) { return std::abs(u - v) <= 1e-14; }),
             ts.end());
    // Within each grid-aligned interval, cut at the cell diagonal if crossed.
    std::vector<double> out;
    out.reserve(ts.size() * 2);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const double t0 = ts[k], t1 = ts[k + 1];
        out.push_back(t0);
        const Vec2 mid = a + (0.5 * (t0 + t1)) * d;
        const int i = std::clamp(static_cast<int>(std::floor((mid.x - mesh.bounds.x0) / mesh.hx)),
                                 0, mesh.nx - 1);
        const int j = std::clamp(static_cast<int>(std::floor((mid.y - mesh.bounds.y0) / mesh.hy)),
                                 0, mesh.ny - 1);
        const int cell = j * mesh.nx + i;
        const Vec2 base{mesh.bounds.x0 + i * mesh.hx, mesh.bounds.y0 + j * mesh.hy};
        // Diagonal line: main x/hx - y/hy = c through (0,0); anti x/hx + y/hy = 1.
        double fa, fb;
        if (mesh.anti[cell]) {
            fa = (a.x + t0 * d.x - base.x) / mesh.hx + (a.y + t0 * d.y - base.y) / mesh.hy - 1.0;
            fb = (a.x + t1 * d.x - base.x) / mesh.hx + (a.y + t1 * d.y - base.y) / mesh.hy - 1.0;
        } else {
            fa = (a.x + t0 * d.x - base.x) / mesh.hx - (a.y + t0 * d.y - base.y) / mesh.hy;
            fb = (a.x + t1 * d.x - base.x) / mesh.hx - (a.y + t1 * d.y - base.y) / mesh.hy;
        }
        if ((fa < -1e-14 && fb > 1e-14) || (fa > 1e-14 && fb < -1e-14)) {
            const double tc = t0 + (t1 - t0) * (fa / (fa - fb));
            if (tc > t0 + 1e-14 && tc < t1 - 1e-14) out.push_back(tc);
        }
    }
    out.push_back(1.0);
    return out;
}

// Trace of a P1 scalar field along a segment: affine pieces (t0, t1) with the
// field's one-sided values at the piece endpoints.
struct TracePiece {
    double t0 = 0.0, t1 = 0.0;
    double f0 = 0.0, f1 = 0.0;
};

inline std::vector<TracePiece> trace_on_segment(const ScalarP1Field& f, Vec2 a, Vec2 b) {
    if (norm(b - a) <= 0.0) throw std::invalid_argument("trace_on_segment: zero-length segment");
    if (!f.mesh->bounds.contains(a) || !f.mesh->bounds.contains(b))
        throw std::invalid_argument("trace_on_segment: segment leaves the mesh");
    const auto ts = split_at_mesh_lines(*f.mesh, a, b);
    std::vector<TracePiece> pieces;
    pieces.reserve(ts.size());
    const Vec2 d = b - a;
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        TracePiece p;
        p.t0 = ts[k];
        p.t1 = ts[k + 1];
        const Vec2 mid = a + (0.5 * (p.t0 + p.t1)) * d;
        const int t = f.mesh->locate(mid);
        p.f0 = f.eval_on_tri(t, a + p.t0 * d);
        p.f1 = f.eval_on_tri(t, a + p.t1 * d);
        pieces.push_back(p);
    }
    return pieces;
}

// ----------------------------------------------------------------------------
// Symmetrized gradient as a measure.

namespace detail {

inline bool point_in_polygon(const std::vector<Vec2>& poly, Vec2 p) {
    // Winding test for convex/simple CCW polygons via edge half-planes would
    // be wrong for non-convex ones; use the even-odd ray rule.
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 pi = poly[i], pj = poly[j];
        if ((pi.y > p.y) != (pj.y > p.y)) {
            const double x = pj.x + (p.y - pj.y) / (pi.y - pj.y) * (pi.x - pj.x);
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

inline void require_region_resolved(const Mesh& mesh, const std::vector<Vec2>& poly) {
    const double tol = 1e-9 * std::min(mesh.hx, mesh.hy);
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = poly[i], b = poly[(i + 1) % n];
        const auto ts = split_at_mesh_lines(mesh, a, b);
        for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
            const Vec2 mid = a + (0.5 * (ts[k] + ts[k + 1])) * (b - a);
            if (!mesh.on_edge(mid, tol))
                throw std::invalid_argument(
                    "region partition is not resolved by the mesh (edge off the mesh lines)");
        }
    }
}

}  // namespace detail

// E(u) as a measure.  P1 fields give a purely absolutely continuous measure
// (one constant-density cell per triangle).  Region fields give line measures
// on the region boundaries: each interface segment carries the density
// -(jump (.) normal), where the jump is the inner value minus the value on
// the side the outward normal points into.
inline DiscreteMeasure symmetrized_gradient(const VectorFieldPW& u) {
    DiscreteMeasure out;
    const Mesh& mesh = *u.mesh;
    if (u.is_p1()) {
        const auto& vals = u.vertex_values();
        out.cells.reserve(mesh.n_triangles());
        for (int t = 0; t < mesh.n_triangles(); ++t) {
            const auto c = mesh.tri_coords(t);
            out.cells.push_back(constant_cell(c[0], c[1], c[2],
                                              p1_sym_gradient(mesh, vals, t), t));
        }
        return out;
    }
    const auto& regions = u.regions();
    const double tol = 1e-9 * std::min(mesh.hx, mesh.hy);
    for (const auto& r : regions) detail::require_region_resolved(mesh, r.polygon);
    // Emit one segment per polygon edge; edges shared between two regions are
    // detected and emitted once with the inter-region jump.
    std::vector<std::uint8_t> consumed(regions.size() * 16, 0);  // grown below
    struct EdgeRef {
        std::size_t region, edge;
        Vec2 a, b;
    };
    std::vector<EdgeRef> edges;
    for (std::size_t ri = 0; ri < regions.size(); ++ri) {
        const auto& poly = regions[ri].polygon;
        for (std::size_t ei = 0; ei < poly.size(); ++ei)
            edges.push_back({ri, ei, poly[ei], poly[(ei + 1) % poly.size()]});
    }
    consumed.assign(edges.size(), 0);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (consumed[i]) continue;
        consumed[i] = 1;
        const EdgeRef& e = edges[i];
        Vec2 other_value{0.0, 0.0};
        for (std::size_t j = i + 1; j < edges.size(); ++j) {
            if (consumed[j] || edges[j].region == e.region) continue;
            if (detail::near(edges[j].a, e.b, tol) && detail::near(edges[j].b, e.a, tol)) {
                other_value = regions[edges[j].region].value;
                consumed[j] = 1;
                break;
            }
        }
        const Vec2 nu = outward_normal_ccw(e.a, e.b);
        const Vec2 jump = regions[e.region].value - other_value;
        const SymTensor2 density = -1.0 * sym_outer(jump, nu);
        out.segments.push_back(SegmentPart{e.a, e.b, density, density});
    }
    std::erase_if(out.segments, [](const SegmentPart& s) {
        return detail::zero_tensor(s.d0) && detail::zero_tensor(s.d1);
    });
    return out;
}

// ----------------------------------------------------------------------------
// Product of a P1 scalar field with a measure (alpha~ mu, using the precise
// representative of alpha along segments).  Exact: segments are split at mesh
// lines so alpha is affine on each piece; the result stays affine because
// input segment/cell densities are required to be constant wherever alpha
// actually varies.

inline DiscreteMeasure scale_by_field(const ScalarP1Field& alpha, const DiscreteMeasure& mu) {
    validate_measure(mu);
    const Mesh& mesh = *alpha.mesh;
    DiscreteMeasure out;
    for (const auto& a : mu.atoms) {
        if (!mesh.bounds.contains(a.x))
            throw std::invalid_argument("scale_by_field: atom cannot be located in the mesh");
        AtomPart scaled_atom{a.x, alpha.eval(a.x) * a.m};
        if (!detail::zero_tensor(scaled_atom.m)) out.atoms.push_back(scaled_atom);
    }
    for (const auto& s : mu.segments) {
        if (!mesh.bounds.contains(s.a) || !mesh.bounds.contains(s.b))
            throw std::invalid_argument("scale_by_field: segment cannot be located in the mesh");
        const auto ts = split_at_mesh_lines(mesh, s.a, s.b);
        const Vec2 d = s.b - s.a;
        for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
            const double t0 = ts[k], t1 = ts[k + 1];
            const SymTensor2 dd0 = s.d0 + t0 * (s.d1 - s.d0);
            const SymTensor2 dd1 = s.d0 + t1 * (s.d1 - s.d0);
            const Vec2 p0 = s.a + t0 * d, p1 = s.a + t1 * d;
            const int t = mesh.locate(s.a + (0.5 * (t0 + t1)) * d);
            const double a0 = alpha.eval_on_tri(t, p0), a1 = alpha.eval_on_tri(t, p1);
            const bool density_varies = norm(dd1 - dd0) > 0.0;
            const bool alpha_varies = std::abs(a1 - a0) > 0.0;
            if (density_varies && alpha_varies)
                throw std::invalid_argument(
                    "scale_by_field: affine density times varying field is not representable");
            SegmentPart piece{p0, p1, a0 * dd0, a1 * dd1};
            if (detail::zero_tensor(piece.d0) && detail::zero_tensor(piece.d1)) continue;
            out.segments.push_back(piece);
        }
    }
    for (const auto& c : mu.cells) {
        const Vec2 centroid = barycenter(c.v[0], c.v[1], c.v[2]);
        if (!mesh.bounds.contains(centroid))
            throw std::invalid_argument("scale_by_field: cell cannot be located in the mesh");
        const int t = mesh.locate(centroid);
        const auto coords = mesh.tri_coords(t);
        for (const auto& v : c.v) {
            const auto l = detail::barycentric_coords(coords, v);
            if (l[0] < -1e-9 || l[1] < -1e-9 || l[2] < -1e-9)
                throw std::invalid_argument(
                    "scale_by_field: measure cell straddles mesh triangles");
        }
        std::array<double, 3> av{};
        for (int i = 0; i < 3; ++i) av[i] = alpha.eval_on_tri(t, c.v[i]);
        const bool density_varies =
            norm(c.d[1] - c.d[0]) > 0.0 || norm(c.d[2] - c.d[0]) > 0.0;
        const bool alpha_varies =
            std::abs(av[1] - av[0]) > 0.0 || std::abs(av[2] - av[0]) > 0.0;
        if (density_varies && alpha_varies)
            throw std::invalid_argument(
                "scale_by_field: affine density times varying field is not representable");
        CellPart piece{c.v, {av[0] * c.d[0], av[1] * c.d[1], av[2] * c.d[2]}, c.cell_id};
        if (detail::zero_tensor(piece.d[0]) && detail::zero_tensor(piece.d[1]) &&
            detail::zero_tensor(piece.d[2]))
            continue;
        out.cells.push_back(piece);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Product rule.  leibniz_product returns the two sides of
//   E(alpha u) = alpha~ E(u) + grad(alpha) (.) u
// computed along independent routes: the left side differentiates the product
// field alpha*u directly (P2 nodal differentiation for P1 x P1, one-sided
// trace sampling across region interfaces); the right side combines
// scale_by_field with the absolutely continuous measure grad(alpha) (.) u.

struct LeibnizSides {
    DiscreteMeasure lhs;  // E(alpha u)
    DiscreteMeasure rhs;  // alpha~ E(u) + grad(alpha) (.) u
};

namespace detail {

// Symmetrized gradient of the quadratic interpolant through the 6 P2 nodes
// (vertex and edge-midpoint samples), evaluated at the 3 vertices.  Exact
// when the sampled function is a quadratic polynomial on the triangle.
inline std::array<SymTensor2, 3> quadratic_sym_gradient(const std::array<Vec2, 3>& p,
                                                        const std::array<Vec2, 6>& w) {
    // Node order: w[0..2] at vertices, w[3] on edge 01, w[4] on edge 12,
    // w[5] on edge 20.
    const auto g = barycentric_gradients(p);
    std::array<SymTensor2, 3> out{};
    for (int k = 0; k < 3; ++k) {
        // Gradients of the P2 basis functions at vertex k, where the
        // barycentric coordinates are lambda_k = 1 and 0 otherwise.
        std::array<Vec2, 6> gb{};
        for (int i = 0; i < 3; ++i) gb[i] = ((i == k) ? 3.0 : -1.0) * g[i];
        // Edge function 4 lambda_i lambda_j has gradient 4 (lambda_j g_i +
        // lambda_i g_j); at vertex k only edges containing k survive.
        auto edge_grad = [&](int i, int j) {
            Vec2 v{0.0, 0.0};
            if (k == i) v = 4.0 * g[j];
            if (k == j) v = 4.0 * g[i];
            return v;
        };
        gb[3] = edge_grad(0, 1);
        gb[4] = edge_grad(1, 2);
        gb[5] = edge_grad(2, 0);
        Vec2 grad_x{0.0, 0.0}, grad_y{0.0, 0.0};
        for (int n = 0; n < 6; ++n) {
            grad_x = grad_x + w[n].x * gb[n];
            grad_y = grad_y + w[n].y * gb[n];
        }
        out[k] = SymTensor2{grad_x.x, grad_y.y, 0.5 * (grad_x.y + grad_y.x)};
    }
    return out;
}

}  // namespace detail

inline LeibnizSides leibniz_product(const ScalarP1Field& alpha, const VectorFieldPW& u) {
    if (alpha.mesh.get() != u.mesh.get())
        throw std::invalid_argument("leibniz_product: fields must share a mesh");
    const Mesh& mesh = *alpha.mesh;
    LeibnizSides out;

    if (u.is_p1()) {
        const auto& uv = u.vertex_values();
        DiscreteMeasure grad_term;
        for (int t = 0; t < mesh.n_triangles(); ++t) {
            const auto vs = mesh.tri_vertices(t);
            const auto p = mesh.tri_coords(t);
            // Left side: differentiate pointwise products on the P2 nodes.
            std::array<Vec2, 6> w{};
            for (int i = 0; i < 3; ++i) w[i] = alpha.values[vs[i]] * uv[vs[i]];
            auto sample = [&](Vec2 x) {
                const auto l = detail::barycentric_coords(p, x);
                const double a = l[0] * alpha.values[vs[0]] + l[1] * alpha.values[vs[1]] +
                                 l[2] * alpha.values[vs[2]];
                const Vec2 uu = l[0] * uv[vs[0]] + l[1] * uv[vs[1]] + l[2] * uv[vs[2]];
                return a * uu;
            };
            w[3] = sample(0.5 * (p[0] + p[1]));
            w[4] = sample(0.5 * (p[1] + p[2]));
            w[5] = sample(0.5 * (p[2] + p[0]));
            const auto e = detail::quadratic_sym_gradient(p, w);
            out.lhs.cells.push_back(CellPart{p, e, t});
            // Right side, absolutely continuous term grad(alpha) (.) u.
            const Vec2 ga = alpha.gradient(t);
            CellPart gc{p, {sym_outer(ga, uv[vs[0]]), sym_outer(ga, uv[vs[1]]),
                            sym_outer(ga, uv[vs[2]])}, t};
            grad_term.cells.push_back(gc);
        }
        out.rhs = add(scale_by_field(alpha, symmetrized_gradient(u)), grad_term);
        return out;
    }

    const auto& regions = u.regions();
    for (const auto& r : regions) detail::require_region_resolved(mesh, r.polygon);
    DiscreteMeasure grad_term;
    // Interior: inside a region the product alpha * c is a P1 vector field.
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const Vec2 c = mesh.tri_centroid(t);
        Vec2 val{0.0, 0.0};
        bool inside = false;
        for (const auto& r : regions)
            if (detail::point_in_polygon(r.polygon, c)) {
                val = r.value;
                inside = true;
                break;
            }
        if (!inside) continue;
        const auto p = mesh.tri_coords(t);
        const auto vs = mesh.tri_vertices(t);
        // lhs: P1 sym-gradient of the pointwise product values.
        std::vector<Vec2> pv = {alpha.values[vs[0]] * val, alpha.values[vs[1]] * val,
                                alpha.values[vs[2]] * val};
        const auto g = detail::barycentric_gradients(p);
        SymTensor2 e{};
        for (int i = 0; i < 3; ++i) e = e + sym_outer(pv[i], g[i]);
        out.lhs.cells.push_back(constant_cell(p[0], p[1], p[2], e, t));
        // rhs ac term.
        const Vec2 ga = alpha.gradient(t);
        grad_term.cells.push_back(constant_cell(p[0], p[1], p[2], sym_outer(ga, val), t));
    }
    // lhs jump part: sample the product's one-sided traces along interfaces.
    const DiscreteMeasure strain = symmetrized_gradient(u);
    for (const auto& s : strain.segments) {
        const auto ts = split_at_mesh_lines(mesh, s.a, s.b);
        const Vec2 d = s.b - s.a;
        for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
            const double t0 = ts[k], t1 = ts[k + 1];
            const Vec2 p0 = s.a + t0 * d, p1 = s.a + t1 * d;
            const int t = mesh.locate(s.a + (0.5 * (t0 + t1)) * d);
            const double a0 = alpha.eval_on_tri(t, p0), a1 = alpha.eval_on_tri(t, p1);
            SegmentPart piece{p0, p1, a0 * s.d0, a1 * s.d1};
            if (detail::zero_tensor(piece.d0) && detail::zero_tensor(piece.d1)) continue;
            out.lhs.segments.push_back(piece);
        }
    }
    out.rhs = add(scale_by_field(alpha, strain), grad_term);
    return out;
}

// ----------------------------------------------------------------------------
// CSV dumps of meshes and fields (vertex_id,x,y,value columns).

inline std::string mesh_to_csv_vertices(const Mesh& mesh) {
    std::string out = "vertex_id,x,y\n";
    for (int v = 0; v < mesh.n_vertices(); ++v) {
        const Vec2 p = mesh.vertex(v);
        out += fmt_int(v) + "," + fmt_g17(p.x) + "," + fmt_g17(p.y) + "\n";
    }
    return out;
}

inline std::string mesh_to_csv_triangles(const Mesh& mesh) {
    std::string out = "tri_id,v0,v1,v2\n";
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const auto vs = mesh.tri_vertices(t);
        out += fmt_int(t) + "," + fmt_int(vs[0]) + "," + fmt_int(vs[1]) + "," + fmt_int(vs[2]) +
               "\n";
    }
    return out;
}

inline std::string scalar_field_to_csv(const ScalarP1Field& f) {
    std::string out = "vertex_id,x,y,value\n";
    for (int v = 0; v < f.mesh->n_vertices(); ++v) {
        const Vec2 p = f.mesh->vertex(v);
        out += fmt_int(v) + "," + fmt_g17(p.x) + "," + fmt_g17(p.y) + "," + fmt_g17(f.values[v]) +
               "\n";
    }
    return out;
}

inline std::string vector_field_to_csv(const Mesh& mesh, const std::vector<Vec2>& values) {
    std::string out = "vertex_id,x,y,ux,uy\n";
    for (int v = 0; v < mesh.n_vertices(); ++v) {
        const Vec2 p = mesh.vertex(v);
        out += fmt_int(v) + "," + fmt_g17(p.x) + "," + fmt_g17(p.y) + "," + fmt_g17(values[v].x) +
               "," + fmt_g17(values[v].y) + "\n";
    }
    return out;
}

}  // namespace reshlab
