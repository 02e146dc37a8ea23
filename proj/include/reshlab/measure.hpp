#pragma once

// Matrix-valued discrete measures on a planar domain and the calculus used
// throughout the library: total variation, pairing against Lipschitz test
// fields, convex positively-1-homogeneous functionals of a measure, and
// measure addition with merging of coincident parts.
//
// A measure is a finite sum of three mutually singular kinds of parts:
//   * cells    — triangles carrying an affine density (tensor per unit area),
//                stored by its three corner values; a constant density is the
//                special case of equal corners.  Affine (rather than constant)
//                cell densities keep products of P1 fields with cell measures
//                exactly representable, with no resampling error.
//   * segments — line segments carrying an affine density along the segment
//                (tensor per unit length), stored by its endpoint values.
//   * atoms    — points carrying a single tensor mass.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <vector>

#include "reshlab/errors.hpp"
#include "reshlab/format.hpp"
#include "reshlab/geometry.hpp"
#include "reshlab/tensor.hpp"

namespace reshlab {

struct CellPart {
    std::array<Vec2, 3> v;
    std::array<SymTensor2, 3> d;  // density at the corners, affine inside
    int cell_id = -1;             // mesh triangle index when applicable
};

struct SegmentPart {
    Vec2 a, b;
    SymTensor2 d0, d1;  // density at a and b, affine along the segment
};

struct AtomPart {
    Vec2 x;
    SymTensor2 m;
};

struct DiscreteMeasure {
    std::vector<CellPart> cells;
    std::vector<SegmentPart> segments;
    std::vector<AtomPart> atoms;

    bool empty() const { return cells.empty() && segments.empty() && atoms.empty(); }
};

inline CellPart constant_cell(Vec2 a, Vec2 b, Vec2 c, SymTensor2 density, int cell_id = -1) {
    return CellPart{{a, b, c}, {density, density, density}, cell_id};
}

inline bool is_finite(const SymTensor2& t) {
    return std::isfinite(t.xx) && std::isfinite(t.yy) && std::isfinite(t.xy);
}

inline void validate_measure(const DiscreteMeasure& mu) {
    for (const auto& c : mu.cells) {
        if (triangle_area(c.v[0], c.v[1], c.v[2]) <= 0.0)
            throw std::invalid_argument("measure cell with non-positive area");
        for (const auto& d : c.d)
            if (!is_finite(d)) throw std::invalid_argument("non-finite cell density");
    }
    for (const auto& s : mu.segments) {
        if (norm(s.b - s.a) <= 0.0)
            throw std::invalid_argument("zero-length measure segment");
        if (!is_finite(s.d0) || !is_finite(s.d1))
            throw std::invalid_argument("non-finite segment density");
    }
    for (const auto& a : mu.atoms)
        if (!is_finite(a.m)) throw std::invalid_argument("non-finite atom mass");
}

// A Lipschitz test field with compact support, used for duality pairings.
// `lipschitz` must be a valid bound for the Frobenius norm increment.
struct TestField {
    std::string name;
    std::function<SymTensor2(Vec2)> eval;
    double lipschitz = 0.0;
};

// ----------------------------------------------------------------------------
// Exact total variation of an affine density over the unit parameter interval:
// integral of |d0 + t (d1 - d0)| dt for t in [0, 1].
inline double unit_interval_tv(const SymTensor2& d0, const SymTensor2& d1) {
    const SymTensor2 u = d1 - d0;
    const double a = contract(u, u);
    const double c = contract(d0, d0);
    if (a == 0.0) return std::sqrt(c);
    const double b = 2.0 * contract(d0, u);
    const double t0 = -b / (2.0 * a);
    double disc = c - b * b / (4.0 * a);
    const double scale = std::max({a, c, 1e-300});
    if (disc <= 1e-28 * scale) {
        // Densities are collinear: |d(t)| = sqrt(a) |t - t0|.
        const double ra = std::sqrt(a);
        if (t0 <= 0.0) return ra * (0.5 - t0);
        if (t0 >= 1.0) return ra * (t0 - 0.5);
        return ra * 0.5 * (t0 * t0 + (1.0 - t0) * (1.0 - t0));
    }
    // integral of sqrt(a (t - t0)^2 + disc) dt, antiderivative
    //   ((t - t0) sqrt(q) + (disc / sqrt(a)) asinh(sqrt(a) (t - t0) / sqrt(disc))) / 2.
    const double ra = std::sqrt(a);
    const double rd = std::sqrt(disc);
    auto F = [&](double t) {
        const double s = t - t0;
        const double q = std::sqrt(a * s * s + disc);
        return 0.5 * (s * q + (disc / ra) * std::asinh(ra * s / rd));
    };
    return F(1.0) - F(0.0);
}

// ----------------------------------------------------------------------------
// Adaptive machinery shared by pairing and convex functionals.  Pieces are
// kept in a max-heap ordered by their error contribution and refined until
// the accumulated bound drops below the tolerance (or the node budget is
// exhausted, which is an error carrying the achieved bound).

namespace detail {

struct SegPiece {
    Vec2 a, b;            // piece endpoints in space
    SymTensor2 d0, d1;    // density at the piece endpoints
};

struct CellPiece {
    std::array<Vec2, 3> v;
    std::array<SymTensor2, 3> d;
};

inline std::array<SegPiece, 2> split(const SegPiece& p) {
    const Vec2 m = 0.5 * (p.a + p.b);
    const SymTensor2 dm = 0.5 * (p.d0 + p.d1);
    return {SegPiece{p.a, m, p.d0, dm}, SegPiece{m, p.b, dm, p.d1}};
}

inline std::array<CellPiece, 4> split(const CellPiece& p) {
    const Vec2 m01 = 0.5 * (p.v[0] + p.v[1]);
    const Vec2 m12 = 0.5 * (p.v[1] + p.v[2]);
    const Vec2 m20 = 0.5 * (p.v[2] + p.v[0]);
    const SymTensor2 e01 = 0.5 * (p.d[0] + p.d[1]);
    const SymTensor2 e12 = 0.5 * (p.d[1] + p.d[2]);
    const SymTensor2 e20 = 0.5 * (p.d[2] + p.d[0]);
    return {CellPiece{{p.v[0], m01, m20}, {p.d[0], e01, e20}},
            CellPiece{{m01, p.v[1], m12}, {e01, p.d[1], e12}},
            CellPiece{{m20, m12, p.v[2]}, {e20, e12, p.d[2]}},
            CellPiece{{m01, m12, m20}, {e01, e12, e20}}};
}

struct WorkItem {
    double weight;   // refinement priority (error bound or discrepancy)
    double value;    // current estimate of this piece's contribution
    std::uint64_t order;  // tie-breaker for deterministic heap behaviour
    int kind;        // 0 = segment piece, 1 = cell piece
    SegPiece seg;
    CellPiece cell;
};

// Two-point Gauss rule along a segment piece (exact through cubics in the
// arclength parameter).  The callback receives the point and the affine
// density there.
template <typename F>
inline double seg_rule(const SegPiece& p, F&& f) {
    const double len = norm(p.b - p.a);
    const double g = 0.5 / std::sqrt(3.0);
    const double t1 = 0.5 - g, t2 = 0.5 + g;
    const double v1 = f(p.a + t1 * (p.b - p.a), p.d0 + t1 * (p.d1 - p.d0));
    const double v2 = f(p.a + t2 * (p.b - p.a), p.d0 + t2 * (p.d1 - p.d0));
    return 0.5 * len * (v1 + v2);
}

// Degree-5 seven-point rule on a triangle piece (centroid plus two symmetric
// three-point orbits).
template <typename F>
inline double cell_rule(const CellPiece& p, F&& f) {
    const double area = triangle_area(p.v[0], p.v[1], p.v[2]);
    auto at = [&](double l0, double l1, double l2) {
        const Vec2 x = l0 * p.v[0] + l1 * p.v[1] + l2 * p.v[2];
        const SymTensor2 d = l0 * p.d[0] + l1 * p.d[1] + l2 * p.d[2];
        return f(x, d);
    };
    const double s = std::sqrt(15.0);
    const double w0 = 9.0 / 40.0;
    const double a1 = (6.0 - s) / 21.0, w1 = (155.0 - s) / 1200.0;
    const double a2 = (6.0 + s) / 21.0, w2 = (155.0 + s) / 1200.0;
    double acc = w0 * at(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
    acc += w1 * (at(a1, a1, 1.0 - 2.0 * a1) + at(a1, 1.0 - 2.0 * a1, a1) +
                 at(1.0 - 2.0 * a1, a1, a1));
    acc += w2 * (at(a2, a2, 1.0 - 2.0 * a2) + at(a2, 1.0 - 2.0 * a2, a2) +
                 at(1.0 - 2.0 * a2, a2, a2));
    return area * acc;
}

struct WorkItemLess {
    bool operator()(const WorkItem& a, const WorkItem& b) const {
        if (a.weight != b.weight) return a.weight < b.weight;
        return a.order > b.order;
    }
};

using WorkQueue = std::priority_queue<WorkItem, std::vector<WorkItem>, WorkItemLess>;

}  // namespace detail

struct PairResult {
    double value = 0.0;
    double error_estimate = 0.0;
    long long nodes = 0;
};

// Duality pairing <mu, phi> = integral of phi : dmu.  Atoms are evaluated
// exactly.  Segments use a two-point Gauss rule and cells a degree-5 rule,
// with each piece's error estimated by the discrepancy between its own value
// and the sum over its children ("coarse vs fine").  The rules are exact for
// polynomial data of moderate degree, so the estimate vanishes wherever the
// test field is polynomial and refinement concentrates on its kinks.
inline PairResult pair(const DiscreteMeasure& mu, const TestField& phi, double tol = 1e-9,
                       long long node_budget = (1LL << 22)) {
    validate_measure(mu);
    if (!(tol > 0.0)) throw std::invalid_argument("pair: tolerance must be positive");

    PairResult out;
    for (const auto& a : mu.atoms) {
        out.value += contract(phi.eval(a.x), a.m);
        ++out.nodes;
    }

    auto integrand = [&](Vec2 x, const SymTensor2& d) {
        ++out.nodes;
        return contract(phi.eval(x), d);
    };
    auto seg_coarse = [&](const detail::SegPiece& p) { return detail::seg_rule(p, integrand); };
    auto cell_coarse = [&](const detail::CellPiece& p) { return detail::cell_rule(p, integrand); };

    detail::WorkQueue queue;
    std::uint64_t order = 0;
    double value_sum = 0.0, disc_sum = 0.0;
    auto push_seg = [&](const detail::SegPiece& p) {
        const double coarse = seg_coarse(p);
        double fine = 0.0;
        for (const auto& ch : detail::split(p)) fine += seg_coarse(ch);
        detail::WorkItem it;
        it.kind = 0;
        it.seg = p;
        it.value = fine;
        it.weight = std::abs(fine - coarse);
        it.order = order++;
        value_sum += it.value;
        disc_sum += it.weight;
        queue.push(it);
    };
    auto push_cell = [&](const detail::CellPiece& p) {
        const double coarse = cell_coarse(p);
        double fine = 0.0;
        for (const auto& ch : detail::split(p)) fine += cell_coarse(ch);
        detail::WorkItem it;
        it.kind = 1;
        it.cell = p;
        it.value = fine;
        it.weight = std::abs(fine - coarse);
        it.order = order++;
        value_sum += it.value;
        disc_sum += it.weight;
        queue.push(it);
    };

    for (const auto& s : mu.segments) push_seg({s.a, s.b, s.d0, s.d1});
    for (const auto& c : mu.cells) push_cell({c.v, c.d});

    while (disc_sum > tol && !queue.empty()) {
        if (out.nodes > node_budget)
            throw quadrature_error("pair: node budget exhausted before reaching tolerance",
                                   disc_sum);
        const detail::WorkItem top = queue.top();
        queue.pop();
        value_sum -= top.value;
        disc_sum -= top.weight;
        if (top.kind == 0)
            for (const auto& ch : detail::split(top.seg)) push_seg(ch);
        else
            for (const auto& ch : detail::split(top.cell)) push_cell(ch);
    }

    out.value += value_sum;
    out.error_estimate = disc_sum;
    return out;
}

// ----------------------------------------------------------------------------
// Convex functional of a measure: integral of H(x, dmu/d|mu|) d|mu|, for an
// integrand H that is non-negative, convex and positively 1-homogeneous in
// its tensor argument.  Homogeneity is spot-checked on the first few
// quadrature nodes; negative or non-finite integrand values are errors.

using Integrand = std::function<double(Vec2, const SymTensor2&)>;

struct FunctionalResult {
    double value = 0.0;
    double error_estimate = 0.0;
    long long nodes = 0;
};

inline FunctionalResult convex_functional(const Integrand& H, const DiscreteMeasure& mu,
                                          double tol = 1e-10,
                                          long long node_budget = (1LL << 22)) {
    validate_measure(mu);
    if (!(tol > 0.0)) throw std::invalid_argument("convex_functional: tolerance must be positive");

    FunctionalResult out;
    int spot_checks_left = 8;
    auto eval_h = [&](Vec2 x, const SymTensor2& d) {
        const double nd = norm(d);
        if (nd == 0.0) return 0.0;
        const SymTensor2 dir = (1.0 / nd) * d;
        const double h = H(x, dir);
        ++out.nodes;
        if (!std::isfinite(h))
            throw std::invalid_argument("convex_functional: integrand returned a non-finite value");
        if (h < 0.0)
            throw std::invalid_argument("convex_functional: integrand returned a negative value");
        if (spot_checks_left > 0) {
            --spot_checks_left;
            const double h2 = H(x, 2.0 * dir);
            if (!(std::abs(h2 - 2.0 * h) <= 1e-8 * (1.0 + std::abs(h))))
                throw std::invalid_argument(
                    "convex_functional: integrand fails the 1-homogeneity spot check");
        }
        return h * nd;
    };

    for (const auto& a : mu.atoms) out.value += eval_h(a.x, a.m);

    // Gauss-2 per segment piece, degree-5 rule per cell piece.  The
    // refinement weight is the discrepancy between a piece's estimate and the
    // sum of its children's estimates.
    auto seg_coarse = [&](const detail::SegPiece& p) { return detail::seg_rule(p, eval_h); };
    auto cell_coarse = [&](const detail::CellPiece& p) { return detail::cell_rule(p, eval_h); };

    detail::WorkQueue queue;
    std::uint64_t order = 0;
    double value_sum = 0.0, disc_sum = 0.0;
    // Each queue item stores the refined (children-sum) value of the piece and
    // the coarse-vs-fine discrepancy as its weight.
    std::function<void(const detail::SegPiece&)> push_seg = [&](const detail::SegPiece& p) {
        const double coarse = seg_coarse(p);
        double fine = 0.0;
        for (const auto& ch : detail::split(p)) fine += seg_coarse(ch);
        detail::WorkItem it;
        it.kind = 0;
        it.seg = p;
        it.value = fine;
        it.weight = std::abs(fine - coarse);
        it.order = order++;
        value_sum += it.value;
        disc_sum += it.weight;
        queue.push(it);
    };
    std::function<void(const detail::CellPiece&)> push_cell = [&](const detail::CellPiece& p) {
        const double coarse = cell_coarse(p);
        double fine = 0.0;
        for (const auto& ch : detail::split(p)) fine += cell_coarse(ch);
        detail::WorkItem it;
        it.kind = 1;
        it.cell = p;
        it.value = fine;
        it.weight = std::abs(fine - coarse);
        it.order = order++;
        value_sum += it.value;
        disc_sum += it.weight;
        queue.push(it);
    };

    for (const auto& s : mu.segments) push_seg({s.a, s.b, s.d0, s.d1});
    for (const auto& c : mu.cells) push_cell({c.v, c.d});

    while (disc_sum > tol && !queue.empty()) {
        if (out.nodes > node_budget)
            throw quadrature_error(
                "convex_functional: node budget exhausted before reaching tolerance", disc_sum);
        const detail::WorkItem top = queue.top();
        queue.pop();
        value_sum -= top.value;
        disc_sum -= top.weight;
        if (top.kind == 0)
            for (const auto& ch : detail::split(top.seg)) push_seg(ch);
        else
            for (const auto& ch : detail::split(top.cell)) push_cell(ch);
    }

    out.value += value_sum;
    out.error_estimate = disc_sum;
    return out;
}

// Total variation |mu|(R^2).  Atoms and segments are exact (closed-form
// integral of the affine density norm); constant cells are exact and affine
// cells fall back to the adaptive engine.
inline double total_variation(const DiscreteMeasure& mu, double tol = 1e-12) {
    validate_measure(mu);
    double tv = 0.0;
    DiscreteMeasure leftovers;
    for (const auto& a : mu.atoms) tv += norm(a.m);
    for (const auto& s : mu.segments) tv += norm(s.b - s.a) * unit_interval_tv(s.d0, s.d1);
    for (const auto& c : mu.cells) {
        const SymTensor2 u1 = c.d[1] - c.d[0], u2 = c.d[2] - c.d[0];
        if (contract(u1, u1) == 0.0 && contract(u2, u2) == 0.0) {
            tv += triangle_area(c.v[0], c.v[1], c.v[2]) * norm(c.d[0]);
        } else {
            leftovers.cells.push_back(c);
        }
    }
    if (!leftovers.empty()) {
        const Integrand absval = [](Vec2, const SymTensor2& xi) { return norm(xi); };
        tv += convex_functional(absval, leftovers, tol).value;
    }
    return tv;
}

// Scalar multiple of a measure.
inline DiscreteMeasure scaled(const DiscreteMeasure& mu, double c) {
    DiscreteMeasure out = mu;
    for (auto& cell : out.cells)
        for (auto& d : cell.d) d = c * d;
    for (auto& s : out.segments) {
        s.d0 = c * s.d0;
        s.d1 = c * s.d1;
    }
    for (auto& a : out.atoms) a.m = c * a.m;
    return out;
}

namespace detail {

inline Rect geometry_bbox(const DiscreteMeasure& mu, bool& any) {
    Rect box{1e300, 1e300, -1e300, -1e300};
    auto absorb = [&](Vec2 p) {
        box.x0 = std::min(box.x0, p.x);
        box.y0 = std::min(box.y0, p.y);
        box.x1 = std::max(box.x1, p.x);
        box.y1 = std::max(box.y1, p.y);
        any = true;
    };
    for (const auto& c : mu.cells)
        for (const auto& v : c.v) absorb(v);
    for (const auto& s : mu.segments) {
        absorb(s.a);
        absorb(s.b);
    }
    for (const auto& a : mu.atoms) absorb(a.x);
    return box;
}

inline bool near(Vec2 a, Vec2 b, double tol) { return norm(a - b) <= tol; }

inline bool zero_tensor(const SymTensor2& t) { return t.xx == 0.0 && t.yy == 0.0 && t.xy == 0.0; }

}  // namespace detail

// Sum of two measures.  Parts whose geometry coincides (within an absolute
// tolerance of 1e-12 of the combined geometry's diameter) are merged by
// adding densities; merged parts whose density vanishes identically are
// dropped, so atom(x, m) + atom(x, -m) is the zero measure.
inline DiscreteMeasure add(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    validate_measure(mu);
    validate_measure(nu);
    bool any = false;
    Rect box = detail::geometry_bbox(mu, any);
    bool any2 = false;
    Rect box2 = detail::geometry_bbox(nu, any2);
    if (any2) {
        box.x0 = any ? std::min(box.x0, box2.x0) : box2.x0;
        box.y0 = any ? std::min(box.y0, box2.y0) : box2.y0;
        box.x1 = any ? std::max(box.x1, box2.x1) : box2.x1;
        box.y1 = any ? std::max(box.y1, box2.y1) : box2.y1;
        any = true;
    }
    const double tol = any ? 1e-12 * std::max(box.diameter(), 0.0) : 0.0;

    DiscreteMeasure out;

    // Atoms.
    for (const auto* src : {&mu.atoms, &nu.atoms})
        for (const auto& a : *src) {
            bool merged = false;
            for (auto& b : out.atoms)
                if (detail::near(a.x, b.x, tol)) {
                    b.m = b.m + a.m;
                    merged = true;
                    break;
                }
            if (!merged) out.atoms.push_back(a);
        }
    std::erase_if(out.atoms, [](const AtomPart& a) { return detail::zero_tensor(a.m); });

    // Segments: identical or reversed geometry merges (reversed flips the
    // affine density orientation).
    for (const auto* src : {&mu.segments, &nu.segments})
        for (const auto& s : *src) {
            bool merged = false;
            for (auto& t : out.segments) {
                if (detail::near(s.a, t.a, tol) && detail::near(s.b, t.b, tol)) {
                    t.d0 = t.d0 + s.d0;
                    t.d1 = t.d1 + s.d1;
                    merged = true;
                    break;
                }
                if (detail::near(s.a, t.b, tol) && detail::near(s.b, t.a, tol)) {
                    t.d0 = t.d0 + s.d1;
                    t.d1 = t.d1 + s.d0;
                    merged = true;
                    break;
                }
            }
            if (!merged) out.segments.push_back(s);
        }
    std::erase_if(out.segments, [](const SegmentPart& s) {
        return detail::zero_tensor(s.d0) && detail::zero_tensor(s.d1);
    });

    // Cells: match triangles up to cyclic rotation of the vertex list.
    for (const auto* src : {&mu.cells, &nu.cells})
        for (const auto& c : *src) {
            bool merged = false;
            for (auto& t : out.cells) {
                for (int r = 0; r < 3 && !merged; ++r) {
                    if (detail::near(c.v[0], t.v[r], tol) &&
                        detail::near(c.v[1], t.v[(r + 1) % 3], tol) &&
                        detail::near(c.v[2], t.v[(r + 2) % 3], tol)) {
                        t.d[r] = t.d[r] + c.d[0];
                        t.d[(r + 1) % 3] = t.d[(r + 1) % 3] + c.d[1];
                        t.d[(r + 2) % 3] = t.d[(r + 2) % 3] + c.d[2];
                        merged = true;
                    }
                }
                if (merged) break;
            }
            if (!merged) out.cells.push_back(c);
        }
    std::erase_if(out.cells, [](const CellPart& c) {
        return detail::zero_tensor(c.d[0]) && detail::zero_tensor(c.d[1]) &&
               detail::zero_tensor(c.d[2]);
    });

    return out;
}

// Text dump, one line per part.  Cell lines report the mean (centroid)
// density of the cell.
inline std::string to_text(const DiscreteMeasure& mu) {
    std::string out;
    for (const auto& c : mu.cells) {
        const SymTensor2 m = (1.0 / 3.0) * (c.d[0] + c.d[1] + c.d[2]);
        out += "cell " + fmt_int(c.cell_id) + " " + fmt_g17(m.xx) + " " + fmt_g17(m.yy) + " " +
               fmt_g17(m.xy) + "\n";
    }
    for (const auto& s : mu.segments) {
        out += "seg " + fmt_g17(s.a.x) + " " + fmt_g17(s.a.y) + " " + fmt_g17(s.b.x) + " " +
               fmt_g17(s.b.y) + " " + fmt_g17(s.d0.xx) + " " + fmt_g17(s.d0.yy) + " " +
               fmt_g17(s.d0.xy) + " " + fmt_g17(s.d1.xx) + " " + fmt_g17(s.d1.yy) + " " +
               fmt_g17(s.d1.xy) + "\n";
    }
    for (const auto& a : mu.atoms) {
        out += "atom " + fmt_g17(a.x.x) + " " + fmt_g17(a.x.y) + " " + fmt_g17(a.m.xx) + " " +
               fmt_g17(a.m.yy) + " " + fmt_g17(a.m.xy) + "\n";
    }
    return out;
}

}  // namespace reshlab
