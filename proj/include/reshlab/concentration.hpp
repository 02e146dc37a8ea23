#pragma once

// The concentration laboratory: two families of damage/displacement pairs
// whose weighted strain measures concentrate as the parameter k grows.
//
//  * pinch_point (on (-1,1)^2): a single slip rectangle of width 1/k carrying
//    displacement k e1, weighted by a pyramid-shaped damage field.  The
//    weighted strains converge weakly-* to a single atom at the origin with
//    density -(e1 (.) e2).
//  * pinch_line (on (-2,2)^2, exponent q in (1,2)): floor(k^(2-q)) translated
//    copies of the same building block, rescaled so the total strain mass is
//    constant.  The weighted strains converge to the line measure
//    -(e1 (.) e2) H^1 restricted to [0,1] x {0}, while the damage gradient's
//    q-energy stays bounded.
//
// Both constructions are exactly representable: the damage fields are P1 on
// a structured mesh whose diagonals follow their kinks, displacements are
// piecewise constant on mesh-resolved rectangles, and all derived measures
// (strain, weighted strain) have closed-form piece densities.

#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "reshlab/mesh.hpp"
#include "reshlab/testfields.hpp"

namespace reshlab {

struct LabBuild {
    std::shared_ptr<const Mesh> mesh;
    ScalarP1Field damage;           // alpha_k (pinch_point) or beta_k (pinch_line)
    VectorFieldPW displacement;     // region field u_k
    DiscreteMeasure strain;         // E(u_k)
    DiscreteMeasure weighted;       // alpha~ E(u_k)
    DiscreteMeasure limit;          // predicted weak-* limit of the weighted strain
    int k = 0;
    int copies = 1;                 // number of slip rectangles
    double amplitude = 0.0;         // displacement magnitude per rectangle
};

namespace detail {

// One pyramid profile: 1 at the center, sloping down at rate k away from the
// plateau strip |x - cx| <= h, |y| = 0, clamped to [0, 1].
inline double pinch_profile(double k, double h, double cx, Vec2 p) {
    const double lateral = std::max(std::abs(p.x - cx) - h, 0.0);
    return std::clamp(1.0 - k * lateral - k * std::abs(p.y), 0.0, 1.0);
}

}  // namespace detail

// Slip rectangle of width 2h and height 2h below the segment {y = 0}.
inline std::vector<Vec2> slip_rectangle(double cx, double h) {
    return {{cx - h, -2.0 * h}, {cx + h, -2.0 * h}, {cx + h, 0.0}, {cx - h, 0.0}};
}

inline LabBuild build_pinch_point(int k, int refine = 1) {
    // The damage pyramid spans |x| < 3/(2k); it must fit inside the domain.
    if (k < 2) throw std::invalid_argument("build_pinch_point: k must be >= 2");
    if ((k & (k - 1)) != 0)
        throw std::invalid_argument(
            "build_pinch_point: k must be a power of two; the mesh pitch 1/(2k) and the "
            "slip/pyramid breaklines are exact binary floats only then (grid-compatible k)");
    if (refine < 1) throw std::invalid_argument("build_pinch_point: refine must be >= 1");
    const double h = 1.0 / (2.0 * k);
    const int n = 4 * k * refine;
    if (n > 6000)
        throw std::invalid_argument("build_pinch_point: requested resolution exceeds the cap");
    const Rect domain{-1.0, -1.0, 1.0, 1.0};
    // The damage kinks run along x + y = const in the quadrants where
    // x * y > 0 (relative to the pinch center at the origin).
    auto split = [](Vec2 c) { return c.x * c.y > 0.0; };
    auto mesh = make_mesh(domain, n, n, split);

    LabBuild out;
    out.mesh = mesh;
    out.k = k;
    out.copies = 1;
    out.amplitude = static_cast<double>(k);

    out.damage.mesh = mesh;
    out.damage.values.resize(mesh->n_vertices());
    for (int v = 0; v < mesh->n_vertices(); ++v)
        out.damage.values[v] = detail::pinch_profile(k, h, 0.0, mesh->vertex(v));

    std::vector<RegionPiece> regions{{slip_rectangle(0.0, h), {out.amplitude, 0.0}}};
    out.displacement = make_region_field(mesh, std::move(regions));
    out.strain = symmetrized_gradient(out.displacement);
    out.weighted = scale_by_field(out.damage, out.strain);
    out.limit.atoms.push_back(AtomPart{{0.0, 0.0}, -1.0 * sym_outer({1.0, 0.0}, {0.0, 1.0})});
    return out;
}

inline int pinch_line_copies(int k, double q) {
    return static_cast<int>(std::floor(std::pow(static_cast<double>(k), 2.0 - q)));
}

inline LabBuild build_pinch_line(int k, double q) {
    if (k < 1) throw std::invalid_argument("build_pinch_line: k must be >= 1");
    if ((k & (k - 1)) != 0)
        throw std::invalid_argument(
            "build_pinch_line: k must be a power of two; the mesh pitch and the strip "
            "breaklines are exact binary floats only then (grid-compatible k)");
    if (!(q > 1.0 && q < 2.0))
        throw std::invalid_argument("build_pinch_line: exponent q must lie in (1, 2)");
    const int copies = pinch_line_copies(k, q);
    if (copies < 1) throw std::invalid_argument("build_pinch_line: no copies at this k");
    // Each copy occupies a strip of width 3/k around its center; adjacent
    // centers are 1/copies apart and the profiles must not overlap.
    if (3.0 * copies > static_cast<double>(k))
        throw std::invalid_argument("build_pinch_line: copies would overlap (k too small)");
    const double h = 1.0 / (2.0 * k);
    // Mesh pitch 1/(2km) must divide the center spacing 1/copies.
    const int g = std::gcd(2 * k, copies);
    const int m = copies / g;
    const int n = 8 * k * m;  // over width 4
    if (n > 6000)
        throw std::invalid_argument("build_pinch_line: requested resolution exceeds the cap");
    const Rect domain{-2.0, -2.0, 2.0, 2.0};
    const int nc = copies;
    auto nearest_center = [nc](double x) {
        const int j = std::clamp(static_cast<int>(std::lround(x * nc)), 0, nc - 1);
        return static_cast<double>(j) / nc;
    };
    auto split = [nearest_center](Vec2 c) { return (c.x - nearest_center(c.x)) * c.y > 0.0; };
    auto mesh = make_mesh(domain, n, n, split);

    LabBuild out;
    out.mesh = mesh;
    out.k = k;
    out.copies = copies;
    out.amplitude = static_cast<double>(k) / copies;

    out.damage.mesh = mesh;
    out.damage.values.resize(mesh->n_vertices());
    for (int v = 0; v < mesh->n_vertices(); ++v) {
        const Vec2 p = mesh->vertex(v);
        out.damage.values[v] = detail::pinch_profile(k, h, nearest_center(p.x), p);
    }

    std::vector<RegionPiece> regions;
    regions.reserve(copies);
    for (int j = 0; j < copies; ++j)
        regions.push_back(RegionPiece{slip_rectangle(static_cast<double>(j) / copies, h),
                                      {out.amplitude, 0.0}});
    out.displacement = make_region_field(mesh, std::move(regions));
    out.strain = symmetrized_gradient(out.displacement);
    out.weighted = scale_by_field(out.damage, out.strain);
    const SymTensor2 density = -1.0 * sym_outer({1.0, 0.0}, {0.0, 1.0});
    out.limit.segments.push_back(SegmentPart{{0.0, 0.0}, {1.0, 0.0}, density, density});
    return out;
}

// ----------------------------------------------------------------------------
// Scalar diagnostics of a build.

inline double region_l1_norm(const VectorFieldPW& u) {
    double s = 0.0;
    for (const auto& r : u.regions()) s += norm(r.value) * polygon_signed_area(r.polygon);
    return s;
}

// ----------------------------------------------------------------------------
// Least-squares identification of the concentration structure.  Two candidate
// models for the limiting measure are fitted to the observed pairings against
// the probe family: a single atom at the origin and a uniform density on the
// segment [0,1] x {0}.  Whichever explains the data with smaller residual
// wins; the ratio of residuals measures how decisively.

namespace detail {

inline std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> a,
                                    std::array<double, 3> b) {
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        if (std::abs(a[col][col]) < 1e-14)
            throw numerical_error("solve3: singular normal equations in model fit");
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < 3; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::array<double, 3> x{};
    for (int r = 2; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < 3; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }
    return x;
}

// Least squares for pred_i = contract(rows[i], M) over the 3 components of M.
inline std::pair<SymTensor2, double> least_squares_density(
    const std::vector<SymTensor2>& rows, const std::vector<double>& obs) {
    std::array<std::array<double, 3>, 3> ata{};
    std::array<double, 3> atb{};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::array<double, 3> r{rows[i].xx, rows[i].yy, 2.0 * rows[i].xy};
        for (int a = 0; a < 3; ++a) {
            atb[a] += r[a] * obs[i];
            for (int b = 0; b < 3; ++b) ata[a][b] += r[a] * r[b];
        }
    }
    const auto m = solve3(ata, atb);
    const SymTensor2 density{m[0], m[1], m[2]};
    double ss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double pred = contract(rows[i], density);
        ss += (pred - obs[i]) * (pred - obs[i]);
    }
    return {density, std::sqrt(ss / static_cast<double>(rows.size()))};
}

}  // namespace detail

struct ModelFit {
    SymTensor2 density;
    double rms = 0.0;
};

inline ModelFit fit_atom_model(const std::vector<TestField>& fields,
                               const std::vector<double>& obs, Vec2 x0) {
    std::vector<SymTensor2> rows;
    rows.reserve(fields.size());
    for (const auto& f : fields) rows.push_back(f.eval(x0));
    auto [density, rms] = detail::least_squares_density(rows, obs);
    return {density, rms};
}

inline ModelFit fit_segment_model(const std::vector<TestField>& fields,
                                  const std::vector<double>& obs, Vec2 s0, Vec2 s1) {
    // Composite Simpson averages of each probe along the segment.  The probes
    // are piecewise smooth; a fixed fine subdivision keeps this deterministic
    // and far below the discrimination scale.
    constexpr int kIntervals = 2000;
    std::vector<SymTensor2> rows;
    rows.reserve(fields.size());
    const double len = norm(s1 - s0);
    for (const auto& f : fields) {
        SymTensor2 acc{};
        for (int i = 0; i <= kIntervals; ++i) {
            const double t = static_cast<double>(i) / kIntervals;
            const double w = (i == 0 || i == kIntervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            acc = acc + w * f.eval(s0 + t * (s1 - s0));
        }
        rows.push_back((len / (3.0 * kIntervals)) * acc);
    }
    auto [density, rms] = detail::least_squares_density(rows, obs);
    return {density, rms};
}

// ----------------------------------------------------------------------------
// Sequence study: pairings against the probe family along increasing k, with
// extrapolated limits, convergence rates, and structure identification.

struct LabResult {
    std::string example;                       // "pinch_point" / "pinch_line"
    double q = 0.0;                            // pinch_line exponent (0 otherwise)
    std::vector<int> ks;
    std::vector<std::string> field_names;
    std::vector<std::vector<double>> pairings;        // [field][k index]
    std::vector<std::vector<double>> pairing_bounds;  // certified quadrature bounds
    std::vector<double> limit_pairings;               // [field], against the predicted limit
    std::vector<double> extrapolated;                 // [field], from the last two k
    std::vector<double> rates;                        // [field], log-log slope of the error
    // Per-k scalar diagnostics:
    std::vector<double> strain_mass;       // |E u_k|(domain)
    std::vector<double> weighted_mass;     // |alpha~ E u_k|(domain)
    std::vector<double> grad_energy;       // integral of |grad damage|^power
    std::vector<double> grad_power;        // the exponent used (2 or q)
    std::vector<double> displacement_l1;
    std::vector<double> damage_sq;
    // Structure identification:
    ModelFit atom_fit, segment_fit;
    std::string winner;
    double residual_ratio = 0.0;
};

namespace detail {

// Convergence variable: the natural small parameter of each family.
inline double lab_variable(const std::string& example, double q, int k) {
    if (example == "pinch_line") return std::pow(static_cast<double>(k), -(2.0 - q));
    return 1.0 / static_cast<double>(k);
}

inline double fit_log_slope(const std::vector<double>& vars, const std::vector<double>& errs,
                            double floor_value) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (errs[i] > floor_value) {
            xs.push_back(std::log(vars[i]));
            ys.push_back(std::log(errs[i]));
        }
    }
    if (xs.size() < 2) return std::numeric_limits<double>::infinity();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    return sxy / sxx;
}

}  // namespace detail

inline LabResult run_lab(const std::string& example, const std::vector<int>& ks, double q,
                         double pair_tol = 1e-9) {
    if (ks.empty()) throw std::invalid_argument("run_lab: need at least one k");
    LabResult res;
    res.example = example;
    res.q = (example == "pinch_line") ? q : 0.0;
    res.ks = ks;

    Rect domain = (example == "pinch_line") ? Rect{-2.0, -2.0, 2.0, 2.0}
                                            : Rect{-1.0, -1.0, 1.0, 1.0};
    const auto fields = make_bump_family(domain);
    for (const auto& f : fields) res.field_names.push_back(f.name);
    res.pairings.assign(fields.size(), {});
    res.pairing_bounds.assign(fields.size(), {});

    DiscreteMeasure limit;
    for (int k : ks) {
        LabBuild build;
        if (example == "pinch_point")
            build = build_pinch_point(k);
        else if (example == "pinch_line")
            build = build_pinch_line(k, q);
        else
            throw std::invalid_argument("run_lab: unknown example '" + example + "'");
        limit = build.limit;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const auto pr = pair(build.weighted, fields[i], pair_tol);
            res.pairings[i].push_back(pr.value);
            res.pairing_bounds[i].push_back(pr.error_estimate);
        }
        res.strain_mass.push_back(total_variation(build.strain));
        res.weighted_mass.push_back(total_variation(build.weighted));
        const double power = (example == "pinch_line") ? q : 2.0;
        res.grad_power.push_back(power);
        res.grad_energy.push_back(build.damage.integral_grad_pow(power));
        res.displacement_l1.push_back(region_l1_norm(build.displacement));
        res.damage_sq.push_back(build.damage.integral_sq());
    }

    for (std::size_t i = 0; i < fields.size(); ++i) {
        const auto pr = pair(limit, fields[i], pair_tol);
        res.limit_pairings.push_back(pr.value);
    }

    // Extrapolation in the family's natural variable (Richardson with the
    // observed first-order term), and empirical convergence rates.
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const auto& p = res.pairings[i];
        if (p.size() >= 2) {
            const double v1 = detail::lab_variable(example, q, ks[ks.size() - 2]);
            const double v2 = detail::lab_variable(example, q, ks.back());
            res.extrapolated.push_back(p.back() +
                                       (p.back() - p[p.size() - 2]) * v2 / (v1 - v2));
        } else {
            res.extrapolated.push_back(p.back());
        }
        std::vector<double> vars, errs;
        for (std::size_t j = 0; j < ks.size(); ++j) {
            vars.push_back(detail::lab_variable(example, q, ks[j]));
            errs.push_back(std::abs(p[j] - res.limit_pairings[i]));
        }
        const double floor_value = 1e-12 * (1.0 + std::abs(res.limit_pairings[i]));
        res.rates.push_back(detail::fit_log_slope(vars, errs, floor_value));
    }

    res.atom_fit = fit_atom_model(fields, res.extrapolated, {0.0, 0.0});
    res.segment_fit = fit_segment_model(fields, res.extrapolated, {0.0, 0.0}, {1.0, 0.0});
    const double atom_rms = std::max(res.atom_fit.rms, 1e-12);
    const double segment_rms = std::max(res.segment_fit.rms, 1e-12);
    if (atom_rms <= segment_rms) {
        res.winner = "atom";
        res.residual_ratio = segment_rms / atom_rms;
    } else {
        res.winner = "segment";
        res.residual_ratio = atom_rms / segment_rms;
    }
    return res;
}

// ----------------------------------------------------------------------------
// CSV views of a lab result.

// Pairings at one k: one row per test field.
inline void write_lab_pairings_csv(std::ostream& os, const LabResult& res, std::size_t k_index) {
    if (k_index >= res.ks.size())
        throw std::invalid_argument("write_lab_pairings_csv: k index out of range");
    os << "testfield_id,k,pairing,quadrature_error\n";
    for (std::size_t f = 0; f < res.field_names.size(); ++f)
        os << res.field_names[f] << ',' << fmt_int(res.ks[k_index]) << ','
           << fmt_g17(res.pairings[f][k_index]) << ',' << fmt_g17(res.pairing_bounds[f][k_index])
           << '\n';
}

// Limit summary: one row per test field; the structure verdict is repeated on
// every row to keep the file flat.
inline void write_lab_report_csv(std::ostream& os, const LabResult& res) {
    os << "field,limit_pairing,extrapolated,rate,winner,residual_ratio\n";
    for (std::size_t f = 0; f < res.field_names.size(); ++f)
        os << res.field_names[f] << ',' << fmt_g17(res.limit_pairings[f]) << ','
           << fmt_g17(res.extrapolated[f]) << ',' << fmt_g17(res.rates[f]) << ',' << res.winner
           << ',' << fmt_g17(res.residual_ratio) << '\n';
}

// Per-k scalar diagnostics.
inline void write_lab_diagnostics_csv(std::ostream& os, const LabResult& res) {
    os << "k,strain_mass,weighted_mass,grad_energy,grad_power,displacement_l1,damage_sq\n";
    for (std::size_t i = 0; i < res.ks.size(); ++i)
        os << fmt_int(res.ks[i]) << ',' << fmt_g17(res.strain_mass[i]) << ','
           << fmt_g17(res.weighted_mass[i]) << ',' << fmt_g17(res.grad_energy[i]) << ','
           << fmt_g17(res.grad_power[i]) << ',' << fmt_g17(res.displacement_l1[i]) << ','
           << fmt_g17(res.damage_sq[i]) << '\n';
}

}  // namespace reshlab
