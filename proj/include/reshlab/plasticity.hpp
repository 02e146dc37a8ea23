#pragma once

// Constitutive layer of a small-strain elasto-plasticity model coupled to a
// scalar damage field alpha in [0,1] (1 = sound material, 0 = fully damaged):
//
//   * degraded isotropic elasticity
//       C(alpha) e = g(alpha) * (2 mu0 dev(e) + kappa0 tr(e) I),
//     with linear degradation g(alpha) = eps0 + (1 - eps0) alpha, so the
//     residual stiffness eps0 keeps C coercive at full damage;
//   * a von Mises plastic potential whose yield radius is scaled by damage,
//       V(alpha) sigma_y |xi|,  V(alpha) = c1 + (c2 - c1) alpha;
//   * affine damage dissipation d(alpha) = kappa_d (1 - alpha) and a
//     quadratic gradient regularization grad_weight * |grad alpha|^2.
//
// Plastic strains are trace-free symmetric matrices; the potential is +inf
// off that subspace, enforced here as a hard trace gate rather than a
// penalty.  All energies are centroid-quadrature folds over the triangles,
// exact for per-triangle-constant strains and affine damage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "reshlab/errors.hpp"
#include "reshlab/measure.hpp"
#include "reshlab/mesh.hpp"
#include "reshlab/tensor.hpp"

namespace reshlab {

struct MaterialLaw {
    double mu0 = 1.0;         // undamaged shear modulus
    double kappa0 = 1.0;      // undamaged bulk modulus
    double eps0 = 0.5;        // residual stiffness fraction, in (0,1)
    double sigma_y = 0.1;     // yield radius
    double c1 = 0.5;          // yield scaling at full damage
    double c2 = 1.0;          // yield scaling of the sound material
    double kappa_d = 1.0;     // damage toughness
    double grad_weight = 1.0; // weight of the damage gradient energy
};

inline void validate_law(const MaterialLaw& law) {
    auto bad = [](const std::string& what) {
        throw std::invalid_argument("MaterialLaw: " + what);
    };
    if (!(law.mu0 > 0.0)) bad("shear modulus must be positive");
    if (!(law.kappa0 > 0.0)) bad("bulk modulus must be positive");
    if (!(law.eps0 > 0.0 && law.eps0 < 1.0)) bad("residual stiffness must lie in (0,1)");
    if (!(law.sigma_y > 0.0)) bad("yield radius must be positive");
    if (!(law.c1 > 0.0)) bad("yield scaling floor must be positive");
    if (!(law.c2 >= law.c1)) bad("yield scaling ceiling must dominate the floor");
    if (!(law.kappa_d > 0.0)) bad("damage toughness must be positive");
    if (!(law.grad_weight > 0.0)) bad("gradient weight must be positive");
}

// g(alpha): stiffness degradation factor.
inline double degradation(const MaterialLaw& law, double alpha) {
    return law.eps0 + (1.0 - law.eps0) * alpha;
}

// V(alpha): yield-surface scaling.
inline double yield_scale(const MaterialLaw& law, double alpha) {
    return law.c1 + (law.c2 - law.c1) * alpha;
}

// d(alpha): pointwise damage dissipation density.
inline double damage_density(const MaterialLaw& law, double alpha) {
    return law.kappa_d * (1.0 - alpha);
}

namespace detail {
inline void require_unit_interval(double alpha, const char* who) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument(std::string(who) + ": damage value outside [0,1]");
}
}  // namespace detail

// The map e -> C(alpha) e.
inline SymTensor2 apply_elasticity(const MaterialLaw& law, double alpha,
                                   const SymTensor2& e) {
    detail::require_unit_interval(alpha, "apply_elasticity");
    const double g = degradation(law, alpha);
    const SymTensor2 de = dev(e);
    const double tr = trace(e);
    return {g * (2.0 * law.mu0 * de.xx + law.kappa0 * tr),
            g * (2.0 * law.mu0 * de.yy + law.kappa0 * tr),
            g * 2.0 * law.mu0 * de.xy};
}

// (1/2) C(alpha) e : e = g(alpha) (mu0 |dev e|^2 + kappa0 tr(e)^2 / 2).
inline double strain_energy_density(const MaterialLaw& law, double alpha,
                                    const SymTensor2& e) {
    detail::require_unit_interval(alpha, "strain_energy_density");
    const double g = degradation(law, alpha);
    const SymTensor2 de = dev(e);
    const double tr = trace(e);
    return g * (law.mu0 * contract(de, de) + 0.5 * law.kappa0 * tr * tr);
}

namespace detail {
inline double tri_mean(const ScalarP1Field& f, int t) {
    const auto v = f.mesh->tri_vertices(t);
    return (f.values[v[0]] + f.values[v[1]] + f.values[v[2]]) / 3.0;
}
}  // namespace detail

// Q(alpha, e): total elastic energy for a per-triangle-constant strain and a
// P1 damage field, with the damage taken at the triangle centroid (exact for
// the affine factor g(alpha) against constant integrands).
inline double elastic_energy(const MaterialLaw& law, const ScalarP1Field& alpha,
                             const std::vector<SymTensor2>& e) {
    const Mesh& mesh = *alpha.mesh;
    if (e.size() != static_cast<std::size_t>(mesh.n_triangles()))
        throw std::invalid_argument("elastic_energy: strain array does not match the mesh");
    double acc = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t)
        acc += mesh.tri_area() * strain_energy_density(law, detail::tri_mean(alpha, t), e[t]);
    return acc;
}

// D(alpha): integral of d(alpha).
inline double damage_dissipation(const MaterialLaw& law, const ScalarP1Field& alpha) {
    const Mesh& mesh = *alpha.mesh;
    double acc = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const double a = detail::tri_mean(alpha, t);
        detail::require_unit_interval(a, "damage_dissipation");
        acc += mesh.tri_area() * damage_density(law, a);
    }
    return acc;
}

// Quadratic gradient energy, exact for P1 fields.
inline double gradient_term(const MaterialLaw& law, const ScalarP1Field& alpha) {
    return law.grad_weight * alpha.integral_grad_pow(2.0);
}

namespace detail {
constexpr double kTraceGate = 1e-10;

inline void require_deviatoric(const DiscreteMeasure& p) {
    auto check = [](const SymTensor2& d) {
        if (std::abs(trace(d)) > kTraceGate)
            throw std::invalid_argument(
                "plastic_potential: measure carries a non-deviatoric density");
    };
    for (const auto& a : p.atoms) check(a.m);
    for (const auto& s : p.segments) {
        check(s.d0);
        check(s.d1);
    }
    for (const auto& c : p.cells)
        for (const auto& d : c.d) check(d);
}
}  // namespace detail

// H(alpha, p): integral of V(alpha(x)) sigma_y |xi| against |p|.  Rejects
// measures with a non-deviatoric part (the potential is +inf there).
inline double plastic_potential(const MaterialLaw& law, const ScalarP1Field& alpha,
                                const DiscreteMeasure& p, double tol = 1e-10) {
    detail::require_deviatoric(p);
    const Integrand h = [&law, &alpha](Vec2 x, const SymTensor2& xi) {
        return yield_scale(law, alpha.eval(x)) * law.sigma_y * norm(xi);
    };
    return convex_functional(h, p, tol).value;
}

// Sum of plastic potentials of the increments of `ps` over the given strictly
// increasing index partition, each weighted by the damage at the later node.
// Refining the partition can only increase the value (triangle inequality);
// callers approximate the supremum over partitions by refinement.
inline double dissipation_over_partition(const MaterialLaw& law,
                                         const std::vector<ScalarP1Field>& alphas,
                                         const std::vector<DiscreteMeasure>& ps,
                                         const std::vector<std::size_t>& partition,
                                         double tol = 1e-10) {
    if (alphas.size() != ps.size())
        throw std::invalid_argument("dissipation_over_partition: trajectory length mismatch");
    for (std::size_t j = 0; j < partition.size(); ++j) {
        if (partition[j] >= ps.size())
            throw std::invalid_argument("dissipation_over_partition: partition index out of range");
        if (j > 0 && partition[j] <= partition[j - 1])
            throw std::invalid_argument("dissipation_over_partition: partition must increase");
    }
    double acc = 0.0;
    for (std::size_t j = 1; j < partition.size(); ++j) {
        const DiscreteMeasure inc =
            add(ps[partition[j]], scaled(ps[partition[j - 1]], -1.0));
        acc += plastic_potential(law, alphas[partition[j]], inc, tol);
    }
    return acc;
}

// ----------------------------------------------------------------------------
// Admissible mechanical states.  Displacements are P1 on the mesh, elastic
// and plastic strains are per-triangle constants, and the plastic measure
// carries an extra line part on the Dirichlet boundary whose density at each
// edge endpoint is (w - u) (.) nu: the relaxed form of the boundary
// condition, which permits boundary slip at a dissipation cost.

struct AffineMap {
    double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;
    Vec2 shift{0.0, 0.0};

    Vec2 operator()(Vec2 x) const {
        return {a11 * x.x + a12 * x.y + shift.x, a21 * x.x + a22 * x.y + shift.y};
    }
    SymTensor2 sym_gradient() const { return {a11, a22, 0.5 * (a12 + a21)}; }
    AffineMap scaled(double c) const {
        return {c * a11, c * a12, c * a21, c * a22, {c * shift.x, c * shift.y}};
    }
};

struct AdmissibleTriple {
    std::shared_ptr<const Mesh> mesh;
    std::vector<Vec2> u;                           // per-vertex displacement
    std::vector<SymTensor2> e;                     // per-triangle elastic strain
    std::vector<SymTensor2> p;                     // per-triangle plastic strain
    std::vector<std::array<SymTensor2, 2>> p_bd;   // per boundary edge, endpoint densities
};

inline AdmissibleTriple zero_triple(std::shared_ptr<const Mesh> mesh) {
    AdmissibleTriple t;
    t.mesh = std::move(mesh);
    t.u.assign(t.mesh->n_vertices(), Vec2{0.0, 0.0});
    t.e.assign(t.mesh->n_triangles(), SymTensor2{});
    t.p.assign(t.mesh->n_triangles(), SymTensor2{});
    t.p_bd.assign(t.mesh->boundary.size(), {SymTensor2{}, SymTensor2{}});
    return t;
}

inline SymTensor2 p1_tri_sym_gradient(const Mesh& mesh, const std::vector<Vec2>& u,
                                      int t) {
    const auto verts = mesh.tri_vertices(t);
    const auto grads = detail::barycentric_gradients(mesh.tri_coords(t));
    SymTensor2 s{};
    for (int i = 0; i < 3; ++i) {
        const SymTensor2 c = sym_outer(u[verts[i]], grads[i]);
        s.xx += c.xx;
        s.yy += c.yy;
        s.xy += c.xy;
    }
    return s;
}

struct AdmissibleReport {
    bool pass = false;
    double residual_strain = 0.0;    // max |E u - e - p| over triangles
    double residual_boundary = 0.0;  // max |p_bd - (w - u) (.) nu| over edge endpoints
};

inline AdmissibleReport admissible_check(const AdmissibleTriple& triple,
                                         const AffineMap& w, double tol) {
    const Mesh& mesh = *triple.mesh;
    if (triple.u.size() != static_cast<std::size_t>(mesh.n_vertices()) ||
        triple.e.size() != static_cast<std::size_t>(mesh.n_triangles()) ||
        triple.p.size() != static_cast<std::size_t>(mesh.n_triangles()) ||
        triple.p_bd.size() != mesh.boundary.size())
        throw std::invalid_argument("admissible_check: array sizes do not match the mesh");
    AdmissibleReport rep;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const SymTensor2 s = p1_tri_sym_gradient(mesh, triple.u, t);
        const SymTensor2 r{s.xx - triple.e[t].xx - triple.p[t].xx,
                           s.yy - triple.e[t].yy - triple.p[t].yy,
                           s.xy - triple.e[t].xy - triple.p[t].xy};
        rep.residual_strain = std::max(rep.residual_strain, norm(r));
    }
    for (std::size_t b = 0; b < mesh.boundary.size(); ++b) {
        const BoundaryEdge& edge = mesh.boundary[b];
        const std::array<int, 2> verts{edge.v0, edge.v1};
        for (int i = 0; i < 2; ++i) {
            SymTensor2 want{};
            if (edge.label == BoundaryLabel::Dirichlet) {
                const Vec2 x = mesh.vertex(verts[i]);
                const Vec2 gap = w(x) - triple.u[verts[i]];
                want = sym_outer(gap, edge.normal);
            }
            const SymTensor2 r{triple.p_bd[b][i].xx - want.xx,
                               triple.p_bd[b][i].yy - want.yy,
                               triple.p_bd[b][i].xy - want.xy};
            rep.residual_boundary = std::max(rep.residual_boundary, norm(r));
        }
    }
    rep.pass = rep.residual_strain <= tol && rep.residual_boundary <= tol;
    return rep;
}

struct StressReport {
    bool pass = false;
    double max_violation = 0.0;  // max over triangles of |dev sigma| - V(alpha) sigma_y
};

inline StressReport stress_constraint_check(const MaterialLaw& law,
                                            const ScalarP1Field& alpha,
                                            const std::vector<SymTensor2>& e,
                                            double tol) {
    const Mesh& mesh = *alpha.mesh;
    if (e.size() != static_cast<std::size_t>(mesh.n_triangles()))
        throw std::invalid_argument("stress_constraint_check: strain array does not match the mesh");
    StressReport rep;
    rep.max_violation = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const double a = detail::tri_mean(alpha, t);
        const SymTensor2 sigma = apply_elasticity(law, a, e[t]);
        const double v = norm(dev(sigma)) - yield_scale(law, a) * law.sigma_y;
        rep.max_violation = std::max(rep.max_violation, v);
    }
    rep.pass = rep.max_violation <= tol;
    return rep;
}

// ----------------------------------------------------------------------------
// Local return map: the closed-form minimizer over trace-free p of
//   (1/2) C(alpha)(trial - p) : (trial - p) + V(alpha) sigma_y |p - p_prev|.
// With s_tr = 2 mu0 g(alpha) (dev(trial) - p_prev) and y = V(alpha) sigma_y:
// stay elastic when |s_tr| <= y, otherwise slide back onto the yield surface
// along s_tr.  The plastic state is built from its two deviatoric
// coordinates, so its trace is a floating-point-exact zero.

struct ReturnMapResult {
    SymTensor2 e;
    SymTensor2 p;
};

inline ReturnMapResult return_map(const MaterialLaw& law, double alpha,
                                  const SymTensor2& trial, const SymTensor2& p_prev) {
    detail::require_unit_interval(alpha, "return_map");
    if (std::abs(trace(p_prev)) > detail::kTraceGate)
        throw std::invalid_argument("return_map: previous plastic strain is not deviatoric");
    const double g = degradation(law, alpha);
    const double y = yield_scale(law, alpha) * law.sigma_y;
    // deviatoric coordinates (a, b) <-> [[a, b], [b, -a]]
    const double da = 0.5 * (trial.xx - trial.yy) - p_prev.xx;
    const double db = trial.xy - p_prev.xy;
    const double s_norm = 2.0 * law.mu0 * g * std::sqrt(2.0 * (da * da + db * db));
    ReturnMapResult out;
    if (s_norm <= y) {
        out.p = p_prev;
    } else {
        // (s_norm - y)/(2 mu0 g) is |p - p_prev|; distribute it along the
        // unit direction of s_tr, whose coordinate norm is sqrt(2(da^2+db^2)).
        const double step = (s_norm - y) / (2.0 * law.mu0 * g) /
                            std::sqrt(2.0 * (da * da + db * db));
        const double pa = p_prev.xx + step * da;
        const double pb = p_prev.xy + step * db;
        out.p = SymTensor2{pa, -pa, pb};
    }
    out.e = SymTensor2{trial.xx - out.p.xx, trial.yy - out.p.yy, trial.xy - out.p.xy};
    return out;
}

}  // namespace reshlab
