#pragma once

// Quasistatic evolution by time-incremental energy minimization.
//
// Each time step minimizes
//
//     Q(alpha, e) + D(alpha) + gradient_term(alpha)
//       + H(alpha; p - p_prev) + boundary slip dissipation
//
// over admissible triples (u, e, p) and damage fields alpha <= alpha_prev,
// by alternating two convex solves:
//
//  * mechanical: with alpha frozen, eliminating (e, p) through the local
//    return map leaves a C^1 convex "envelope" energy in u alone, plus a
//    nonsmooth boundary term for slip against the datum.  Minimized by an
//    accelerated proximal-gradient loop (momentum with gradient restart);
//    the boundary prox splits per vertex into one- or two-cone problems.
//  * damage: with the mechanical increments frozen the energy is linear in
//    alpha plus the convex gradient term; projected gradient with
//    backtracking on the box 0 <= alpha <= alpha_prev (monotonicity of the
//    damage variable is enforced exactly by the projection).
//
// The driver `evolve` records per-step energies, dissipation, external work
// (trapezoidal in time with the exact datum rate) and the energy-balance
// residual; `stability_audit` samples random admissible competitors and
// reports the worst stability slack.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "reshlab/errors.hpp"
#include "reshlab/mesh.hpp"
#include "reshlab/plasticity.hpp"

namespace reshlab {

struct SolverTolerances {
    double tol_am = 1e-10;  // alternating sweep: relative energy decrease
    double tol_cg = 1e-9;   // mechanical solve: fixed-point residual, relative
    double tol_pg = 1e-10;  // damage solve: projected-gradient (KKT) residual
    double tol_adm = 1e-9;  // admissibility check on returned triples
    double tol_qs1 = 1e-6;  // stability slack, relative to the energy scale
    int max_mech_iters = 50000;
    int max_damage_iters = 20000;
    int max_sweeps = 60;
};

enum class LoadProfile { linear, quadratic };

// The boundary datum is w(t, x) = load_scale(t) * datum_shape(x); the shape
// carries the loading amplitude, the profile only its time dependence.
struct RunConfig {
    Rect domain{-1.0, -1.0, 1.0, 1.0};
    int nx = 16;
    int ny = 16;
    double horizon = 0.5;  // final time
    int steps = 40;
    AffineMap datum_shape{0.0, 0.2, 0.0, 0.0, Vec2{0.0, 0.0}};
    LoadProfile profile = LoadProfile::linear;
    MaterialLaw law{};
    SolverTolerances tol{};
    bool damage_first = false;
    std::uint64_t seed = 1234;
    int audit_competitors = 0;  // 0 disables the per-step stability audit
    int snapshot_every = 0;     // 0 disables field snapshots (driver concern)
};

inline double load_scale(const RunConfig& cfg, double t) {
    return cfg.profile == LoadProfile::linear ? t : t * t;
}

inline double load_rate(const RunConfig& cfg, double t) {
    return cfg.profile == LoadProfile::linear ? 1.0 : 2.0 * t;
}

// ---------------------------------------------------------------------------
// Plastic increments between two states (the data entering H).

struct PlasticIncrement {
    std::vector<double> tri;                 // |p_T - p_prev_T| per triangle
    std::vector<std::array<double, 2>> bd;   // per boundary (edge, endpoint)
};

inline PlasticIncrement plastic_increment(const AdmissibleTriple& now,
                                          const AdmissibleTriple& prev) {
    if (now.mesh != prev.mesh)
        throw std::invalid_argument("plastic_increment: states live on different meshes");
    PlasticIncrement inc;
    inc.tri.resize(now.p.size());
    for (std::size_t t = 0; t < now.p.size(); ++t) {
        inc.tri[t] = norm(SymTensor2{now.p[t].xx - prev.p[t].xx, now.p[t].yy - prev.p[t].yy,
                                     now.p[t].xy - prev.p[t].xy});
    }
    inc.bd.resize(now.p_bd.size());
    for (std::size_t b = 0; b < now.p_bd.size(); ++b) {
        for (int i = 0; i < 2; ++i) {
            const SymTensor2& a = now.p_bd[b][i];
            const SymTensor2& o = prev.p_bd[b][i];
            inc.bd[b][i] = norm(SymTensor2{a.xx - o.xx, a.yy - o.yy, a.xy - o.xy});
        }
    }
    return inc;
}

// H(alpha; inc): damage-weighted plastic dissipation of one increment.
// Interior parts use the centroid damage value (consistent with
// elastic_energy); boundary parts are vertex-lumped on each half-edge.
inline double dissipation_increment(const MaterialLaw& law, const ScalarP1Field& alpha,
                                    const PlasticIncrement& inc) {
    const Mesh& mesh = *alpha.mesh;
    if (inc.tri.size() != static_cast<std::size_t>(mesh.n_triangles()) ||
        inc.bd.size() != mesh.boundary.size())
        throw std::invalid_argument("dissipation_increment: increment/mesh size mismatch");
    double h = 0.0;
    const double area = mesh.tri_area();
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        if (inc.tri[t] == 0.0) continue;
        h += area * yield_scale(law, detail::tri_mean(alpha, t)) * law.sigma_y * inc.tri[t];
    }
    for (std::size_t b = 0; b < mesh.boundary.size(); ++b) {
        const BoundaryEdge& edge = mesh.boundary[b];
        if (edge.label != BoundaryLabel::Dirichlet) continue;
        const double half = 0.5 * norm(mesh.vertex(edge.v1) - mesh.vertex(edge.v0));
        const int vs[2] = {edge.v0, edge.v1};
        for (int i = 0; i < 2; ++i) {
            if (inc.bd[b][i] == 0.0) continue;
            h += half * yield_scale(law, alpha.values[vs[i]]) * law.sigma_y * inc.bd[b][i];
        }
    }
    return h;
}

inline double total_stored(const MaterialLaw& law, const ScalarP1Field& alpha,
                           const AdmissibleTriple& triple) {
    return elastic_energy(law, alpha, triple.e) + damage_dissipation(law, alpha) +
           gradient_term(law, alpha);
}

namespace detail {

inline Vec2 rot90(Vec2 v) { return {-v.y, v.x}; }

// |sym_outer(x, nu)| for unit nu: sqrt(x_n^2 + x_t^2 / 2).  This is the norm
// the boundary slip pays per unit length of edge.
inline double slip_norm(Vec2 x, Vec2 nu) {
    const double xn = dot(x, nu);
    const double xt = dot(x, rot90(nu));
    return std::sqrt(xn * xn + 0.5 * xt * xt);
}

// prox of lambda * slip_norm(., nu) at zeta.  Zero iff the dual norm of
// zeta is within lambda; otherwise the prox magnitude m = slip_norm(x)
// solves a scalar monotone equation, bracketed and bisected to rounding.
inline Vec2 prox_slip(Vec2 zeta, Vec2 nu, double lambda) {
    const Vec2 tau = rot90(nu);
    const double zn = dot(zeta, nu), zt = dot(zeta, tau);
    if (std::sqrt(zn * zn + 2.0 * zt * zt) <= lambda) return {0.0, 0.0};
    auto psi = [&](double m) {
        const double an = zn / (m + lambda);
        const double at = zt / (2.0 * m + lambda);
        return an * an + 2.0 * at * at - 1.0;
    };
    double lo = 0.0, hi = std::sqrt(zn * zn + 0.5 * zt * zt);
    for (int guard = 0; guard < 60 && psi(hi) > 0.0; ++guard) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (psi(mid) > 0.0 ? lo : hi) = mid;
    }
    const double m = 0.5 * (lo + hi);
    const double xn = zn * m / (m + lambda);
    const double xt = zt * 2.0 * m / (2.0 * m + lambda);
    return xn * nu + xt * tau;
}

// Extract the slip vector d from a boundary plastic tensor of the form
// sym_outer(d, nu).
inline Vec2 slip_of(const SymTensor2& p, Vec2 nu) {
    const Vec2 tau = rot90(nu);
    const Vec2 pn{p.xx * nu.x + p.xy * nu.y, p.xy * nu.x + p.yy * nu.y};
    return dot(pn, nu) * nu + 2.0 * dot(pn, tau) * tau;
}

// One cone of the per-vertex boundary objective: kappa * slip_norm(q - c, nu).
struct SlipCone {
    Vec2 nu;
    Vec2 q;        // datum minus accumulated slip at this vertex
    double kappa;  // half edge length * V(alpha) * sigma_y
};

// prox of step * (sum of cones) at z.  One cone is closed-form; two cones
// (corners, or inconsistent accumulated slips) run a proximal splitting
// with correction terms, which converges for convex summands.
inline Vec2 prox_boundary(Vec2 z, double step, const std::vector<SlipCone>& cones) {
    if (cones.empty()) return z;
    auto prox_one = [&](Vec2 zeta, const SlipCone& c) {
        return c.q - prox_slip(c.q - zeta, c.nu, step * c.kappa);
    };
    if (cones.size() == 1) return prox_one(z, cones[0]);
    if (cones.size() == 2 && norm(cones[0].nu - cones[1].nu) < 1e-12 &&
        norm(cones[0].q - cones[1].q) < 1e-12 * (1.0 + norm(cones[0].q))) {
        SlipCone merged = cones[0];
        merged.kappa += cones[1].kappa;
        return prox_one(z, merged);
    }
    Vec2 x = z, inc1{0.0, 0.0}, inc2{0.0, 0.0};
    for (int it = 0; it < 400; ++it) {
        const Vec2 y = prox_one(x + inc1, cones[0]);
        inc1 = x + inc1 - y;
        const Vec2 xn = prox_one(y + inc2, cones[1]);
        inc2 = y + inc2 - xn;
        const double move = norm(xn - x);
        x = xn;
        if (move <= 1e-15 * (1.0 + norm(x))) break;
    }
    return x;
}

// Per-mesh geometry tables shared by the solvers.
struct MeshTables {
    std::vector<std::array<int, 3>> tv;
    std::vector<std::array<Vec2, 3>> tg;  // barycentric gradients
    double area = 0.0;
    // Boundary terms grouped by vertex: entry (edge index, endpoint index).
    std::vector<int> bd_vertex;                          // vertices with terms
    std::vector<std::vector<std::array<int, 2>>> bd_of;  // parallel to bd_vertex
    std::vector<int> bd_slot;                            // vertex -> slot or -1

    explicit MeshTables(const Mesh& mesh) {
        area = mesh.tri_area();
        tv.resize(mesh.n_triangles());
        tg.resize(mesh.n_triangles());
        for (int t = 0; t < mesh.n_triangles(); ++t) {
            tv[t] = mesh.tri_vertices(t);
            tg[t] = barycentric_gradients(mesh.tri_coords(t));
        }
        bd_slot.assign(mesh.n_vertices(), -1);
        for (std::size_t b = 0; b < mesh.boundary.size(); ++b) {
            if (mesh.boundary[b].label != BoundaryLabel::Dirichlet) continue;
            const int vs[2] = {mesh.boundary[b].v0, mesh.boundary[b].v1};
            for (int i = 0; i < 2; ++i) {
                if (bd_slot[vs[i]] < 0) {
                    bd_slot[vs[i]] = static_cast<int>(bd_vertex.size());
                    bd_vertex.push_back(vs[i]);
                    bd_of.emplace_back();
                }
                bd_of[bd_slot[vs[i]]].push_back({static_cast<int>(b), i});
            }
        }
    }
};

// Largest eigenvalue of a symmetric positive semidefinite operator by power
// iteration with a fixed internal seed (runs must be bit-reproducible).
template <typename Apply>
double power_iteration(Apply&& apply, std::size_t n, int iters = 80) {
    std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n), kv(n);
    for (auto& x : v) x = u(rng);
    double lam = 0.0;
    for (int it = 0; it < iters; ++it) {
        double nv = 0.0;
        for (double x : v) nv += x * x;
        nv = std::sqrt(nv);
        if (nv < 1e-300) break;
        for (auto& x : v) x /= nv;
        apply(v, kv);
        lam = 0.0;
        for (double x : kv) lam += x * x;
        lam = std::sqrt(lam);
        v.swap(kv);
    }
    return lam;
}

// Upper bound for the Lipschitz constant of the mechanical gradient: the
// undamaged elastic stiffness dominates the return-map envelope's Hessian
// (the envelope is an inf-convolution against the same quadratic), and
// degradation only scales the form down.
inline double mechanical_lipschitz(const MaterialLaw& law, const MeshTables& ws,
                                   std::size_t n_vertices) {
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t t = 0; t < ws.tv.size(); ++t) {
            SymTensor2 e{};
            for (int i = 0; i < 3; ++i) {
                const Vec2 uv{in[2 * ws.tv[t][i]], in[2 * ws.tv[t][i] + 1]};
                const SymTensor2 s = sym_outer(uv, ws.tg[t][i]);
                e.xx += s.xx;
                e.yy += s.yy;
                e.xy += s.xy;
            }
            const SymTensor2 sig = apply_elasticity(law, 1.0, e);
            for (int i = 0; i < 3; ++i) {
                const Vec2 g = ws.tg[t][i];
                out[2 * ws.tv[t][i]] += ws.area * (sig.xx * g.x + sig.xy * g.y);
                out[2 * ws.tv[t][i] + 1] += ws.area * (sig.xy * g.x + sig.yy * g.y);
            }
        }
    };
    return 1.05 * power_iteration(apply, 2 * n_vertices);
}

inline double laplacian_lipschitz(const MeshTables& ws, std::size_t n_vertices) {
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t t = 0; t < ws.tv.size(); ++t) {
            Vec2 g{0.0, 0.0};
            for (int i = 0; i < 3; ++i) g = g + in[ws.tv[t][i]] * ws.tg[t][i];
            for (int i = 0; i < 3; ++i) out[ws.tv[t][i]] += ws.area * dot(g, ws.tg[t][i]);
        }
    };
    return 1.05 * power_iteration(apply, n_vertices);
}

}  // namespace detail

// Cached Lipschitz estimates, reusable across steps on a fixed mesh.
struct SolverCache {
    double mech_lipschitz = 0.0;
    double damage_lipschitz = 0.0;
};

// ---------------------------------------------------------------------------
// Mechanical solve: minimize over u the return-map envelope energy plus the
// boundary slip dissipation, with alpha and the previous plastic state fixed.

struct MechanicalSolve {
    AdmissibleTriple triple;
    double energy = 0.0;  // envelope + boundary dissipation at the minimizer
    int iterations = 0;
    double residual = 0.0;
};

inline MechanicalSolve minimize_mechanical(const MaterialLaw& law, const ScalarP1Field& alpha,
                                           const AdmissibleTriple& prev, const AffineMap& datum,
                                           const SolverTolerances& tol,
                                           double lipschitz_hint = 0.0,
                                           const std::vector<Vec2>* warm_start = nullptr) {
    const Mesh& mesh = *prev.mesh;
    if (alpha.mesh.get() != prev.mesh.get())
        throw std::invalid_argument("minimize_mechanical: alpha and triple mesh differ");
    const detail::MeshTables ws(mesh);
    const int nt = mesh.n_triangles();
    const int nv = mesh.n_vertices();

    std::vector<double> abar(nt), ybar(nt);
    for (int t = 0; t < nt; ++t) {
        abar[t] = detail::tri_mean(alpha, t);
        ybar[t] = yield_scale(law, abar[t]) * law.sigma_y;
    }

    // Per-boundary-vertex cones.  q = datum - accumulated slip; kappa
    // carries the half edge length and the local yield weight.
    std::vector<std::vector<detail::SlipCone>> cones(ws.bd_vertex.size());
    for (std::size_t s = 0; s < ws.bd_vertex.size(); ++s) {
        const int v = ws.bd_vertex[s];
        const Vec2 xv = mesh.vertex(v);
        const double yv = yield_scale(law, alpha.values[v]) * law.sigma_y;
        for (const auto& [b, i] : ws.bd_of[s]) {
            const BoundaryEdge& edge = mesh.boundary[b];
            const double half = 0.5 * norm(mesh.vertex(edge.v1) - mesh.vertex(edge.v0));
            const Vec2 d_prev = detail::slip_of(prev.p_bd[b][i], edge.normal);
            cones[s].push_back({edge.normal, datum(xv) - d_prev, half * yv});
        }
    }

    const double L = lipschitz_hint > 0.0 ? lipschitz_hint
                                          : detail::mechanical_lipschitz(law, ws, nv);

    auto smooth_grad = [&](const std::vector<Vec2>& u, std::vector<Vec2>& grad) {
        double energy = 0.0;
        std::fill(grad.begin(), grad.end(), Vec2{0.0, 0.0});
        for (int t = 0; t < nt; ++t) {
            SymTensor2 trial{};
            for (int i = 0; i < 3; ++i) {
                const SymTensor2 s = sym_outer(u[ws.tv[t][i]], ws.tg[t][i]);
                trial.xx += s.xx;
                trial.yy += s.yy;
                trial.xy += s.xy;
            }
            const ReturnMapResult rm = return_map(law, abar[t], trial, prev.p[t]);
            const SymTensor2 sig = apply_elasticity(law, abar[t], rm.e);
            const SymTensor2 dp{rm.p.xx - prev.p[t].xx, rm.p.yy - prev.p[t].yy,
                                rm.p.xy - prev.p[t].xy};
            energy += ws.area * (strain_energy_density(law, abar[t], rm.e) + ybar[t] * norm(dp));
            for (int i = 0; i < 3; ++i) {
                const Vec2 g = ws.tg[t][i];
                grad[ws.tv[t][i]] =
                    grad[ws.tv[t][i]] +
                    Vec2{ws.area * (sig.xx * g.x + sig.xy * g.y),
                         ws.area * (sig.xy * g.x + sig.yy * g.y)};
            }
        }
        return energy;
    };
    auto boundary_energy = [&](const std::vector<Vec2>& u) {
        double e = 0.0;
        for (std::size_t s = 0; s < ws.bd_vertex.size(); ++s)
            for (const auto& c : cones[s])
                e += c.kappa * detail::slip_norm(c.q - u[ws.bd_vertex[s]], c.nu);
        return e;
    };
    auto prox_all = [&](const std::vector<Vec2>& z, std::vector<Vec2>& out) {
        out = z;
        for (std::size_t s = 0; s < ws.bd_vertex.size(); ++s)
            out[ws.bd_vertex[s]] =
                detail::prox_boundary(z[ws.bd_vertex[s]], 1.0 / L, cones[s]);
    };

    std::vector<Vec2> x = warm_start ? *warm_start : prev.u;
    if (x.size() != static_cast<std::size_t>(nv))
        throw std::invalid_argument("minimize_mechanical: warm start has the wrong size");
    std::vector<Vec2> xold = x, y = x;
    std::vector<Vec2> grad(nv), z(nv), xnew(nv), confirm(nv);
    const double scale = std::max(1.0, smooth_grad(x, grad) + boundary_energy(x));
    double theta = 1.0;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    bool converged = false;

    auto fixed_point_residual = [&](const std::vector<Vec2>& u, std::vector<Vec2>& image) {
        smooth_grad(u, grad);
        for (int v = 0; v < nv; ++v) z[v] = u[v] - (1.0 / L) * grad[v];
        prox_all(z, image);
        double r = 0.0;
        for (int v = 0; v < nv; ++v) {
            const Vec2 d = u[v] - image[v];
            r += dot(d, d);
        }
        return L * std::sqrt(r);
    };

    for (iterations = 0; iterations < tol.max_mech_iters; ++iterations) {
        smooth_grad(y, grad);
        for (int v = 0; v < nv; ++v) z[v] = y[v] - (1.0 / L) * grad[v];
        prox_all(z, xnew);

        double proxy = 0.0, restart_dot = 0.0;
        for (int v = 0; v < nv; ++v) {
            const Vec2 dy = xnew[v] - y[v];
            proxy += dot(dy, dy);
            restart_dot += dot(y[v] - xnew[v], xnew[v] - x[v]);
        }
        proxy = L * std::sqrt(proxy);

        const double theta_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
        const double beta = restart_dot > 0.0 ? 0.0 : (theta - 1.0) / theta_new;
        theta = restart_dot > 0.0 ? 1.0 : theta_new;
        xold.swap(x);
        x = xnew;
        for (int v = 0; v < nv; ++v) y[v] = x[v] + beta * (x[v] - xold[v]);

        if (proxy <= tol.tol_cg * scale) {
            residual = fixed_point_residual(x, confirm);
            if (residual <= tol.tol_cg * scale) {
                x = confirm;  // one more descent step, then accept
                converged = true;
                break;
            }
            y = x;  // the confirm step moved the iterate; drop momentum
            theta = 1.0;
        }
    }
    if (!converged) {
        residual = fixed_point_residual(x, confirm);
        if (residual > tol.tol_cg * scale)
            throw solver_error("minimize_mechanical: iteration cap reached", residual);
        x = confirm;
    }

    MechanicalSolve out;
    out.triple.mesh = prev.mesh;
    out.triple.u = x;
    out.triple.e.resize(nt);
    out.triple.p.resize(nt);
    double energy = 0.0;
    for (int t = 0; t < nt; ++t) {
        SymTensor2 trial{};
        for (int i = 0; i < 3; ++i) {
            const SymTensor2 s = sym_outer(x[ws.tv[t][i]], ws.tg[t][i]);
            trial.xx += s.xx;
            trial.yy += s.yy;
            trial.xy += s.xy;
        }
        const ReturnMapResult rm = return_map(law, abar[t], trial, prev.p[t]);
        out.triple.e[t] = rm.e;
        out.triple.p[t] = rm.p;
        const SymTensor2 dp{rm.p.xx - prev.p[t].xx, rm.p.yy - prev.p[t].yy,
                            rm.p.xy - prev.p[t].xy};
        energy += ws.area * (strain_energy_density(law, abar[t], rm.e) + ybar[t] * norm(dp));
    }
    out.triple.p_bd.assign(mesh.boundary.size(), {SymTensor2{}, SymTensor2{}});
    for (std::size_t b = 0; b < mesh.boundary.size(); ++b) {
        const BoundaryEdge& edge = mesh.boundary[b];
        if (edge.label != BoundaryLabel::Dirichlet) continue;
        const int vs[2] = {edge.v0, edge.v1};
        for (int i = 0; i < 2; ++i)
            out.triple.p_bd[b][i] =
                sym_outer(datum(mesh.vertex(vs[i])) - x[vs[i]], edge.normal);
    }
    out.energy = energy + boundary_energy(x);
    out.iterations = iterations;
    out.residual = residual;

    const AdmissibleReport rep = admissible_check(out.triple, datum, tol.tol_adm);
    if (!rep.pass)
        throw consistency_error("minimize_mechanical: result fails the admissibility check");
    return out;
}

// ---------------------------------------------------------------------------
// Damage solve: minimize Q + D + gradient_term + H(.; inc) over the box
// 0 <= alpha <= alpha_prev by projected gradient with backtracking.

struct DamageSolve {
    ScalarP1Field alpha;
    double energy = 0.0;
    int iterations = 0;
    double kkt_residual = 0.0;
};

inline DamageSolve minimize_damage(const MaterialLaw& law, const AdmissibleTriple& triple,
                                   const PlasticIncrement& inc, const ScalarP1Field& alpha_prev,
                                   const SolverTolerances& tol, double lipschitz_hint = 0.0,
                                   const ScalarP1Field* warm_start = nullptr) {
    const Mesh& mesh = *triple.mesh;
    if (alpha_prev.mesh.get() != triple.mesh.get())
        throw std::invalid_argument("minimize_damage: alpha_prev and triple mesh differ");
    const detail::MeshTables ws(mesh);
    const int nt = mesh.n_triangles();
    const int nv = mesh.n_vertices();

    // Linear coefficients: dF/d(alpha_v) from the centroid terms.  W0 is the
    // undegraded strain energy density, so d/dalpha of g(alpha) W0 is
    // (1 - eps0) W0.
    std::vector<double> w0(nt);
    for (int t = 0; t < nt; ++t)
        w0[t] = strain_energy_density(law, 1.0, triple.e[t]) / degradation(law, 1.0);
    std::vector<double> lin(nv, 0.0);
    for (int t = 0; t < nt; ++t) {
        const double c = ws.area / 3.0 *
                         ((1.0 - law.eps0) * w0[t] - law.kappa_d +
                          (law.c2 - law.c1) * law.sigma_y * inc.tri[t]);
        for (int i = 0; i < 3; ++i) lin[ws.tv[t][i]] += c;
    }
    for (std::size_t b = 0; b < mesh.boundary.size(); ++b) {
        const BoundaryEdge& edge = mesh.boundary[b];
        if (edge.label != BoundaryLabel::Dirichlet) continue;
        const double half = 0.5 * norm(mesh.vertex(edge.v1) - mesh.vertex(edge.v0));
        const int vs[2] = {edge.v0, edge.v1};
        for (int i = 0; i < 2; ++i)
            lin[vs[i]] += half * (law.c2 - law.c1) * law.sigma_y * inc.bd[b][i];
    }
    // Constant offset so objective() returns the true incremental energy.
    double offset = 0.0;
    for (int t = 0; t < nt; ++t)
        offset += ws.area * (law.eps0 * w0[t] + law.kappa_d +
                             law.c1 * law.sigma_y * inc.tri[t]);
    for (std::size_t b = 0; b < mesh.boundary.size(); ++b) {
        const BoundaryEdge& edge = mesh.boundary[b];
        if (edge.label != BoundaryLabel::Dirichlet) continue;
        const double half = 0.5 * norm(mesh.vertex(edge.v1) - mesh.vertex(edge.v0));
        for (int i = 0; i < 2; ++i)
            offset += half * law.c1 * law.sigma_y * inc.bd[b][i];
    }

    auto laplacian = [&](const std::vector<double>& a, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (int t = 0; t < nt; ++t) {
            Vec2 g{0.0, 0.0};
            for (int i = 0; i < 3; ++i) g = g + a[ws.tv[t][i]] * ws.tg[t][i];
            for (int i = 0; i < 3; ++i) out[ws.tv[t][i]] += ws.area * dot(g, ws.tg[t][i]);
        }
    };
    auto objective = [&](const std::vector<double>& a) {
        double f = offset;
        for (int v = 0; v < nv; ++v) f += lin[v] * a[v];
        double quad = 0.0;
        for (int t = 0; t < nt; ++t) {
            Vec2 g{0.0, 0.0};
            for (int i = 0; i < 3; ++i) g = g + a[ws.tv[t][i]] * ws.tg[t][i];
            quad += ws.area * dot(g, g);
        }
        return f + law.grad_weight * quad;
    };
    auto gradient = [&](const std::vector<double>& a, std::vector<double>& out) {
        laplacian(a, out);
        for (int v = 0; v < nv; ++v) out[v] = lin[v] + 2.0 * law.grad_weight * out[v];
    };
    auto project = [&](std::vector<double>& a) {
        for (int v = 0; v < nv; ++v) a[v] = std::clamp(a[v], 0.0, alpha_prev.values[v]);
    };

    const double L =
        std::max(lipschitz_hint > 0.0 ? lipschitz_hint
                                      : 2.0 * law.grad_weight * detail::laplacian_lipschitz(ws, nv),
                 1e-12);

    std::vector<double> a = warm_start ? warm_start->values : alpha_prev.values;
    if (a.size() != static_cast<std::size_t>(nv))
        throw std::invalid_argument("minimize_damage: warm start has the wrong size");
    project(a);
    std::vector<double> g(nv), trial(nv), kkt(nv);
    double f = objective(a);
    const double scale = std::max(1.0, std::abs(f));
    double step = 1.0 / L;
    int iterations = 0;
    double kkt_residual = std::numeric_limits<double>::infinity();

    for (iterations = 0; iterations < tol.max_damage_iters; ++iterations) {
        gradient(a, g);
        // Unit-step projected-gradient residual: zero exactly at a KKT point
        // of the box-constrained problem.
        kkt_residual = 0.0;
        for (int v = 0; v < nv; ++v) {
            const double proj = std::clamp(a[v] - g[v], 0.0, alpha_prev.values[v]);
            kkt_residual = std::max(kkt_residual, std::abs(a[v] - proj));
        }
        if (kkt_residual <= tol.tol_pg * scale) break;

        bool accepted = false;
        for (int back = 0; back < 60; ++back) {
            for (int v = 0; v < nv; ++v) trial[v] = a[v] - step * g[v];
            project(trial);
            double lhs = objective(trial), quad = 0.0, inner = 0.0;
            for (int v = 0; v < nv; ++v) {
                const double d = trial[v] - a[v];
                inner += g[v] * d;
                quad += d * d;
            }
            if (lhs <= f + inner + quad / (2.0 * step) + 1e-15 * scale) {
                a.swap(trial);
                f = lhs;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted)
            throw solver_error("minimize_damage: backtracking failed", kkt_residual);
        step = std::min(step * 1.3, 16.0 / L);
    }
    if (kkt_residual > tol.tol_pg * scale)
        throw solver_error("minimize_damage: iteration cap reached", kkt_residual);

    DamageSolve out;
    out.alpha = ScalarP1Field{triple.mesh, std::move(a)};
    out.energy = f;
    out.iterations = iterations;
    out.kkt_residual = kkt_residual;
    return out;
}

// ---------------------------------------------------------------------------
// One incremental step: alternate the two solves until the total incremental
// energy stalls.

struct EvolutionState {
    double t = 0.0;
    ScalarP1Field alpha;
    AdmissibleTriple triple;
    double elastic = 0.0;
    double damage_term = 0.0;
    double grad_term = 0.0;
    double diss_step = 0.0;
    double diss_cum = 0.0;
};

inline EvolutionState initial_state(std::shared_ptr<const Mesh> mesh) {
    EvolutionState s;
    s.alpha = ScalarP1Field{mesh, std::vector<double>(mesh->n_vertices(), 1.0)};
    s.triple = zero_triple(std::move(mesh));
    return s;
}

inline EvolutionState incremental_step(const EvolutionState& prev, double t,
                                       const RunConfig& cfg, SolverCache* cache = nullptr) {
    const AffineMap datum = cfg.datum_shape.scaled(load_scale(cfg, t));
    const double mech_hint = cache ? cache->mech_lipschitz : 0.0;
    const double dmg_hint = cache ? cache->damage_lipschitz : 0.0;

    ScalarP1Field alpha = prev.alpha;
    AdmissibleTriple triple = prev.triple;
    {
        // The warm start keeps the previous displacement, so its boundary
        // plastic part must be re-booked against the new datum before the
        // composite energy of the sweep-0 reference means anything.
        const Mesh& mesh = *triple.mesh;
        for (std::size_t b = 0; b < mesh.boundary.size(); ++b) {
            const BoundaryEdge& edge = mesh.boundary[b];
            if (edge.label != BoundaryLabel::Dirichlet) continue;
            const int vs[2] = {edge.v0, edge.v1};
            for (int i = 0; i < 2; ++i)
                triple.p_bd[b][i] =
                    sym_outer(datum(mesh.vertex(vs[i])) - triple.u[vs[i]], edge.normal);
        }
    }
    PlasticIncrement inc = plastic_increment(triple, prev.triple);

    auto sweep_energy = [&]() {
        return total_stored(cfg.law, alpha, triple) +
               dissipation_increment(cfg.law, alpha, inc);
    };

    if (cfg.damage_first) {
        DamageSolve d = minimize_damage(cfg.law, triple, inc, prev.alpha, cfg.tol, dmg_hint);
        alpha = std::move(d.alpha);
    }

    double energy = sweep_energy();
    const double scale = std::max(1.0, std::abs(energy));
    for (int sweep = 0; sweep < cfg.tol.max_sweeps; ++sweep) {
        // Dissipation is always measured from the previous time step, but the
        // iteration warm-starts from the current sweep's displacement.
        MechanicalSolve m = minimize_mechanical(cfg.law, alpha, prev.triple, datum, cfg.tol,
                                                mech_hint, &triple.u);
        triple = std::move(m.triple);
        inc = plastic_increment(triple, prev.triple);

        // The box bound is the previous time step's damage field throughout;
        // sweeps refine the iterate, they do not tighten the constraint.
        DamageSolve d =
            minimize_damage(cfg.law, triple, inc, prev.alpha, cfg.tol, dmg_hint, &alpha);
        alpha = std::move(d.alpha);

        const double e_new = sweep_energy();
        if (e_new > energy + 1e-12 * scale)
            throw consistency_error("incremental_step: energy increased across a sweep");
        const bool stalled = energy - e_new <= cfg.tol.tol_am * scale;
        energy = e_new;
        if (stalled) break;
    }

    EvolutionState out;
    out.t = t;
    out.alpha = std::move(alpha);
    out.triple = std::move(triple);
    out.elastic = elastic_energy(cfg.law, out.alpha, out.triple.e);
    out.damage_term = damage_dissipation(cfg.law, out.alpha);
    out.grad_term = gradient_term(cfg.law, out.alpha);
    out.diss_step = dissipation_increment(cfg.law, out.alpha, inc);
    out.diss_cum = prev.diss_cum + out.diss_step;
    return out;
}

// ---------------------------------------------------------------------------
// Stability audit: sample random admissible competitors (damage craters,
// displacement perturbations, plastic transfers) and report the worst slack
// of the global-stability inequality.  Nonnegative slacks mean no sampled
// competitor beats the current state.

inline double stability_audit(const EvolutionState& state, const RunConfig& cfg,
                              int n_competitors, std::mt19937_64& rng) {
    const Mesh& mesh = *state.triple.mesh;
    const detail::MeshTables ws(mesh);
    const AffineMap datum = cfg.datum_shape.scaled(load_scale(cfg, state.t));
    const double current = state.elastic + state.damage_term + state.grad_term;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);

    double worst = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n_competitors; ++j) {
        // Damage competitor: either the current field or a quartic crater
        // pressed into it (always <= alpha vertex-wise).
        ScalarP1Field ahat = state.alpha;
        if (u01(rng) < 0.75) {
            const Vec2 c{mesh.bounds.x0 + u01(rng) * mesh.bounds.width(),
                         mesh.bounds.y0 + u01(rng) * mesh.bounds.height()};
            const double r =
                (0.15 + 0.3 * u01(rng)) * std::min(mesh.bounds.width(), mesh.bounds.height());
            const double depth = u01(rng);
            for (int v = 0; v < mesh.n_vertices(); ++v) {
                const Vec2 d = mesh.vertex(v) - c;
                const double s = 1.0 - dot(d, d) / (r * r);
                if (s > 0.0)
                    ahat.values[v] =
                        std::clamp(ahat.values[v] - depth * s * s, 0.0, ahat.values[v]);
            }
        }

        // Displacement competitor: current u plus a random vertex field.
        const double amp = std::pow(10.0, -4.0 + 3.5 * u01(rng)) *
                           std::max(0.05, std::abs(load_scale(cfg, state.t)));
        AdmissibleTriple hat;
        hat.mesh = state.triple.mesh;
        hat.u = state.triple.u;
        for (auto& uv : hat.u) uv = uv + amp * Vec2{sym(rng), sym(rng)};

        // Strain split: return-map (optimal transfer) or a random deviatoric
        // transfer on top of the current plastic state.
        const bool rm_split = u01(rng) < 0.5;
        hat.e.resize(mesh.n_triangles());
        hat.p.resize(mesh.n_triangles());
        for (int t = 0; t < mesh.n_triangles(); ++t) {
            SymTensor2 trial{};
            for (int i = 0; i < 3; ++i) {
                const SymTensor2 s = sym_outer(hat.u[ws.tv[t][i]], ws.tg[t][i]);
                trial.xx += s.xx;
                trial.yy += s.yy;
                trial.xy += s.xy;
            }
            if (rm_split) {
                const ReturnMapResult r =
                    return_map(cfg.law, detail::tri_mean(ahat, t), trial, state.triple.p[t]);
                hat.e[t] = r.e;
                hat.p[t] = r.p;
            } else {
                const double a = amp * sym(rng), b = amp * sym(rng);
                hat.p[t] = SymTensor2{state.triple.p[t].xx + a, state.triple.p[t].yy - a,
                                      state.triple.p[t].xy + b};
                hat.e[t] = SymTensor2{trial.xx - hat.p[t].xx, trial.yy - hat.p[t].yy,
                                      trial.xy - hat.p[t].xy};
            }
        }
        hat.p_bd.assign(mesh.boundary.size(), {SymTensor2{}, SymTensor2{}});
        for (std::size_t b = 0; b < mesh.boundary.size(); ++b) {
            const BoundaryEdge& edge = mesh.boundary[b];
            if (edge.label != BoundaryLabel::Dirichlet) continue;
            const int vs[2] = {edge.v0, edge.v1};
            for (int i = 0; i < 2; ++i)
                hat.p_bd[b][i] =
                    sym_outer(datum(mesh.vertex(vs[i])) - hat.u[vs[i]], edge.normal);
        }
        const AdmissibleReport rep = admissible_check(hat, datum, cfg.tol.tol_adm);
        if (!rep.pass)
            throw consistency_error("stability_audit: competitor construction broke admissibility");

        const PlasticIncrement inc = plastic_increment(hat, state.triple);
        const double competitor = total_stored(cfg.law, ahat, hat) +
                                  dissipation_increment(cfg.law, ahat, inc);
        worst = std::min(worst, competitor - current);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Evolution driver.

struct StepRow {
    double t = 0.0;
    double elastic = 0.0;
    double damage = 0.0;
    double grad = 0.0;
    double diss_step = 0.0;
    double diss_cum = 0.0;
    double work = 0.0;
    double balance_residual = 0.0;
    double min_alpha = 0.0;
    double p_mass = 0.0;
    double stress_violation = 0.0;
};

struct EvolveResult {
    std::vector<EvolutionState> states;  // index i is time t_i
    std::vector<StepRow> rows;
    double worst_slack = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double external_power(const RunConfig& cfg, const EvolutionState& st) {
    const SymTensor2 shape = cfg.datum_shape.sym_gradient();
    const Mesh& mesh = *st.triple.mesh;
    double s = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        const SymTensor2 sig =
            apply_elasticity(cfg.law, tri_mean(st.alpha, t), st.triple.e[t]);
        s += mesh.tri_area() * contract(sig, shape);
    }
    return load_rate(cfg, st.t) * s;
}

inline double plastic_mass(const AdmissibleTriple& triple) {
    const Mesh& mesh = *triple.mesh;
    double m = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) m += mesh.tri_area() * norm(triple.p[t]);
    for (std::size_t b = 0; b < mesh.boundary.size(); ++b) {
        const double half =
            0.5 * norm(mesh.vertex(mesh.boundary[b].v1) - mesh.vertex(mesh.boundary[b].v0));
        m += half * (norm(triple.p_bd[b][0]) + norm(triple.p_bd[b][1]));
    }
    return m;
}

}  // namespace detail

inline EvolveResult evolve(const RunConfig& cfg) {
    validate_law(cfg.law);
    if (cfg.steps < 1) throw std::invalid_argument("evolve: steps must be >= 1");
    if (cfg.horizon <= 0.0) throw std::invalid_argument("evolve: horizon must be positive");
    auto mesh = make_mesh(cfg.domain, cfg.nx, cfg.ny);
    SolverCache cache;
    {
        const detail::MeshTables ws(*mesh);
        cache.mech_lipschitz = detail::mechanical_lipschitz(cfg.law, ws, mesh->n_vertices());
        cache.damage_lipschitz =
            2.0 * cfg.law.grad_weight * detail::laplacian_lipschitz(ws, mesh->n_vertices());
    }
    std::mt19937_64 audit_rng(cfg.seed);

    EvolveResult out;
    // The t = 0 state is itself an incremental minimizer (the scheme's
    // initial datum must satisfy the stability condition).
    EvolutionState state = incremental_step(initial_state(mesh), 0.0, cfg, &cache);
    const double base = state.elastic + state.damage_term + state.grad_term;
    double work = 0.0;
    double p_prev_rate = detail::external_power(cfg, state);

    auto record = [&](const EvolutionState& st) {
        StepRow r;
        r.t = st.t;
        r.elastic = st.elastic;
        r.damage = st.damage_term;
        r.grad = st.grad_term;
        r.diss_step = st.diss_step;
        r.diss_cum = st.diss_cum;
        r.work = work;
        r.balance_residual =
            st.elastic + st.damage_term + st.grad_term + st.diss_cum - base - work;
        r.min_alpha = *std::min_element(st.alpha.values.begin(), st.alpha.values.end());
        r.p_mass = detail::plastic_mass(st.triple);
        r.stress_violation =
            stress_constraint_check(cfg.law, st.alpha, st.triple.e, 1.0).max_violation;
        out.rows.push_back(r);
    };
    record(state);
    if (cfg.audit_competitors > 0)
        out.worst_slack = stability_audit(state, cfg, cfg.audit_competitors, audit_rng);
    out.states.push_back(state);

    const double dt = cfg.horizon / cfg.steps;
    for (int i = 1; i <= cfg.steps; ++i) {
        state = incremental_step(out.states.back(), i * dt, cfg, &cache);
        const double p_rate = detail::external_power(cfg, state);
        work += 0.5 * dt * (p_prev_rate + p_rate);
        p_prev_rate = p_rate;
        record(state);
        if (cfg.audit_competitors > 0) {
            const double slack =
                stability_audit(state, cfg, cfg.audit_competitors, audit_rng);
            if (!(out.worst_slack <= slack)) out.worst_slack = slack;
        }
        out.states.push_back(std::move(state));
    }
    return out;
}

inline void write_evolution_csv(std::ostream& os, const std::vector<StepRow>& rows) {
    os << "t,Q,D,grad,diss_step,diss_cum,work,balance_residual,min_alpha,p_mass,"
          "stress_violation\n";
    for (const StepRow& r : rows) {
        os << fmt_g17(r.t) << ',' << fmt_g17(r.elastic) << ',' << fmt_g17(r.damage) << ','
           << fmt_g17(r.grad) << ',' << fmt_g17(r.diss_step) << ',' << fmt_g17(r.diss_cum)
           << ',' << fmt_g17(r.work) << ',' << fmt_g17(r.balance_residual) << ','
           << fmt_g17(r.min_alpha) << ',' << fmt_g17(r.p_mass) << ','
           << fmt_g17(r.stress_violation) << '\n';
    }
}

}  // namespace reshlab
