#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <sstream>

#include "reshlab/oracles.hpp"
#include "reshlab/solver.hpp"

using namespace reshlab;
using Catch::Matchers::WithinAbs;

namespace {

const double kSqrt2 = std::sqrt(2.0);

MaterialLaw benchmark_law() {
    return MaterialLaw{1.0, 1.0, 0.5, 0.1, 0.5, 1.0, 1.0, 1.0};
}

RunConfig shear_config(double gamma) {
    RunConfig cfg;
    cfg.nx = cfg.ny = 16;
    cfg.horizon = 0.5;
    cfg.steps = 40;
    cfg.datum_shape = AffineMap{0.0, gamma, 0.0, 0.0, Vec2{0.0, 0.0}};
    cfg.law = benchmark_law();
    return cfg;
}

ScalarP1Field constant_field(std::shared_ptr<const Mesh> mesh, double c) {
    std::vector<double> v(mesh->n_vertices(), c);
    return ScalarP1Field{std::move(mesh), std::move(v)};
}

}  // namespace

TEST_CASE("boundary slip prox satisfies its optimality conditions") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 60; ++trial) {
        const double angle = u(rng);
        const Vec2 nu{std::cos(angle), std::sin(angle)};
        const Vec2 tau{-nu.y, nu.x};
        const Vec2 zeta{u(rng), u(rng)};
        const double lambda = 0.1 + std::abs(u(rng));
        const Vec2 x = detail::prox_slip(zeta, nu, lambda);
        if (x.x == 0.0 && x.y == 0.0) {
            const double zn = dot(zeta, nu), zt = dot(zeta, tau);
            REQUIRE(std::sqrt(zn * zn + 2.0 * zt * zt) <= lambda * (1.0 + 1e-12));
        } else {
            // Stationarity: x - zeta + lambda * M^2 x / |Mx| = 0 where the
            // slip norm is |Mx| with M = diag(1, 1/sqrt(2)) in the edge frame.
            const double xn = dot(x, nu), xt = dot(x, tau);
            const double m = std::sqrt(xn * xn + 0.5 * xt * xt);
            const Vec2 grad = (xn + lambda * xn / m - dot(zeta, nu)) * nu +
                              (xt + lambda * 0.5 * xt / m - dot(zeta, tau)) * tau;
            REQUIRE(norm(grad) <= 1e-10 * (1.0 + norm(zeta)));
        }
    }
}

TEST_CASE("mechanical solve reproduces the homogeneous shear closed forms") {
    const MaterialLaw law = benchmark_law();
    auto mesh = make_mesh(Rect{-1.0, -1.0, 1.0, 1.0}, 8, 8);
    const ScalarP1Field one = constant_field(mesh, 1.0);
    const AdmissibleTriple rest = zero_triple(mesh);
    const SolverTolerances tol;
    const double y = law.c2 * law.sigma_y;

    SECTION("zero datum keeps the zero triple") {
        const AffineMap w{0.0, 0.0, 0.0, 0.0, Vec2{0.0, 0.0}};
        const auto m = minimize_mechanical(law, one, rest, w, tol);
        REQUIRE(m.energy == 0.0);
        for (const Vec2& uv : m.triple.u) REQUIRE(norm(uv) == 0.0);
    }
    SECTION("below yield: u matches the datum, p stays zero") {
        const double s = 0.05;  // onset sits at sqrt(2) y / (2 mu0) ~ 0.0707
        const AffineMap w{0.0, s, 0.0, 0.0, Vec2{0.0, 0.0}};
        const auto m = minimize_mechanical(law, one, rest, w, tol);
        const auto oracle = oracle::homogeneous_shear_min(law.mu0, 1.0, y, s, 0.0);
        REQUIRE_THAT(m.energy, WithinAbs(oracle.energy, 1e-8));
        REQUIRE_THAT(m.energy, WithinAbs(2.0 * law.mu0 * s * s, 1e-8));
        for (int t = 0; t < mesh->n_triangles(); ++t) {
            REQUIRE(norm(m.triple.p[t]) == 0.0);
            REQUIRE_THAT(m.triple.e[t].xy, WithinAbs(0.5 * s, 1e-7));
            REQUIRE_THAT(m.triple.e[t].xx, WithinAbs(0.0, 1e-7));
        }
        for (int v = 0; v < mesh->n_vertices(); ++v)
            REQUIRE(norm(m.triple.u[v] - w(mesh->vertex(v))) <= 1e-6);
    }
    SECTION("beyond yield: uniform plastic flow at the return-map magnitude") {
        const double s = 0.15;
        const AffineMap w{0.0, s, 0.0, 0.0, Vec2{0.0, 0.0}};
        const auto m = minimize_mechanical(law, one, rest, w, tol);
        const auto oracle = oracle::homogeneous_shear_min(law.mu0, 1.0, y, s, 0.0);
        REQUIRE_THAT(m.energy, WithinAbs(oracle.energy, 1e-8));
        // Stationarity in the plastic variable: pi = s/sqrt(2) - y/(2 mu0),
        // so each triangle carries p_xy = pi/sqrt(2).
        const double pi = s / kSqrt2 - y / (2.0 * law.mu0);
        for (int t = 0; t < mesh->n_triangles(); ++t) {
            REQUIRE_THAT(m.triple.p[t].xy, WithinAbs(pi / kSqrt2, 1e-7));
            REQUIRE_THAT(m.triple.p[t].xx, WithinAbs(0.0, 1e-7));
            REQUIRE(trace(m.triple.p[t]) == 0.0);
        }
        const auto stress = stress_constraint_check(law, one, m.triple.e, 1e-6 * law.sigma_y);
        REQUIRE(stress.pass);
    }
}

TEST_CASE("damage solve: bound cases and the uniform scan oracle") {
    const MaterialLaw law = benchmark_law();
    auto mesh = make_mesh(Rect{-1.0, -1.0, 1.0, 1.0}, 6, 6);
    const SolverTolerances tol;

    AdmissibleTriple triple = zero_triple(mesh);
    PlasticIncrement inc;
    inc.tri.assign(mesh->n_triangles(), 0.0);
    inc.bd.assign(mesh->boundary.size(), {0.0, 0.0});

    SECTION("no driving force keeps alpha at its upper bound") {
        const ScalarP1Field prev = constant_field(mesh, 0.8);
        const auto d = minimize_damage(law, triple, inc, prev, tol);
        for (double v : d.alpha.values) REQUIRE(v == 0.8);
    }
    SECTION("collapsed box returns the bound") {
        const ScalarP1Field prev = constant_field(mesh, 0.0);
        const auto d = minimize_damage(law, triple, inc, prev, tol);
        for (double v : d.alpha.values) REQUIRE(v == 0.0);
    }
    SECTION("uniform strain: minimizer matches a 1D scan of the uniform ansatz") {
        // Strong uniform shear: (1 - eps0) W0 exceeds kappa_d, so damage runs
        // to the floor; a brute scan of the scalar energy confirms.
        const SymTensor2 big{0.0, 0.0, 1.2};
        triple.e.assign(triple.e.size(), big);
        const double w0 = strain_energy_density(law, 1.0, big) / degradation(law, 1.0);
        REQUIRE((1.0 - law.eps0) * w0 > law.kappa_d);
        double best_a = 0.0, best_f = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 1000; ++i) {
            const double a = i / 1000.0;
            const double f = degradation(law, a) * w0 + law.kappa_d * (1.0 - a);
            if (f < best_f) {
                best_f = f;
                best_a = a;
            }
        }
        const ScalarP1Field prev = constant_field(mesh, 1.0);
        const auto d = minimize_damage(law, triple, inc, prev, tol);
        for (double v : d.alpha.values) REQUIRE_THAT(v, WithinAbs(best_a, 1e-9));
        REQUIRE_THAT(d.energy, WithinAbs(4.0 * best_f, 1e-9));
    }
    SECTION("localized strain digs a crater; result beats random feasible fields") {
        // A soft gradient penalty lets the crater reach depth where the
        // strain concentrates instead of smearing shallowly.
        MaterialLaw soft = law;
        soft.grad_weight = 0.05;
        for (int t = 0; t < mesh->n_triangles(); ++t) {
            const Vec2 c = mesh->tri_centroid(t);
            triple.e[t] = dot(c, c) < 0.25 ? SymTensor2{0.0, 0.0, 2.0} : SymTensor2{};
        }
        const ScalarP1Field prev = constant_field(mesh, 1.0);
        const auto d = minimize_damage(soft, triple, inc, prev, tol);
        auto objective = [&](const ScalarP1Field& a) {
            return elastic_energy(soft, a, triple.e) + damage_dissipation(soft, a) +
                   gradient_term(soft, a) + dissipation_increment(soft, a, inc);
        };
        REQUIRE_THAT(d.energy, WithinAbs(objective(d.alpha), 1e-10));
        REQUIRE(d.energy <= objective(prev) + 1e-12);
        double lo = 1.0, hi = 0.0;
        for (double v : d.alpha.values) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        REQUIRE(lo < 0.5);  // the crater formed
        REQUIRE(hi > 0.9);  // and did not swallow the whole domain
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (int k = 0; k < 20; ++k) {
            ScalarP1Field rand_a = prev;
            for (double& v : rand_a.values) v = u01(rng);
            REQUIRE(d.energy <= objective(rand_a) + 1e-12);
        }
    }
}

TEST_CASE("incremental step is a fixed point at an already-minimized state") {
    RunConfig cfg = shear_config(0.2);
    auto mesh = make_mesh(cfg.domain, cfg.nx, cfg.ny);
    SolverCache cache;
    EvolutionState s0 = incremental_step(initial_state(mesh), 0.0, cfg, &cache);
    EvolutionState s1 = incremental_step(s0, 0.3, cfg, &cache);
    EvolutionState s2 = incremental_step(s1, 0.3, cfg, &cache);
    REQUIRE_THAT(s2.elastic, WithinAbs(s1.elastic, 1e-10));
    REQUIRE(s2.diss_step <= 1e-8);
    for (int v = 0; v < mesh->n_vertices(); ++v)
        REQUIRE(std::abs(s2.alpha.values[v] - s1.alpha.values[v]) <= 1e-12);
}

TEST_CASE("zero datum evolution stays at rest with zero residual") {
    RunConfig cfg = shear_config(0.0);
    cfg.steps = 5;
    const EvolveResult r = evolve(cfg);
    REQUIRE(r.rows.size() == 6);
    for (const StepRow& row : r.rows) {
        REQUIRE(row.elastic == 0.0);
        REQUIRE(row.diss_cum == 0.0);
        REQUIRE(row.work == 0.0);
        REQUIRE(row.balance_residual == 0.0);
        REQUIRE(row.min_alpha == 1.0);
    }
}

TEST_CASE("homogeneous shear benchmark: onset, stress, balance, monotonicity") {
    RunConfig cfg = shear_config(0.2);
    const EvolveResult r = evolve(cfg);
    const double dt = cfg.horizon / cfg.steps;
    const double y = cfg.law.c2 * cfg.law.sigma_y;
    const double t_star = kSqrt2 * y / (2.0 * cfg.law.mu0 * 0.2);

    // Yield onset: first step with a real dissipation increment lands within
    // one time step of the closed-form onset.
    int onset = -1;
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        if (r.rows[i].diss_step > 1e-8) {
            onset = static_cast<int>(i);
            break;
        }
    }
    REQUIRE(onset > 0);
    REQUIRE(std::abs(r.rows[onset].t - t_star) <= dt);
    REQUIRE(r.rows[onset - 1].t < t_star);

    double prev_cum = 0.0;
    for (const StepRow& row : r.rows) {
        // No damage is triggered at these strains, and the damage variable
        // never grows: QS0 plus the untouched bound give exactly one.
        REQUIRE(row.min_alpha == 1.0);
        REQUIRE(row.diss_step >= 0.0);
        REQUIRE(row.diss_cum >= prev_cum);
        prev_cum = row.diss_cum;
        REQUIRE(row.stress_violation <= 1e-6 * cfg.law.sigma_y);
        if (row.t < t_star) {
            // Elastic phase: Q = 2 mu0 (gamma t)^2 and nothing dissipates.
            REQUIRE_THAT(row.elastic, WithinAbs(2.0 * cfg.law.mu0 * 0.04 * row.t * row.t, 1e-7));
            REQUIRE(row.diss_cum <= 1e-8);
        }
    }

    // Post-onset the discrete path tracks the continuous solution: at the
    // horizon p_xy = pi / sqrt(2) with pi = gamma T / sqrt(2) - y / (2 mu0).
    const EvolutionState& last = r.states.back();
    const double pi = 0.2 * cfg.horizon / kSqrt2 - y / (2.0 * cfg.law.mu0);
    for (const SymTensor2& p : last.triple.p) {
        REQUIRE_THAT(p.xy, WithinAbs(pi / kSqrt2, 1e-6));
        REQUIRE(trace(p) == 0.0);
    }
    REQUIRE_THAT(r.rows.back().p_mass, WithinAbs(4.0 * pi, 1e-5));

    // Energy balance: the only quadrature error sits in the single onset
    // interval, far below the permille-of-work budget.
    const double work_exact =
        2.0 * 0.04 * t_star * t_star + 4.0 * 0.04 * t_star * (cfg.horizon - t_star);
    REQUIRE_THAT(r.rows.back().work, WithinAbs(work_exact, 1e-4));
    REQUIRE(std::abs(r.rows.back().balance_residual) <= 1e-3 * r.rows.back().work);
}

TEST_CASE("balance residual converges at first order or better when halving dt") {
    RunConfig cfg = shear_config(0.05);
    cfg.profile = LoadProfile::quadratic;  // genuinely curved work rate
    cfg.steps = 10;
    const double r10 = std::abs(evolve(cfg).rows.back().balance_residual);
    cfg.steps = 20;
    const double r20 = std::abs(evolve(cfg).rows.back().balance_residual);
    REQUIRE(r10 > 1e-12);  // the quadrature error is real at this resolution
    const double order = std::log2(r10 / r20);
    REQUIRE(order >= 1.0);
}

TEST_CASE("stability audit finds no cheaper competitor on the benchmark") {
    RunConfig cfg = shear_config(0.2);
    cfg.steps = 8;
    const EvolveResult r = evolve(cfg);
    std::mt19937_64 rng(cfg.seed);
    const EvolutionState& st = r.states.back();
    const double slack = stability_audit(st, cfg, 200, rng);
    const double scale = std::max(1.0, st.elastic + st.damage_term + st.grad_term);
    REQUIRE(slack >= -1e-6 * scale);
}

TEST_CASE("evolution is deterministic and the csv writer is stable") {
    RunConfig cfg = shear_config(0.2);
    cfg.steps = 6;
    cfg.audit_competitors = 5;
    const EvolveResult a = evolve(cfg);
    const EvolveResult b = evolve(cfg);
    REQUIRE(a.rows.size() == b.rows.size());
    REQUIRE(a.worst_slack == b.worst_slack);
    std::ostringstream sa, sb;
    write_evolution_csv(sa, a.rows);
    write_evolution_csv(sb, b.rows);
    const std::string csv = sa.str();
    REQUIRE(csv == sb.str());
    REQUIRE(csv.rfind("t,Q,D,grad,diss_step,diss_cum,work,", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(a.rows.size()) + 1);
}
