#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "reshlab/oracles.hpp"
#include "reshlab/concentration.hpp"
#include "reshlab/plasticity.hpp"

using namespace reshlab;
using Catch::Matchers::WithinAbs;

namespace {

const double kSqrt2 = std::sqrt(2.0);

MaterialLaw benchmark_law() {
    return MaterialLaw{1.0, 1.0, 0.5, 0.1, 0.5, 1.0, 1.0, 1.0};
}

ScalarP1Field constant_field(std::shared_ptr<const Mesh> mesh, double c) {
    std::vector<double> v(mesh->n_vertices(), c);
    return ScalarP1Field{std::move(mesh), std::move(v)};
}

ScalarP1Field sampled_field(std::shared_ptr<const Mesh> mesh,
                            const std::function<double(Vec2)>& f) {
    std::vector<double> v(mesh->n_vertices());
    for (int i = 0; i < mesh->n_vertices(); ++i) v[i] = f(mesh->vertex(i));
    return ScalarP1Field{std::move(mesh), std::move(v)};
}

SymTensor2 random_deviatoric(std::mt19937_64& rng, double amp) {
    std::uniform_real_distribution<double> u(-amp, amp);
    const double a = u(rng), b = u(rng);
    return {a, -a, b};
}

}  // namespace

TEST_CASE("material law validation rejects out-of-range parameters") {
    MaterialLaw good = benchmark_law();
    REQUIRE_NOTHROW(validate_law(good));
    auto broken = [&](auto&& mutate) {
        MaterialLaw law = good;
        mutate(law);
        REQUIRE_THROWS_AS(validate_law(law), std::invalid_argument);
    };
    broken([](MaterialLaw& l) { l.mu0 = 0.0; });
    broken([](MaterialLaw& l) { l.kappa0 = -1.0; });
    broken([](MaterialLaw& l) { l.eps0 = 0.0; });
    broken([](MaterialLaw& l) { l.eps0 = 1.0; });
    broken([](MaterialLaw& l) { l.sigma_y = 0.0; });
    broken([](MaterialLaw& l) { l.c1 = 0.0; });
    broken([](MaterialLaw& l) { l.c2 = 0.25 * l.c1; });
    broken([](MaterialLaw& l) { l.kappa_d = 0.0; });
    broken([](MaterialLaw& l) { l.grad_weight = 0.0; });
}

TEST_CASE("degraded elasticity tensor: closed forms and structure") {
    const MaterialLaw law = benchmark_law();
    const SymTensor2 shear = sym_outer({1.0, 0.0}, {0.0, 1.0});

    // Undamaged shear response is 2 mu0 times the strain.
    const SymTensor2 s1 = apply_elasticity(law, 1.0, shear);
    REQUIRE_THAT(s1.xy, WithinAbs(2.0 * law.mu0 * shear.xy, 1e-15));
    REQUIRE_THAT(s1.xx, WithinAbs(0.0, 1e-15));

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const SymTensor2 e{u(rng), u(rng), u(rng)};
        // At full damage only the residual stiffness remains.
        const SymTensor2 s0 = apply_elasticity(law, 0.0, e);
        const SymTensor2 sfull = apply_elasticity(law, 1.0, e);
        REQUIRE_THAT(s0.xx, WithinAbs(law.eps0 * sfull.xx, 1e-14));
        REQUIRE_THAT(s0.yy, WithinAbs(law.eps0 * sfull.yy, 1e-14));
        REQUIRE_THAT(s0.xy, WithinAbs(law.eps0 * sfull.xy, 1e-14));

        // The deviatoric/spherical split is preserved.
        const double a = 0.5 * (u(rng) + 1.0);
        REQUIRE(std::abs(trace(apply_elasticity(law, a, dev(e)))) <= 1e-14);

        // Monotone and coercive in alpha.
        const double b = 0.5 * (u(rng) + 1.0);
        const double lo = std::min(a, b), hi = std::max(a, b);
        const double qa = contract(apply_elasticity(law, lo, e), e);
        const double qb = contract(apply_elasticity(law, hi, e), e);
        REQUIRE(qb >= qa - 1e-14);
        REQUIRE(qa >= law.eps0 * std::min(2.0 * law.mu0, 2.0 * law.kappa0) *
                          contract(e, e) -
                      1e-14);
    }
    REQUIRE_THROWS_AS(apply_elasticity(law, 1.5, shear), std::invalid_argument);
}

TEST_CASE("elastic energy: goldens and quadrature exactness") {
    const MaterialLaw law = benchmark_law();
    auto mesh = make_mesh(Rect{0.0, 0.0, 1.0, 1.0}, 4, 4);
    const SymTensor2 shear = sym_outer({1.0, 0.0}, {0.0, 1.0});

    const ScalarP1Field one = constant_field(mesh, 1.0);
    std::vector<SymTensor2> zero(mesh->n_triangles(), SymTensor2{});
    REQUIRE(elastic_energy(law, one, zero) == 0.0);

    // (1/2) C(1) e : e = mu0 |dev e|^2 + kappa0 tr(e)^2 / 2; for the unit
    // shear |dev e|^2 = 1/2 and the trace vanishes, so the energy on a
    // unit-area domain is mu0 / 2.
    std::vector<SymTensor2> es(mesh->n_triangles(), shear);
    const double q1 = elastic_energy(law, one, es);
    REQUIRE_THAT(q1, WithinAbs(0.5 * law.mu0, 1e-14));

    // Quadratic in e.
    std::vector<SymTensor2> es2(mesh->n_triangles(),
                                SymTensor2{2.0 * shear.xx, 2.0 * shear.yy, 2.0 * shear.xy});
    REQUIRE_THAT(elastic_energy(law, one, es2), WithinAbs(4.0 * q1, 1e-13));

    // Centroid quadrature is exact for affine damage against constant
    // strains: integral of g(alpha) W with alpha = x equals W * g(mean).
    const ScalarP1Field ramp = sampled_field(mesh, [](Vec2 p) { return p.x; });
    const double w_dens = strain_energy_density(law, 1.0, shear) / degradation(law, 1.0);
    const double expect = w_dens * degradation(law, 0.5);
    REQUIRE_THAT(elastic_energy(law, ramp, es), WithinAbs(expect, 1e-14));
}

TEST_CASE("damage dissipation and gradient term") {
    const MaterialLaw law = benchmark_law();
    auto mesh = make_mesh(Rect{0.0, 0.0, 1.0, 1.0}, 5, 5);

    REQUIRE_THAT(damage_dissipation(law, constant_field(mesh, 1.0)), WithinAbs(0.0, 1e-15));
    REQUIRE_THAT(damage_dissipation(law, constant_field(mesh, 0.0)),
                 WithinAbs(law.kappa_d, 1e-14));

    const ScalarP1Field a = sampled_field(mesh, [](Vec2 p) { return 0.5 + 0.5 * p.x; });
    const ScalarP1Field b = sampled_field(mesh, [](Vec2 p) { return 0.25 + 0.5 * p.x; });
    REQUIRE(damage_dissipation(law, b) >= damage_dissipation(law, a));

    REQUIRE_THAT(gradient_term(law, constant_field(mesh, 0.7)), WithinAbs(0.0, 1e-15));
    const ScalarP1Field ramp = sampled_field(mesh, [](Vec2 p) { return p.x; });
    REQUIRE_THAT(gradient_term(law, ramp), WithinAbs(1.0, 1e-13));
    MaterialLaw weighted = law;
    weighted.grad_weight = 2.5;
    REQUIRE_THAT(gradient_term(weighted, ramp), WithinAbs(2.5, 1e-13));

    const LabBuild pinch = build_pinch_point(4);
    REQUIRE_THAT(gradient_term(law, pinch.damage), WithinAbs(6.0, 1e-9));
}

TEST_CASE("plastic potential: goldens, bounds, homogeneity, trace gate") {
    const MaterialLaw law = benchmark_law();
    auto mesh = make_mesh(Rect{-1.0, -1.0, 1.0, 1.0}, 4, 4);
    const ScalarP1Field one = constant_field(mesh, 1.0);
    const SymTensor2 shear = sym_outer({1.0, 0.0}, {0.0, 1.0});

    REQUIRE(plastic_potential(law, one, DiscreteMeasure{}) == 0.0);

    DiscreteMeasure atom;
    atom.atoms.push_back({{0.25, -0.5}, shear});
    const double got = plastic_potential(law, one, atom);
    REQUIRE_THAT(got, WithinAbs(law.c2 * law.sigma_y * norm(shear), 1e-14));

    // Against the concentration damage field the weight at the origin is the
    // full v-ceiling: the damage peaks at exactly 1 there.
    const LabBuild pinch = build_pinch_point(4);
    DiscreteMeasure origin_atom;
    origin_atom.atoms.push_back({{0.0, 0.0}, shear});
    REQUIRE_THAT(plastic_potential(law, pinch.damage, origin_atom),
                 WithinAbs(law.c2 * law.sigma_y / kSqrt2, 1e-12));

    // 1-homogeneity, exact for atoms.
    REQUIRE(plastic_potential(law, one, scaled(atom, 3.0)) == 3.0 * got);

    // Deviatoric mixed measure: check the two-sided bound and a brute-force
    // cross-check of the damage-weighted integral.
    std::mt19937_64 rng(2024);
    DiscreteMeasure mix;
    mix.atoms.push_back({{0.5, 0.5}, random_deviatoric(rng, 1.0)});
    mix.segments.push_back({{-0.75, -0.25},
                            {0.5, -0.625},
                            random_deviatoric(rng, 1.0),
                            random_deviatoric(rng, 1.0)});
    mix.cells.push_back({{Vec2{-0.5, 0.0}, Vec2{0.5, 0.25}, Vec2{-0.25, 0.75}},
                         {random_deviatoric(rng, 1.0), random_deviatoric(rng, 1.0),
                          random_deviatoric(rng, 1.0)},
                         -1});
    const ScalarP1Field wavy =
        sampled_field(mesh, [](Vec2 p) { return 0.5 + 0.25 * p.x - 0.2 * p.y; });
    const double h = plastic_potential(law, wavy, mix);
    const double tv = total_variation(mix);
    REQUIRE(h >= law.c1 * law.sigma_y * tv - 1e-9);
    REQUIRE(h <= law.c2 * law.sigma_y * tv + 1e-9);
    const double ref = oracle::functional_brute(mix, [&](Vec2 x, const SymTensor2& xi) {
        return yield_scale(law, wavy.eval(x)) * law.sigma_y * norm(xi);
    });
    REQUIRE_THAT(h, WithinAbs(ref, 1e-5));
    const double hs = plastic_potential(law, wavy, scaled(mix, 1.75));
    REQUIRE_THAT(hs, WithinAbs(1.75 * h, 1e-10 * std::max(1.0, hs)));

    // Non-deviatoric parts are rejected outright.
    DiscreteMeasure off;
    off.atoms.push_back({{0.0, 0.0}, SymTensor2{1.0, 0.0, 0.0}});
    REQUIRE_THROWS_AS(plastic_potential(law, one, off), std::invalid_argument);
    DiscreteMeasure off_cell;
    off_cell.cells.push_back({{Vec2{0.0, 0.0}, Vec2{1.0, 0.0}, Vec2{0.0, 1.0}},
                              {shear, shear, SymTensor2{0.5, 0.5, 0.0}},
                              -1});
    REQUIRE_THROWS_AS(plastic_potential(law, one, off_cell), std::invalid_argument);
}

TEST_CASE("dissipation over partitions: additivity along rays and refinement") {
    const MaterialLaw law = benchmark_law();
    auto mesh = make_mesh(Rect{-1.0, -1.0, 1.0, 1.0}, 2, 2);
    const ScalarP1Field one = constant_field(mesh, 1.0);
    const SymTensor2 shear = sym_outer({1.0, 0.0}, {0.0, 1.0});

    auto atom_measure = [&](double scale) {
        DiscreteMeasure m;
        if (scale != 0.0)
            m.atoms.push_back({{0.0, 0.0}, SymTensor2{scale * shear.xx, scale * shear.yy,
                                                      scale * shear.xy}});
        return m;
    };

    const std::vector<ScalarP1Field> alphas{one, one, one};
    const std::vector<DiscreteMeasure> constant{atom_measure(1.0), atom_measure(1.0),
                                                atom_measure(1.0)};
    REQUIRE(dissipation_over_partition(law, alphas, constant, {0, 1, 2}) == 0.0);

    const std::vector<DiscreteMeasure> ramp{atom_measure(0.0), atom_measure(1.0),
                                            atom_measure(2.0)};
    const double one_step = dissipation_over_partition(law, alphas, ramp, {0, 2});
    const double two_step = dissipation_over_partition(law, alphas, ramp, {0, 1, 2});
    REQUIRE_THAT(one_step, WithinAbs(2.0 * law.c2 * law.sigma_y / kSqrt2, 1e-13));
    REQUIRE_THAT(two_step, WithinAbs(one_step, 1e-12));

    // A non-monotone path strictly gains under refinement (triangle
    // inequality); refinement may never lose more than rounding.
    const std::vector<DiscreteMeasure> zigzag{atom_measure(0.0), atom_measure(1.0),
                                              atom_measure(0.5)};
    const double coarse = dissipation_over_partition(law, alphas, zigzag, {0, 2});
    const double fine = dissipation_over_partition(law, alphas, zigzag, {0, 1, 2});
    REQUIRE(fine >= coarse - 1e-12);
    REQUIRE(fine > coarse + 0.5 * law.c1 * law.sigma_y / kSqrt2);

    REQUIRE_THROWS_AS(dissipation_over_partition(law, alphas, ramp, {0, 0, 2}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(dissipation_over_partition(law, alphas, ramp, {0, 5}),
                      std::invalid_argument);
}

TEST_CASE("admissibility check: strain split and relaxed boundary condition") {
    auto mesh = make_mesh(Rect{-1.0, -1.0, 1.0, 1.0}, 3, 3);
    const AffineMap w{0.0, 0.3, 0.0, 0.0, {0.0, 0.0}};  // w(x) = (0.3 x2, 0)

    AdmissibleTriple t = zero_triple(mesh);
    for (int v = 0; v < mesh->n_vertices(); ++v) t.u[v] = w(mesh->vertex(v));
    const SymTensor2 s = w.sym_gradient();

    SECTION("u matching the affine datum with e = Eu") {
        t.e.assign(t.e.size(), s);
        const auto rep = admissible_check(t, w, 1e-12);
        REQUIRE(rep.pass);
        REQUIRE(rep.residual_strain <= 1e-14);
        REQUIRE(rep.residual_boundary <= 1e-14);
    }
    SECTION("the same displacement carried purely by p") {
        t.p.assign(t.p.size(), s);  // s is trace-free for the shear datum
        REQUIRE(admissible_check(t, w, 1e-12).pass);
    }
    SECTION("missing strain split fails with the sym-gradient residual") {
        const auto rep = admissible_check(t, w, 1e-12);
        REQUIRE_FALSE(rep.pass);
        REQUIRE_THAT(rep.residual_strain, WithinAbs(norm(s), 1e-14));
    }
    SECTION("boundary slip must be booked as the boundary plastic part") {
        AdmissibleTriple rest = zero_triple(mesh);  // u = 0 but datum is nonzero
        auto rep = admissible_check(rest, w, 1e-12);
        REQUIRE_FALSE(rep.pass);
        for (std::size_t b = 0; b < mesh->boundary.size(); ++b) {
            const auto& edge = mesh->boundary[b];
            rest.p_bd[b][0] = sym_outer(w(mesh->vertex(edge.v0)), edge.normal);
            rest.p_bd[b][1] = sym_outer(w(mesh->vertex(edge.v1)), edge.normal);
        }
        rep = admissible_check(rest, w, 1e-12);
        REQUIRE(rep.pass);
        REQUIRE(rep.residual_boundary <= 1e-14);
    }
}

TEST_CASE("stress constraint check sits exactly on the yield surface") {
    const MaterialLaw law = benchmark_law();
    auto mesh = make_mesh(Rect{-1.0, -1.0, 1.0, 1.0}, 3, 3);
    const ScalarP1Field one = constant_field(mesh, 1.0);

    std::vector<SymTensor2> zero(mesh->n_triangles(), SymTensor2{});
    REQUIRE(stress_constraint_check(law, one, zero, 0.0).pass);

    // e = (c2 sigma_y / (2 mu0)) * unit shear direction: |dev sigma| = c2 sigma_y.
    const SymTensor2 shear = sym_outer({1.0, 0.0}, {0.0, 1.0});
    const double mag = law.c2 * law.sigma_y / (2.0 * law.mu0) / norm(shear);
    std::vector<SymTensor2> at_yield(
        mesh->n_triangles(), SymTensor2{mag * shear.xx, mag * shear.yy, mag * shear.xy});
    const auto rep = stress_constraint_check(law, one, at_yield, 1e-12);
    REQUIRE(rep.pass);
    REQUIRE_THAT(rep.max_violation, WithinAbs(0.0, 1e-14));

    std::vector<SymTensor2> beyond(mesh->n_triangles(),
                                   SymTensor2{1.1 * mag * shear.xx, 1.1 * mag * shear.yy,
                                              1.1 * mag * shear.xy});
    const auto bad = stress_constraint_check(law, one, beyond, 1e-12);
    REQUIRE_FALSE(bad.pass);
    REQUIRE_THAT(bad.max_violation, WithinAbs(0.1 * law.c2 * law.sigma_y, 1e-14));
}

TEST_CASE("return map: closed form against the derivative-free oracle") {
    const MaterialLaw law = benchmark_law();
    const SymTensor2 shear = sym_outer({1.0, 0.0}, {0.0, 1.0});

    SECTION("below yield the plastic state is untouched") {
        const SymTensor2 p_prev{0.01, -0.01, -0.02};
        const SymTensor2 trial{0.012, -0.008, -0.019};
        const auto r = return_map(law, 1.0, trial, p_prev);
        REQUIRE(r.p.xx == p_prev.xx);
        REQUIRE(r.p.yy == p_prev.yy);
        REQUIRE(r.p.xy == p_prev.xy);
    }
    SECTION("trial at twice the yield radius slides back by y/(2 mu0 g)") {
        for (double alpha : {1.0, 0.3}) {
            const double g = degradation(law, alpha);
            const double y = yield_scale(law, alpha) * law.sigma_y;
            const double c = y / (law.mu0 * g);  // |s_tr| = 2 mu0 g c = 2 y
            const SymTensor2 trial{c / norm(shear) * shear.xx, c / norm(shear) * shear.yy,
                                   c / norm(shear) * shear.xy};
            const auto r = return_map(law, alpha, trial, SymTensor2{});
            REQUIRE_THAT(norm(r.p), WithinAbs(y / (2.0 * law.mu0 * g), 1e-14));
            REQUIRE(trace(r.p) == 0.0);
            // Stress lands exactly on the yield surface.
            const SymTensor2 sigma = apply_elasticity(law, alpha, r.e);
            REQUIRE_THAT(norm(dev(sigma)), WithinAbs(y, 1e-14));
        }
    }
    SECTION("the elastic/plastic switch brackets the damaged yield radius") {
        const double y0 = yield_scale(law, 0.0) * law.sigma_y;  // = c1 sigma_y
        const double g0 = degradation(law, 0.0);
        auto trial_at = [&](double s_norm) {
            const double m = s_norm / (2.0 * law.mu0 * g0) / norm(shear);
            return SymTensor2{m * shear.xx, m * shear.yy, m * shear.xy};
        };
        REQUIRE(norm(return_map(law, 0.0, trial_at(0.999 * y0), SymTensor2{}).p) == 0.0);
        REQUIRE(norm(return_map(law, 0.0, trial_at(1.001 * y0), SymTensor2{}).p) > 0.0);
    }
    SECTION("validation") {
        REQUIRE_THROWS_AS(return_map(law, -0.1, shear, SymTensor2{}), std::invalid_argument);
        REQUIRE_THROWS_AS(return_map(law, 0.5, shear, SymTensor2{1.0, 0.0, 0.0}),
                          std::invalid_argument);
    }
    SECTION("300 random local problems match the compass-search oracle") {
        std::mt19937_64 rng(515151);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        double worst = 0.0;
        for (int i = 0; i < 300; ++i) {
            MaterialLaw rand_law = law;
            rand_law.mu0 = 0.5 + 1.5 * u01(rng);
            rand_law.kappa0 = 0.5 + 1.5 * u01(rng);
            rand_law.eps0 = 0.1 + 0.8 * u01(rng);
            rand_law.sigma_y = 0.05 + 0.45 * u01(rng);
            rand_law.c1 = 0.3 + 0.7 * u01(rng);
            rand_law.c2 = rand_law.c1 + u01(rng);
            const double alpha = u01(rng);
            const SymTensor2 trial{u(rng), u(rng), u(rng)};
            const SymTensor2 p_prev = random_deviatoric(rng, 0.5);
            const auto lib = return_map(rand_law, alpha, trial, p_prev);
            const auto ora = oracle::return_map_search(
                rand_law.mu0, rand_law.kappa0, degradation(rand_law, alpha),
                yield_scale(rand_law, alpha) * rand_law.sigma_y, trial, p_prev);
            const SymTensor2 diff{lib.p.xx - ora.p.xx, lib.p.yy - ora.p.yy,
                                  lib.p.xy - ora.p.xy};
            worst = std::max(worst, norm(diff));
            REQUIRE(trace(lib.p) == 0.0);
            const double lib_energy = oracle::local_increment_energy(
                rand_law.mu0, rand_law.kappa0, degradation(rand_law, alpha),
                yield_scale(rand_law, alpha) * rand_law.sigma_y, trial, p_prev, lib.p.xx,
                lib.p.xy);
            REQUIRE(lib_energy <= ora.energy + 1e-12);
        }
        REQUIRE(worst <= 1e-9);
    }
}
