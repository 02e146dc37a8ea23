#include <catch2/catch_amalgamated.hpp>

#include "reshlab/oracles.hpp"
#include "reshlab/concentration.hpp"

using namespace reshlab;
using Catch::Matchers::WithinAbs;

namespace {
const double kSqrt2 = std::sqrt(2.0);
}

TEST_CASE("pinch_point: closed-form invariants hold exactly") {
    // Derived by hand from the construction: the slip rectangle has width
    // 1/k and height 1/k, displacement k e1.
    //  * |E u|: two vertical sides carry |k e1 (.) e1| = k over length 1/k
    //    each, top and bottom carry |k e1 (.) e2| = k/sqrt2 over length 1/k
    //    each: total 2 + sqrt2.
    //  * weighted mass: damage is 1 on the top edge, 0 on the bottom, and
    //    decays linearly 1 -> 0 along the sides: 1/sqrt2 + 2 * (1/2) = 1 + 1/sqrt2.
    //  * damage gradient: |grad| = k on two 1/k x 1/k rectangles and
    //    k sqrt2 on four triangles of total area 2/k^2: 2 + 4 = 6.
    //  * |u|_L1 = k * (1/k^2) = 1/k.
    for (int k : {2, 4, 16, 64}) {
        const LabBuild b = build_pinch_point(k);
        INFO("k = " << k);
        REQUIRE_THAT(total_variation(b.strain), WithinAbs(2.0 + kSqrt2, 1e-11));
        REQUIRE_THAT(total_variation(b.weighted), WithinAbs(1.0 + 1.0 / kSqrt2, 1e-11));
        REQUIRE_THAT(b.damage.integral_grad_pow(2.0), WithinAbs(6.0, 1e-9));
        REQUIRE_THAT(region_l1_norm(b.displacement), WithinAbs(1.0 / k, 1e-13));
        REQUIRE(b.damage.integral_sq() <= 4.0 / (static_cast<double>(k) * k) + 1e-12);
        REQUIRE(b.damage.integral_sq() > 0.0);
        // The weighted strain is purely a line measure; the bottom edge
        // carries zero damage and is dropped.
        REQUIRE(b.weighted.cells.empty());
        REQUIRE(b.weighted.atoms.empty());
        for (const auto& s : b.weighted.segments) {
            REQUIRE(s.a.y > -2.0 / k - 1e-12);
            REQUIRE(s.a.y < 1e-12);
        }
    }
    REQUIRE_THROWS_AS(build_pinch_point(1), std::invalid_argument);
    // Only power-of-two k keeps the mesh pitch and breaklines exact in
    // binary floating point; other k are rejected as grid-incompatible.
    REQUIRE_THROWS_AS(build_pinch_point(3), std::invalid_argument);
    REQUIRE_THROWS_AS(build_pinch_line(24, 1.5), std::invalid_argument);
}

TEST_CASE("pinch_point: weighted-strain pairings match brute-force quadrature") {
    const LabBuild b = build_pinch_point(4);
    for (const auto& phi : make_bump_family(Rect{-1.0, -1.0, 1.0, 1.0})) {
        const auto pr = pair(b.weighted, phi, 1e-10);
        INFO("field " << phi.name);
        REQUIRE_THAT(pr.value, WithinAbs(oracle::pair_brute(b.weighted, phi), 1e-6));
    }
}

TEST_CASE("pinch_point: the shear-bump pairing has a closed form in k") {
    // Only the top edge contributes (the probe's xx/yy components vanish and
    // the bottom edge carries no damage); along it the probe is (1 - 4s^2)^2,
    // so the pairing is -(k/2) * int_{-h}^{h} (1 - 8s^2 + 16s^4) ds with
    // h = 1/(2k), i.e. exactly -1/2 + 1/(3k^2) - 1/(10k^4).
    for (int k : {2, 8, 32}) {
        const LabBuild b = build_pinch_point(k);
        const auto phi = bump_field("probe", {0.0, 0.0}, 0.5,
                                    sym_outer({1.0, 0.0}, {0.0, 1.0}));
        const auto pr = pair(b.weighted, phi, 1e-11);
        INFO("k = " << k);
        const double kk = static_cast<double>(k) * k;
        REQUIRE_THAT(pr.value, WithinAbs(-0.5 + 1.0 / (3.0 * kk) - 1.0 / (10.0 * kk * kk), 1e-9));
    }
}

TEST_CASE("pinch_point: limit pairings, rates, and structure identification") {
    const LabResult res = run_lab("pinch_point", {4, 8, 16}, 0.0, 1e-10);
    REQUIRE(res.field_names.size() == 5);
    // Limit measure = single atom at the origin with density -(e1 (.) e2).
    const std::array<double, 5> expected{-0.5, 0.0, 0.0, 0.0, -0.5};
    for (std::size_t i = 0; i < 5; ++i) {
        INFO("field " << res.field_names[i]);
        REQUIRE_THAT(res.limit_pairings[i], WithinAbs(expected[i], 1e-10));
    }
    // Second-order convergence in 1/k for the probes that see the limit:
    // the C^1 probes have no first-order term across the shrinking edge.
    REQUIRE_THAT(res.rates[0], WithinAbs(2.0, 0.05));
    REQUIRE_THAT(res.rates[4], WithinAbs(2.0, 0.05));
    // Richardson extrapolation in 1/k leaves the (small) 1/k^2 tail behind.
    REQUIRE_THAT(res.extrapolated[0], WithinAbs(-0.5, 5e-3));
    // The atom model explains the data; the segment model cannot.
    REQUIRE(res.winner == "atom");
    REQUIRE(res.residual_ratio >= 100.0);
    REQUIRE(res.atom_fit.rms <= 0.01);
    REQUIRE(res.segment_fit.rms > 0.05);
}

TEST_CASE("pinch_line: closed-form invariants hold for exact copy counts") {
    const double q = 1.5;
    for (int k : {16, 64}) {
        const LabBuild b = build_pinch_line(k, q);
        INFO("k = " << k);
        REQUIRE(b.copies * b.copies == k);  // floor(k^{1/2}) exact here
        // Total strain mass is scale-invariant: each copy carries
        // (2 + sqrt2)/copies.
        REQUIRE_THAT(total_variation(b.strain), WithinAbs(2.0 + kSqrt2, 1e-10));
        REQUIRE_THAT(total_variation(b.weighted), WithinAbs(1.0 + 1.0 / kSqrt2, 1e-10));
        // q-gradient energy of the damage: copies * 2 k^{q-2} (1 + 2^{q/2}).
        REQUIRE_THAT(b.damage.integral_grad_pow(q),
                     WithinAbs(2.0 * (1.0 + std::pow(2.0, q / 2.0)), 1e-8));
        REQUIRE_THAT(region_l1_norm(b.displacement), WithinAbs(1.0 / k, 1e-12));
    }
    // Copies would overlap for small k: rejected, not silently built.
    REQUIRE_THROWS_AS(build_pinch_line(4, q), std::invalid_argument);
    REQUIRE_THROWS_AS(build_pinch_line(16, 2.5), std::invalid_argument);
}

TEST_CASE("pinch_line: weighted-strain pairings match brute-force quadrature") {
    const LabBuild b = build_pinch_line(16, 1.5);
    for (const auto& phi : make_bump_family(Rect{-2.0, -2.0, 2.0, 2.0})) {
        const auto pr = pair(b.weighted, phi, 1e-10);
        INFO("field " << phi.name);
        REQUIRE_THAT(pr.value, WithinAbs(oracle::pair_brute(b.weighted, phi), 1e-6));
    }
}

TEST_CASE("pinch_line: limit pairings and structure identification") {
    const double q = 1.5;
    const LabResult res = run_lab("pinch_line", {16, 64}, q, 1e-10);
    // Limit measure = -(e1 (.) e2) H^1 on [0,1] x {0}; pairings against the
    // probe family reduce to 1D integrals with simple closed forms.
    // int (1-4t^2)^2 over [0,1/2] = 4/15; offset bump integrates to 32/75.
    const std::array<double, 5> expected{-2.0 / 15.0, 0.0, 0.0, -16.0 / 75.0, -0.5};
    for (std::size_t i = 0; i < 5; ++i) {
        INFO("field " << res.field_names[i]);
        REQUIRE_THAT(res.limit_pairings[i], WithinAbs(expected[i], 1e-9));
        // Finite-k pairings converge; the slowest is the left-endpoint
        // placement error of the copies, about 1/(4 copies) = 1/32 at k = 64.
        REQUIRE_THAT(res.pairings[i].back(), WithinAbs(expected[i], 0.05));
    }
    REQUIRE(res.winner == "segment");
    REQUIRE(res.residual_ratio >= 10.0);
    REQUIRE(res.atom_fit.rms > 0.05);
    // The ridge probe is identically 1 over every copy: its pairing is
    // near-exact already at finite k (left only with the k^-2 curvature term).
    REQUIRE_THAT(res.pairings[4][0], WithinAbs(-0.5, 1e-2));
}

TEST_CASE("structure fits recover synthetic densities exactly") {
    const auto fields = make_bump_family(Rect{-1.0, -1.0, 1.0, 1.0});
    const SymTensor2 target{0.3, -0.7, 0.25};
    std::vector<double> obs;
    for (const auto& f : fields) obs.push_back(contract(f.eval({0.0, 0.0}), target));
    const ModelFit fit = fit_atom_model(fields, obs, {0.0, 0.0});
    REQUIRE(fit.rms <= 1e-10);
    REQUIRE_THAT(fit.density.xx, WithinAbs(target.xx, 1e-9));
    REQUIRE_THAT(fit.density.yy, WithinAbs(target.yy, 1e-9));
    REQUIRE_THAT(fit.density.xy, WithinAbs(target.xy, 1e-9));
}
