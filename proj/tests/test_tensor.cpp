#include <catch2/catch_amalgamated.hpp>

#include "reshlab/tensor.hpp"

using namespace reshlab;
using Catch::Matchers::WithinAbs;

TEST_CASE("vector algebra basics") {
    const Vec2 a{3.0, -1.0}, b{0.5, 2.0};
    REQUIRE((a + b).x == 3.5);
    REQUIRE((a - b).y == -3.0);
    REQUIRE(dot(a, b) == 3.0 * 0.5 - 2.0);
    REQUIRE(cross(a, b) == 3.0 * 2.0 - (-1.0) * 0.5);
    REQUIRE_THAT(norm(Vec2{3.0, 4.0}), WithinAbs(5.0, 1e-15));
    // perp rotates by +90 degrees: perp(e1) = e2.
    REQUIRE(perp(Vec2{1.0, 0.0}).x == 0.0);
    REQUIRE(perp(Vec2{1.0, 0.0}).y == 1.0);
    REQUIRE(dot(perp(a), a) == 0.0);
}

TEST_CASE("symmetric tensor contraction counts the off-diagonal twice") {
    const SymTensor2 s{1.0, 2.0, 3.0};
    REQUIRE(contract(s, identity2()) == trace(s));
    REQUIRE(contract(s, s) == 1.0 + 4.0 + 2.0 * 9.0);
    const SymTensor2 shear = sym_outer({1.0, 0.0}, {0.0, 1.0});
    REQUIRE(shear.xy == 0.5);
    REQUIRE_THAT(norm(shear), WithinAbs(1.0 / std::sqrt(2.0), 1e-15));
}

TEST_CASE("deviatoric/spherical decomposition") {
    const SymTensor2 s{2.0, -1.0, 0.7};
    const SymTensor2 d = dev(s), p = sph(s);
    REQUIRE_THAT(trace(d), WithinAbs(0.0, 1e-15));
    REQUIRE_THAT((d + p).xx, WithinAbs(s.xx, 1e-15));
    REQUIRE_THAT((d + p).yy, WithinAbs(s.yy, 1e-15));
    REQUIRE_THAT((d + p).xy, WithinAbs(s.xy, 1e-15));
    // dev and sph are orthogonal in the contraction inner product.
    REQUIRE_THAT(contract(d, p), WithinAbs(0.0, 1e-15));
}

TEST_CASE("sym_outer matches the matrix definition") {
    const Vec2 a{1.5, -2.0}, b{0.25, 4.0};
    const SymTensor2 s = sym_outer(a, b);
    REQUIRE(s.xx == a.x * b.x);
    REQUIRE(s.yy == a.y * b.y);
    REQUIRE(s.xy == 0.5 * (a.x * b.y + a.y * b.x));
    // |a (.) n|^2 = (|a|^2 + (a.n)^2) / 2 for unit n.
    const Vec2 n{0.0, 1.0};
    const SymTensor2 an = sym_outer(a, n);
    REQUIRE_THAT(contract(an, an), WithinAbs(0.5 * (dot(a, a) + dot(a, n) * dot(a, n)), 1e-12));
}

TEST_CASE("apply treats the tensor as a matrix") {
    const SymTensor2 s{2.0, 3.0, -1.0};
    const Vec2 v{1.0, 2.0};
    REQUIRE(apply(s, v).x == 2.0 * 1.0 + (-1.0) * 2.0);
    REQUIRE(apply(s, v).y == (-1.0) * 1.0 + 3.0 * 2.0);
}
