#pragma once

// Families of matrix-valued Lipschitz test fields used to probe measures by
// pairing.  The profiles are quartic in the distance to a center/segment,
// which makes them C^1 with piecewise-polynomial structure: adaptive
// quadrature converges at high order everywhere, including on 2D
// (cell-carried) measures, because the only non-smooth sets carry mere
// second-derivative jumps.

#include <string>
#include <utility>
#include <vector>

#include "reshlab/measure.hpp"

namespace reshlab {

namespace detail {
// max over s in [0,1] of |d/ds (1-s^2)^2| = 8 / (3 sqrt 3), attained at
// s = 1/sqrt 3; divided by the length scale this bounds the profile slope.
inline constexpr double kQuarticSlope = 1.5396007178390020;

inline double quartic_profile(double dist, double radius) {
    const double s = dist / radius;
    if (s >= 1.0) return 0.0;
    const double t = 1.0 - s * s;
    return t * t;
}
}  // namespace detail

// Radial bump: psi(x) = (1 - |x-c|^2/r^2)^2 on the disc of radius r, times a
// fixed tensor direction.  psi is a polynomial inside its support.
inline TestField bump_field(std::string name, Vec2 center, double radius, SymTensor2 dir) {
    if (!(radius > 0.0)) throw std::invalid_argument("bump_field: radius must be positive");
    TestField f;
    f.name = std::move(name);
    f.lipschitz = detail::kQuarticSlope * norm(dir) / radius;
    f.eval = [center, radius, dir](Vec2 x) {
        return detail::quartic_profile(norm(x - center), radius) * dir;
    };
    return f;
}

// Ridge bump: 1 on the segment [s0, s1], quartic falloff to 0 at distance
// `margin`, times a fixed tensor direction.  Smooth across the crest.
inline TestField ridge_field(std::string name, Vec2 s0, Vec2 s1, double margin,
                             SymTensor2 dir) {
    if (!(margin > 0.0)) throw std::invalid_argument("ridge_field: margin must be positive");
    TestField f;
    f.name = std::move(name);
    f.lipschitz = detail::kQuarticSlope * norm(dir) / margin;
    f.eval = [s0, s1, margin, dir](Vec2 x) {
        return detail::quartic_profile(distance_to_segment(x, s0, s1), margin) * dir;
    };
    return f;
}

// The standard probe family: three bumps at the origin exciting the three
// tensor directions, one off-center bump, and one ridge along the horizontal
// segment where line concentrations are expected.  The ridge is shortened on
// small domains so that every field's support stays inside.
inline std::vector<TestField> make_bump_family(const Rect& domain) {
    const SymTensor2 exy = sym_outer({1.0, 0.0}, {0.0, 1.0});
    const SymTensor2 exx = sym_outer({1.0, 0.0}, {1.0, 0.0});
    const SymTensor2 eyy = sym_outer({0.0, 1.0}, {0.0, 1.0});
    const double margin = 0.4;
    const double ridge_end = (domain.x1 >= 1.0 + margin + 0.05) ? 1.0 : 0.55;
    std::vector<TestField> fields;
    fields.push_back(bump_field("bump_shear_origin", {0.0, 0.0}, 0.5, exy));
    fields.push_back(bump_field("bump_xx_origin", {0.0, 0.0}, 0.5, exx));
    fields.push_back(bump_field("bump_yy_origin", {0.0, 0.0}, 0.5, eyy));
    fields.push_back(bump_field("bump_shear_offset", {0.5, 0.0}, 0.4, exy));
    fields.push_back(
        ridge_field("ridge_shear_segment", {0.0, 0.0}, {ridge_end, 0.0}, margin, exy));
    return fields;
}

}  // namespace reshlab
