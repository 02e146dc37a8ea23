#pragma once

// Small fixed-size algebra for 2D vectors and symmetric 2x2 tensors.
// A SymTensor2 stores the three independent entries (xx, yy, xy); the
// Frobenius contraction therefore weights the off-diagonal entry twice.

#include <cmath>

namespace reshlab {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
constexpr Vec2 operator*(double c, Vec2 a) { return {c * a.x, c * a.y}; }
constexpr Vec2 operator*(Vec2 a, double c) { return c * a; }
constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }
// 2D cross product (z component of the 3D cross product).
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
// Rotate by +90 degrees (counter-clockwise).
constexpr Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

struct SymTensor2 {
    double xx = 0.0;
    double yy = 0.0;
    double xy = 0.0;
};

constexpr SymTensor2 operator+(SymTensor2 a, SymTensor2 b) {
    return {a.xx + b.xx, a.yy + b.yy, a.xy + b.xy};
}
constexpr SymTensor2 operator-(SymTensor2 a, SymTensor2 b) {
    return {a.xx - b.xx, a.yy - b.yy, a.xy - b.xy};
}
constexpr SymTensor2 operator*(double c, SymTensor2 a) {
    return {c * a.xx, c * a.yy, c * a.xy};
}
constexpr SymTensor2 operator*(SymTensor2 a, double c) { return c * a; }
constexpr SymTensor2 operator-(SymTensor2 a) { return {-a.xx, -a.yy, -a.xy}; }

constexpr SymTensor2 identity2() { return {1.0, 1.0, 0.0}; }

// Symmetrized outer product a (.) b = (a_i b_j + a_j b_i) / 2.
constexpr SymTensor2 sym_outer(Vec2 a, Vec2 b) {
    return {a.x * b.x, a.y * b.y, 0.5 * (a.x * b.y + a.y * b.x)};
}

// Full contraction A : B; the off-diagonal entry appears twice in the
// underlying 2x2 matrices, hence the factor 2.
constexpr double contract(SymTensor2 a, SymTensor2 b) {
    return a.xx * b.xx + a.yy * b.yy + 2.0 * a.xy * b.xy;
}

inline double norm(SymTensor2 a) { return std::sqrt(contract(a, a)); }

constexpr double trace(SymTensor2 a) { return a.xx + a.yy; }

// Deviatoric (trace-free) part.
constexpr SymTensor2 dev(SymTensor2 a) {
    const double m = 0.5 * trace(a);
    return {a.xx - m, a.yy - m, a.xy};
}

// Spherical part, dev(a) + sph(a) == a.
constexpr SymTensor2 sph(SymTensor2 a) {
    const double m = 0.5 * trace(a);
    return {m, m, 0.0};
}

// Matrix-vector product A v (interpreting the symmetric tensor as a matrix).
constexpr Vec2 apply(SymTensor2 a, Vec2 v) {
    return {a.xx * v.x + a.xy * v.y, a.xy * v.x + a.yy * v.y};
}

}  // namespace reshlab
