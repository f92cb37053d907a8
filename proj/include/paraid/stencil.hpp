#pragma once

// Finite-difference stencils on a SpatialGrid. Derivatives are centered where
// both neighbours exist and one-sided at the boundary:
//   first derivative   3-point one-sided  (exact for quadratics)
//   second derivative  4-point one-sided  (exact for cubics)
//   mixed derivative   composition of the two first-derivative stencils

#include "paraid/errors.hpp"
#include "paraid/grid.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace paraid {

struct Term {
    std::size_t node;
    double coef;
};
using Stencil = std::vector<Term>;

inline double apply_stencil(const Stencil& s, std::span<const double> u) {
    double v = 0.0;
    for (const auto& t : s) v += t.coef * u[t.node];
    return v;
}

inline void axpy(Stencil& out, double alpha, const Stencil& s) {
    if (alpha == 0.0) return;
    for (const auto& t : s) out.push_back({t.node, alpha * t.coef});
}

namespace detail {

inline std::size_t along(const SpatialGrid& g, std::size_t p, int axis) {
    return axis == 0 ? g.i_of(p) : g.j_of(p);
}

inline std::size_t step(const SpatialGrid& g, std::size_t p, int axis, long offset) {
    const long stride = axis == 0 ? 1 : static_cast<long>(g.nx());
    return static_cast<std::size_t>(static_cast<long>(p) + offset * stride);
}

/// Outward sign of p along `axis`: -1 at the low face, +1 at the high face, 0 inside.
inline int face_sign(const SpatialGrid& g, std::size_t p, int axis) {
    if (axis >= g.dim()) return 0;
    const std::size_t k = along(g, p, axis);
    if (k == 0) return -1;
    if (k + 1 == g.count()[axis]) return 1;
    return 0;
}

}  // namespace detail

/// d/dx_axis at node p.
inline Stencil first_derivative(const SpatialGrid& g, std::size_t p, int axis) {
    const double h = g.spacing()[axis];
    const int s = detail::face_sign(g, p, axis);
    if (s == 0) {
        return {{detail::step(g, p, axis, -1), -0.5 / h}, {detail::step(g, p, axis, 1), 0.5 / h}};
    }
    // Nodes p, p - s, p - 2s (stepping inward).
    return {{p, 1.5 * s / h},
            {detail::step(g, p, axis, -s), -2.0 * s / h},
            {detail::step(g, p, axis, -2 * s), 0.5 * s / h}};
}

/// d^2/dx_axis^2 at node p. One-sided use needs four nodes along the axis.
inline Stencil second_derivative(const SpatialGrid& g, std::size_t p, int axis) {
    const double h = g.spacing()[axis];
    const double ih2 = 1.0 / (h * h);
    const int s = detail::face_sign(g, p, axis);
    if (s == 0) {
        return {{detail::step(g, p, axis, -1), ih2}, {p, -2.0 * ih2}, {detail::step(g, p, axis, 1), ih2}};
    }
    if (g.count()[axis] < 4)
        throw Error("grid too small for the one-sided second-derivative stencil (needs 4 nodes per axis)");
    return {{p, 2.0 * ih2},
            {detail::step(g, p, axis, -s), -5.0 * ih2},
            {detail::step(g, p, axis, -2 * s), 4.0 * ih2},
            {detail::step(g, p, axis, -3 * s), -ih2}};
}

/// d^2/dxdy at node p (2-D only).
inline Stencil mixed_derivative(const SpatialGrid& g, std::size_t p) {
    Stencil out;
    for (const auto& tx : first_derivative(g, p, 0))
        for (const auto& ty : first_derivative(g, tx.node, 1)) out.push_back({ty.node, tx.coef * ty.coef});
    return out;
}

/// Sampled coefficients of a second-order operator at one point:
///   -sum a_kl d_kl + sum b_k d_k + c.
/// `a` is row-major 2x2; first-order operators leave it zero.
struct PointOperator {
    std::array<double, 4> a{};
    std::array<double, 2> b{};
    double c = 0.0;

    double diffusion(int k, int l) const { return a[2 * k + l]; }
    bool has_second_order() const { return a[0] != 0.0 || a[1] != 0.0 || a[2] != 0.0 || a[3] != 0.0; }

    PointOperator& add_scaled(double alpha, const PointOperator& o) {
        for (int k = 0; k < 4; ++k) a[k] += alpha * o.a[k];
        for (int k = 0; k < 2; ++k) b[k] += alpha * o.b[k];
        c += alpha * o.c;
        return *this;
    }
};

/// A linear functional of nodal values plus a multiple of the boundary datum g.
struct Row {
    Stencil terms;
    double g_coef = 0.0;

    double apply(std::span<const double> u, double g = 0.0) const { return apply_stencil(terms, u) + g_coef * g; }
};

/// Operator applied at p with every derivative taken from grid stencils
/// (one-sided across the boundary). This is the trace-extraction form.
inline Row trace_row(const SpatialGrid& g, std::size_t p, const PointOperator& op) {
    Row r;
    const int n = g.dim();
    if (op.has_second_order()) {
        for (int k = 0; k < n; ++k) axpy(r.terms, -op.diffusion(k, k), second_derivative(g, p, k));
        if (n == 2) axpy(r.terms, -(op.diffusion(0, 1) + op.diffusion(1, 0)), mixed_derivative(g, p));
    }
    for (int k = 0; k < n; ++k) axpy(r.terms, op.b[k], first_derivative(g, p, k));
    r.terms.push_back({p, op.c});
    return r;
}

/// Conormal boundary operator gamma . grad u + sigma u at p with one-sided
/// normal and centered tangential differences.
inline Row conormal_row(const SpatialGrid& g, std::size_t p, std::array<double, 2> gamma, double sigma) {
    Row r;
    for (int k = 0; k < g.dim(); ++k) axpy(r.terms, gamma[k], first_derivative(g, p, k));
    r.terms.push_back({p, sigma});
    return r;
}

/// Conormal data gamma, sigma at one boundary node.
struct BoundaryLocal {
    std::array<double, 2> gamma{};
    double sigma = 0.0;
};

/// Operator applied at p as the time stepper discretizes it. At non-corner
/// boundary nodes the normal derivative is eliminated through the conormal
/// condition gamma . grad u + sigma u = g:
///   u_d  = (g - sigma u - gamma_e u_e) / gamma_d
///   u_dd = 2 (u_in - u + s h u_d) / h^2        (s = outward sign, exact for quadratics)
/// so the row carries a coefficient on g. Elsewhere it equals trace_row.
inline Row scheme_row(const SpatialGrid& g, std::size_t p, const PointOperator& op, const BoundaryLocal* bc) {
    const long slot = g.boundary_slot(p);
    if (slot < 0 || bc == nullptr) return trace_row(g, p, op);
    const BoundaryNode& bn = g.boundary()[static_cast<std::size_t>(slot)];
    if (bn.corner()) return trace_row(g, p, op);

    const int d = bn.normal_axis();
    const int s = bn.outward_sign();
    const int e = 1 - d;
    const bool two_d = g.dim() == 2;
    const double h = g.spacing()[d];
    const double gd = bc->gamma[d];
    if (gd == 0.0) throw ValidationError("conormal direction tangent to the boundary at node " + std::to_string(p));

    // u_d as (stencil, g coefficient).
    Row ud;
    ud.terms.push_back({p, -bc->sigma / gd});
    if (two_d) axpy(ud.terms, -bc->gamma[e] / gd, first_derivative(g, p, e));
    ud.g_coef = 1.0 / gd;

    Row udd;
    udd.terms = {{detail::step(g, p, d, -s), 2.0 / (h * h)}, {p, -2.0 / (h * h)}};
    axpy(udd.terms, 2.0 * s / h, ud.terms);
    udd.g_coef = 2.0 * s / h * ud.g_coef;

    Row r;
    const double add = op.diffusion(d, d);
    axpy(r.terms, -add, udd.terms);
    axpy(r.terms, op.b[d], ud.terms);
    r.g_coef = -add * udd.g_coef + op.b[d] * ud.g_coef;
    if (two_d) {
        axpy(r.terms, -op.diffusion(e, e), second_derivative(g, p, e));
        axpy(r.terms, -(op.diffusion(0, 1) + op.diffusion(1, 0)), mixed_derivative(g, p));
        axpy(r.terms, op.b[e], first_derivative(g, p, e));
    }
    r.terms.push_back({p, op.c});
    return r;
}

}  // namespace paraid
