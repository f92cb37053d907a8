#pragma once

// Boundary traces of grid fields and of operator images, and their pairings
// with the measurement weights.

#include "paraid/discretization.hpp"
#include "paraid/grid.hpp"
#include "paraid/problem.hpp"
#include "paraid/stencil.hpp"

#include <array>
#include <span>
#include <vector>

namespace paraid {

/// Values of a scalar at each boundary node, in SpatialGrid::boundary() order.
using BoundaryTrace = std::vector<double>;

inline BoundaryTrace trace_value(const SpatialGrid& g, std::span<const double> u) {
    BoundaryTrace out;
    out.reserve(g.boundary().size());
    for (const auto& b : g.boundary()) out.push_back(u[b.node]);
    return out;
}

inline BoundaryTrace trace_value(const StateField& field, std::size_t n, const SpatialGrid& g) {
    return trace_value(g, field.level(n));
}

/// First and second partials at one boundary node.
struct BoundaryDerivatives {
    std::array<double, 2> grad{};  // u_x, u_y
    double uxx = 0.0;
    double uyy = 0.0;
    double uxy = 0.0;
};

/// Derivative traces from the discrete field: one-sided (3-point) first and
/// (4-point) second differences across the boundary, centered along it.
/// Corners are one-sided in both axes; the two incident-face stencils then
/// coincide, so their average is that common value.
inline std::vector<BoundaryDerivatives> trace_derivatives(const SpatialGrid& g, std::span<const double> u) {
    for (int k = 0; k < g.dim(); ++k)
        if (g.count()[k] < 4) throw Error("grid too small for second-derivative trace stencils (needs 4 nodes per axis)");
    std::vector<BoundaryDerivatives> out;
    out.reserve(g.boundary().size());
    for (const auto& b : g.boundary()) {
        BoundaryDerivatives d;
        d.grad[0] = apply_stencil(first_derivative(g, b.node, 0), u);
        d.uxx = apply_stencil(second_derivative(g, b.node, 0), u);
        if (g.dim() == 2) {
            d.grad[1] = apply_stencil(first_derivative(g, b.node, 1), u);
            d.uyy = apply_stencil(second_derivative(g, b.node, 1), u);
            d.uxy = apply_stencil(mixed_derivative(g, b.node), u);
        }
        out.push_back(d);
    }
    return out;
}

inline std::vector<BoundaryDerivatives> trace_derivatives(const StateField& field, std::size_t n, const SpatialGrid& g) {
    return trace_derivatives(g, field.level(n));
}

/// Selects A_0 or one of the unknown-weighted operators A_i (0-based).
struct OperatorId {
    static OperatorId base() { return {true, 0}; }
    static OperatorId unknown(std::size_t i) { return {false, i}; }
    bool is_base;
    std::size_t index;
};

inline const PointOperator& operator_coefficients(const Discretization& d, OperatorId id, std::size_t n,
                                                  std::size_t node) {
    const LevelSamples& L = d.level(n);
    return id.is_base ? L.base[node] : L.unknown.at(id.index)[node];
}

/// Trace of A u on the boundary at level n, combining sampled coefficients
/// with the traced derivatives. First-order operators need only three nodes
/// per axis.
template <class OpAt>
BoundaryTrace operator_trace(const SpatialGrid& g, OpAt&& op_at, std::span<const double> u) {
    BoundaryTrace out;
    out.reserve(g.boundary().size());
    for (const auto& b : g.boundary()) {
        const PointOperator op = op_at(b.node);
        out.push_back(trace_row(g, b.node, op).apply(u));
    }
    return out;
}

inline BoundaryTrace operator_trace(const Discretization& d, OperatorId id, const StateField& field, std::size_t n) {
    return operator_trace(
        d.grid(), [&](std::size_t node) { return operator_coefficients(d, id, n, node); }, field.level(n));
}

/// Conormal trace gamma . grad u + sigma u at level n (one-sided normal differences).
inline BoundaryTrace conormal_trace(const Discretization& d, std::span<const double> u, std::size_t n) {
    const SpatialGrid& g = d.grid();
    const LevelSamples& L = d.level(n);
    BoundaryTrace out;
    out.reserve(g.boundary().size());
    for (std::size_t b = 0; b < g.boundary().size(); ++b) {
        const auto& bc = L.bc[b];
        out.push_back(conormal_row(g, g.boundary()[b].node, bc.gamma, bc.sigma).apply(u));
    }
    return out;
}

/// <trace, phi> = integral over the boundary of trace * phi.
inline double pair_with_weight(std::span<const double> trace, std::span<const double> weight, const SpatialGrid& g) {
    return boundary_integral(trace, weight, g);
}

/// <trace, phi_j> for every measurement weight.
inline std::vector<double> pair_with_weights(std::span<const double> trace, const Discretization& d) {
    std::vector<double> out(d.s());
    for (std::size_t j = 0; j < d.s(); ++j) out[j] = boundary_integral(trace, d.weight(j), d.grid());
    return out;
}

}  // namespace paraid
