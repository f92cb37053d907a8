#pragma once

// Implicit theta-scheme for u_t + A(q) u = f with gamma . grad u + sigma u = g.
//
// Every interior and face node carries the discrete equation; on faces the
// normal derivative is eliminated through the conormal condition (see
// scheme_row). 2-D corner nodes carry the conormal condition itself as an
// algebraic row, enforced at the new time level.

#include "paraid/discretization.hpp"
#include "paraid/errors.hpp"
#include "paraid/problem.hpp"
#include "paraid/stencil.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <span>
#include <vector>

namespace paraid {

/// Which datum drives the boundary rows.
enum class BoundaryData {
    problem,      // the problem's g(t, x)
    homogeneous,  // g = 0 (the reduced problem for v)
};

/// Discrete spatial operator at one level: matrix rows and right-hand side.
/// For equation rows the source is f - (g contribution); for algebraic
/// (corner) rows it is the boundary datum.
struct SpatialOperator {
    Eigen::SparseMatrix<double> matrix;
    Eigen::VectorXd source;
};

inline bool is_algebraic_row(const SpatialGrid& g, std::size_t p) {
    const long slot = g.boundary_slot(p);
    return slot >= 0 && g.boundary()[static_cast<std::size_t>(slot)].corner();
}

/// Assembles A(q) at level n with an explicit nodal source.
inline SpatialOperator assemble_spatial_operator(const Discretization& d, std::size_t n, std::span<const double> q,
                                                 std::span<const double> source, BoundaryData bd) {
    for (double v : q)
        if (!std::isfinite(v)) throw ValidationError("non-finite coefficient vector q at level " + std::to_string(n));
    d.require_admissible(n);
    const SpatialGrid& g = d.grid();
    const LevelSamples& L = d.level(n);
    const std::size_t np = g.size();

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(np * (g.dim() == 1 ? 3 : 12));
    SpatialOperator out;
    out.source.resize(static_cast<Eigen::Index>(np));
    for (std::size_t p = 0; p < np; ++p) {
        const long slot = g.boundary_slot(p);
        const BoundaryLocal* bc = slot >= 0 ? &L.bc[static_cast<std::size_t>(slot)] : nullptr;
        const double gval = (slot >= 0 && bd == BoundaryData::problem) ? L.g[static_cast<std::size_t>(slot)] : 0.0;
        Row row;
        double rhs = 0.0;
        if (is_algebraic_row(g, p)) {
            row = conormal_row(g, p, bc->gamma, bc->sigma);
            rhs = gval;
        } else {
            row = scheme_row(g, p, d.combined(n, p, q), bc);
            rhs = source[p] - row.g_coef * gval;
        }
        for (const auto& t : row.terms)
            trip.emplace_back(static_cast<int>(p), static_cast<int>(t.node), t.coef);
        out.source[static_cast<Eigen::Index>(p)] = rhs;
    }
    out.matrix.resize(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(np));
    out.matrix.setFromTriplets(trip.begin(), trip.end());
    return out;
}

/// Assembles A(q) at level n with the problem's own source f_0 + sum q_i f_i and data g.
inline SpatialOperator assemble_spatial_operator(const Discretization& d, std::size_t n, std::span<const double> q) {
    const auto f = d.source(n, q);
    return assemble_spatial_operator(d, n, q, f, BoundaryData::problem);
}

inline void require_theta(double theta) {
    if (theta != 1.0 && theta != 0.5) throw ValidationError("theta must be 1 or 0.5");
}

/// One theta step from level n (operator `now`) to n+1 (operator `next`):
///   (I/dt + theta L_{n+1}) u_{n+1} = (I/dt - (1-theta) L_n) u_n + theta F_{n+1} + (1-theta) F_n
/// on equation rows; algebraic rows are imposed at n+1.
inline std::vector<double> step_theta(const SpatialGrid& g, std::span<const double> u_now, const SpatialOperator& now,
                                      const SpatialOperator& next, double dt, double theta, std::size_t level_next) {
    require_theta(theta);
    const auto np = static_cast<Eigen::Index>(g.size());
    const Eigen::Map<const Eigen::VectorXd> un(u_now.data(), np);
    Eigen::VectorXd lu_now;
    if (theta != 1.0) lu_now = now.matrix * un;

    Eigen::SparseMatrix<double> system = theta * next.matrix;
    Eigen::VectorXd rhs(np);
    Eigen::VectorXd mass(np);
    for (Eigen::Index p = 0; p < np; ++p) {
        if (is_algebraic_row(g, static_cast<std::size_t>(p))) {
            mass[p] = 0.0;
            rhs[p] = next.source[p];
        } else {
            mass[p] = 1.0 / dt;
            rhs[p] = un[p] / dt + theta * next.source[p];
            if (theta != 1.0) rhs[p] += (1.0 - theta) * (now.source[p] - lu_now[p]);
        }
    }
    if (theta != 1.0) {
        // Algebraic rows are not time-weighted.
        for (Eigen::Index k = 0; k < system.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(system, k); it; ++it)
                if (is_algebraic_row(g, static_cast<std::size_t>(it.row()))) it.valueRef() /= theta;
    }
    Eigen::SparseMatrix<double> diag(np, np);
    diag.reserve(Eigen::VectorXi::Constant(np, 1));
    for (Eigen::Index p = 0; p < np; ++p) diag.insert(p, p) = mass[p];
    system += diag;
    system.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(system);
    if (lu.info() != Eigen::Success) throw SolverError("singular or rank-deficient step system", level_next);
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !x.allFinite())
        throw SolverError("linear solve failed", level_next);

    const double res = (system * x - rhs).lpNorm<Eigen::Infinity>();
    double scale = rhs.lpNorm<Eigen::Infinity>();
    double norm_a = 0.0;
    for (Eigen::Index k = 0; k < system.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(system, k); it; ++it)
            norm_a = std::max(norm_a, std::abs(it.value()));
    scale = std::max(scale, norm_a * x.lpNorm<Eigen::Infinity>());
    if (res > 1e-10 * std::max(scale, 1e-300)) throw SolverError("linear solve residual above 1e-10 relative", level_next);
    return {x.data(), x.data() + np};
}

/// Marches levels [first, last] from `u_first`. `q_at(n)` gives the s-vector,
/// `source_at(n, q)` the nodal source, both at level n.
template <class QAt, class SourceAt>
StateField integrate(const Discretization& d, std::size_t first, std::size_t last, std::span<const double> u_first,
                     QAt&& q_at, SourceAt&& source_at, BoundaryData bd, double theta) {
    require_theta(theta);
    const SpatialGrid& g = d.grid();
    if (last < first || last >= d.time().levels()) throw Error("integrate: invalid level range");
    if (u_first.size() != g.size()) throw Error("integrate: initial state has the wrong size");
    StateField out(g.size(), first, last - first + 1);
    std::copy(u_first.begin(), u_first.end(), out.level(first).begin());

    auto assemble = [&](std::size_t n) {
        const std::vector<double> q = q_at(n);
        const std::vector<double> f = source_at(n, q);
        return assemble_spatial_operator(d, n, q, f, bd);
    };
    SpatialOperator now = theta != 1.0 ? assemble(first) : SpatialOperator{};
    for (std::size_t n = first; n < last; ++n) {
        SpatialOperator next = assemble(n + 1);
        auto u = step_theta(g, out.level(n), now, next, d.time().dt(), theta, n + 1);
        std::copy(u.begin(), u.end(), out.level(n + 1).begin());
        if (theta != 1.0) now = std::move(next);
    }
    if (!out.all_finite()) throw SolverError("non-finite state", last);
    return out;
}

/// Solves u_t + A(q) u = f_0 + sum q_i f_i, Bu = g on levels [first, last].
inline StateField solve_forward(const Discretization& d, const QTrajectory& q, double theta, std::size_t first,
                                std::size_t last, std::span<const double> u_first) {
    if (q.components() != d.s()) throw ValidationError("q has the wrong number of components");
    if (!q.all_finite()) throw ValidationError("q contains non-finite entries");
    return integrate(
        d, first, last, u_first, [&](std::size_t n) { return q.at(n); },
        [&](std::size_t n, const std::vector<double>& qn) { return d.source(n, qn); }, BoundaryData::problem, theta);
}

inline StateField solve_forward(const Discretization& d, const QTrajectory& q, double theta = 1.0) {
    return solve_forward(d, q, theta, 0, d.time().steps(), d.initial());
}

/// Auxiliary solution: the forward problem with every unknown set to zero.
inline StateField solve_auxiliary_phi(const Discretization& d, double theta, std::size_t first, std::size_t last,
                                      std::span<const double> u_first) {
    return solve_forward(d, QTrajectory(d.s(), 0, d.time().levels()), theta, first, last, u_first);
}

inline StateField solve_auxiliary_phi(const Discretization& d, double theta = 1.0) {
    return solve_auxiliary_phi(d, theta, 0, d.time().steps(), d.initial());
}

/// Applies the stepper's discrete operator (given per-node coefficients) to u
/// at level n and returns its value at every node. Face nodes use the
/// boundary-eliminated rows (with g or zero data); corners use one-sided traces.
template <class OpAt>
std::vector<double> apply_scheme_operator(const Discretization& d, std::size_t n, OpAt&& op_at,
                                          std::span<const double> u, BoundaryData bd) {
    const SpatialGrid& g = d.grid();
    const LevelSamples& L = d.level(n);
    std::vector<double> out(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
        const long slot = g.boundary_slot(p);
        const PointOperator op = op_at(p);
        if (slot < 0 || is_algebraic_row(g, p)) {
            out[p] = trace_row(g, p, op).apply(u);
            continue;
        }
        const auto b = static_cast<std::size_t>(slot);
        const Row row = scheme_row(g, p, op, &L.bc[b]);
        out[p] = row.apply(u, bd == BoundaryData::problem ? L.g[b] : 0.0);
    }
    return out;
}

/// Boundary-node restriction of apply_scheme_operator.
template <class OpAt>
std::vector<double> scheme_boundary_trace(const Discretization& d, std::size_t n, OpAt&& op_at,
                                          std::span<const double> u, BoundaryData bd) {
    const SpatialGrid& g = d.grid();
    const LevelSamples& L = d.level(n);
    std::vector<double> out;
    out.reserve(g.boundary().size());
    for (std::size_t b = 0; b < g.boundary().size(); ++b) {
        const BoundaryNode& bn = g.boundary()[b];
        const PointOperator op = op_at(bn.node);
        if (bn.corner()) {
            out.push_back(trace_row(g, bn.node, op).apply(u));
        } else {
            const Row row = scheme_row(g, bn.node, op, &L.bc[b]);
            out.push_back(row.apply(u, bd == BoundaryData::problem ? L.g[b] : 0.0));
        }
    }
    return out;
}

/// Max-norm residual of the theta-scheme equations satisfied by (u, q),
/// scaled by the largest source magnitude (or 1).
inline double scheme_residual(const Discretization& d, const StateField& u, const QTrajectory& q, double theta) {
    require_theta(theta);
    const SpatialGrid& g = d.grid();
    const double dt = d.time().dt();
    double worst = 0.0, scale = 1.0;
    auto op_at = [&](std::size_t n) { return assemble_spatial_operator(d, n, q.at(n)); };
    SpatialOperator now = op_at(u.first_level());
    for (std::size_t n = u.first_level(); n < u.last_level(); ++n) {
        SpatialOperator next = op_at(n + 1);
        const auto np = static_cast<Eigen::Index>(g.size());
        const Eigen::Map<const Eigen::VectorXd> a(u.level(n).data(), np), b(u.level(n + 1).data(), np);
        const Eigen::VectorXd ln = now.matrix * a, ln1 = next.matrix * b;
        for (Eigen::Index p = 0; p < np; ++p) {
            double res = 0.0;
            if (is_algebraic_row(g, static_cast<std::size_t>(p))) {
                res = ln1[p] - next.source[p];
            } else {
                res = (b[p] - a[p]) / dt + theta * (ln1[p] - next.source[p]) +
                      (1.0 - theta) * (ln[p] - now.source[p]);
            }
            worst = std::max(worst, std::abs(res));
            scale = std::max(scale, std::abs(next.source[p]));
        }
        now = std::move(next);
    }
    return worst / scale;
}

}  // namespace paraid
