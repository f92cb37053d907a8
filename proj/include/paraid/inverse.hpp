#pragma once

// Recovery of q_1..q_s from boundary integrals <u(t), phi_j> = psi_j(t).
//
// With u = v + Phi (Phi solves the problem with q = 0), pairing the equation
// for v with phi_j over the boundary gives, level by level,
//
//   B0(t) q(t) = psi~_j'(t) + <A(q) v, phi_j>,    psi~_j = psi_j - <Phi, phi_j>,
//
// where row j of B0 is (-<A_1 Phi, phi_j>, ..., -<A_r Phi, phi_j>,
// <f_{r+1}, phi_j>, ..., <f_s, phi_j>). The map R(q) = B0^{-1} H(q) is iterated
// to a fixed point on a time window; windows are chained by restarting from the
// previous window's final state.
//
// Discretely, the boundary traces of A(q) v and A_i Phi are taken from the same
// rows the stepper uses (TraceMode::scheme), and psi~' from the stepper's time
// difference (backward for theta = 1). The pairing identity then holds exactly
// on the grid, so a converged fixed point reproduces the data to solver accuracy.

#include "paraid/discretization.hpp"
#include "paraid/errors.hpp"
#include "paraid/forward.hpp"
#include "paraid/trace.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace paraid {

enum class TraceMode {
    scheme,     // the stepper's boundary rows (discretely consistent)
    one_sided,  // trace_derivatives-based one-sided stencils
};

enum class DerivativeStencil {
    backward,  // (f_n - f_{n-1}) / dt; matches the theta = 1 step
    centered,  // second order, one-sided second order at the ends
};

struct InverseOptions {
    double theta = 1.0;
    double tol = 1e-10;
    std::size_t max_iter = 50;
    double norm_p = 2.0;
    std::optional<double> det_floor;  // default: 1e-8 * (max_n ||B0_n||_inf)^s over absolute pairings
    std::size_t smoothing = 0;        // odd moving-average width for psi~, 0 = off
    TraceMode trace = TraceMode::scheme;
    std::optional<DerivativeStencil> derivative;  // default from theta
    std::size_t divergence_run = 3;   // consecutive increment growths that count as divergence

    DerivativeStencil stencil() const {
        if (derivative) return *derivative;
        return theta == 1.0 ? DerivativeStencil::backward : DerivativeStencil::centered;
    }
};

// ---------------------------------------------------------------------------
// Compatibility

/// Checks psi_j(0) = <u_0, phi_j> and gamma . grad u_0 + sigma u_0 = g(0) on the boundary.
inline std::vector<Violation> check_compatibility(const Discretization& d) {
    std::vector<Violation> out;
    const SpatialGrid& g = d.grid();
    const auto& spec = d.spec();
    if (d.has_data()) {
        const BoundaryTrace u0 = trace_value(g, d.initial());
        for (std::size_t j = 0; j < d.s(); ++j) {
            const double pairing = pair_with_weight(u0, d.weight(j), g);
            const double gap = std::abs(d.psi(j, 0) - pairing);
            if (!(gap <= spec.measurement.compat_tol))
                out.push_back({"compatibility_psi", "j=" + std::to_string(j + 1), gap,
                               "|psi_j(0) - <u0, phi_j>| = " + Discretization::fmt(gap) + " exceeds " +
                                   Discretization::fmt(spec.measurement.compat_tol)});
        }
    }
    const BoundaryTrace bu0 = conormal_trace(d, d.initial(), 0);
    const auto& g0 = d.level(0).g;
    for (std::size_t b = 0; b < bu0.size(); ++b) {
        const double gap = std::abs(bu0[b] - g0[b]);
        if (!(gap <= spec.bc.compat_tol)) {
            const auto& bn = g.boundary()[b];
            out.push_back({"compatibility_bc",
                           "boundary node " + std::to_string(b) + " (x=" + Discretization::fmt(bn.x) +
                               (g.dim() == 2 ? ", y=" + Discretization::fmt(bn.y) : "") + ")",
                           gap,
                           "|gamma.grad u0 + sigma u0 - g(0)| = " + Discretization::fmt(gap) + " exceeds " +
                               Discretization::fmt(spec.bc.compat_tol)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Solvability matrix

/// Per-level s x s solvability matrices with determinant and conditioning.
struct B0Matrix {
    std::size_t first_level = 0;
    std::vector<Eigen::MatrixXd> matrices;
    std::vector<Eigen::MatrixXd> magnitudes;  // same pairings with |trace| and |phi|, sets the floor scale
    std::vector<double> det;
    std::vector<double> cond;
    double min_abs_det = std::numeric_limits<double>::infinity();
    std::size_t min_det_level = 0;
    double max_cond = 0.0;
    double floor = 0.0;

    const Eigen::MatrixXd& at(std::size_t n) const { return matrices.at(n - first_level); }
};

namespace detail {

inline double condition_number(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    return smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
}

/// Fills det/cond/floor diagnostics over levels [active_first, last].
inline void finalize_b0(B0Matrix& b, std::size_t s, std::size_t active_first, std::optional<double> floor) {
    double max_norm = 0.0;
    for (std::size_t k = 0; k < b.matrices.size(); ++k) {
        const auto& m = b.matrices[k];
        b.det.push_back(m.determinant());
        b.cond.push_back(condition_number(m));
        // Scale from the absolute pairings so that cancellation inside an
        // integral cannot shrink the floor along with the determinant.
        if (b.first_level + k >= active_first)
            max_norm = std::max(max_norm, b.magnitudes[k].rowwise().sum().maxCoeff());
    }
    b.floor = floor ? *floor : 1e-8 * std::pow(max_norm, static_cast<double>(s));
    for (std::size_t k = 0; k < b.matrices.size(); ++k) {
        if (b.first_level + k < active_first) continue;
        const double ad = std::abs(b.det[k]);
        if (ad < b.min_abs_det) {
            b.min_abs_det = ad;
            b.min_det_level = b.first_level + k;
        }
        b.max_cond = std::max(b.max_cond, b.cond[k]);
    }
}

}  // namespace detail

/// B0 at level n from a state (Phi, or u_0 for the initial pre-check).
inline Eigen::MatrixXd solvability_matrix(const Discretization& d, std::size_t n, std::span<const double> state,
                                          TraceMode mode, Eigen::MatrixXd* magnitude = nullptr) {
    const std::size_t s = d.s(), r = d.r();
    const SpatialGrid& g = d.grid();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
    if (magnitude) magnitude->resize(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
    const LevelSamples& L = d.level(n);
    for (std::size_t i = 0; i < s; ++i) {
        BoundaryTrace col;
        if (i < r) {
            auto op_at = [&](std::size_t node) { return L.unknown[i][node]; };
            col = mode == TraceMode::scheme ? scheme_boundary_trace(d, n, op_at, state, BoundaryData::problem)
                                            : operator_trace(g, op_at, state);
            for (double& v : col) v = -v;
        } else {
            col = trace_value(g, L.modes[i - r]);
        }
        for (std::size_t j = 0; j < s; ++j) {
            const auto row = static_cast<Eigen::Index>(j), c = static_cast<Eigen::Index>(i);
            m(row, c) = pair_with_weight(col, d.weight(j), g);
            if (!magnitude) continue;
            std::vector<double> ac(col.size()), aw(col.size());
            const auto w = d.weight(j);
            for (std::size_t b = 0; b < col.size(); ++b) {
                ac[b] = std::abs(col[b]);
                aw[b] = std::abs(w[b]);
            }
            (*magnitude)(row, c) = pair_with_weight(ac, aw, g);
        }
    }
    return m;
}

/// Builds B0 on the levels of `phi`. Rejects the configuration if min |det|
/// over the levels that enter the iteration falls below the floor.
inline B0Matrix build_B0(const Discretization& d, const StateField& phi, const InverseOptions& opts,
                         std::optional<std::size_t> active_first = std::nullopt) {
    B0Matrix b;
    b.first_level = phi.first_level();
    for (std::size_t n = phi.first_level(); n <= phi.last_level(); ++n) {
        Eigen::MatrixXd mag;
        b.matrices.push_back(solvability_matrix(d, n, phi.level(n), opts.trace, &mag));
        b.magnitudes.push_back(std::move(mag));
    }
    detail::finalize_b0(b, d.s(), active_first.value_or(phi.first_level()), opts.det_floor);
    if (!(b.min_abs_det > b.floor) || b.min_abs_det == 0.0) throw DegenerateMatrixError(b.min_det_level, b.min_abs_det, b.floor);
    return b;
}

/// The pre-check matrix with u_0 in place of Phi, at every level. Never
/// throws on degeneracy; callers inspect min_abs_det against floor.
inline B0Matrix build_B0_initial(const Discretization& d, std::optional<double> det_floor = std::nullopt) {
    B0Matrix b;
    b.first_level = 0;
    for (std::size_t n = 0; n < d.time().levels(); ++n) {
        Eigen::MatrixXd mag;
        b.matrices.push_back(solvability_matrix(d, n, d.initial(), TraceMode::one_sided, &mag));
        b.magnitudes.push_back(std::move(mag));
    }
    detail::finalize_b0(b, d.s(), 0, det_floor);
    return b;
}

inline bool b0_degenerate(const B0Matrix& b) { return !(b.min_abs_det > b.floor) || b.min_abs_det == 0.0; }

// ---------------------------------------------------------------------------
// Data derivative

/// Time derivative of a uniformly sampled series.
inline std::vector<double> differentiate(std::span<const double> f, double dt, DerivativeStencil stencil) {
    const std::size_t m = f.size();
    std::vector<double> out(m, 0.0);
    if (m < 2) return out;
    if (m == 2) {
        out[0] = out[1] = (f[1] - f[0]) / dt;
        return out;
    }
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
    if (stencil == DerivativeStencil::backward) {
        for (std::size_t n = 1; n < m; ++n) out[n] = (f[n] - f[n - 1]) / dt;
        return out;
    }
    for (std::size_t n = 1; n + 1 < m; ++n) out[n] = (f[n + 1] - f[n - 1]) / (2.0 * dt);
    out[m - 1] = (3.0 * f[m - 1] - 4.0 * f[m - 2] + f[m - 3]) / (2.0 * dt);
    return out;
}

/// Centered moving average of odd width, truncated at the ends. Width 0 or 1 is the identity.
inline std::vector<double> moving_average(std::span<const double> f, std::size_t width) {
    if (width <= 1) return {f.begin(), f.end()};
    if (width % 2 == 0) throw ValidationError("smoothing width must be odd");
    const std::size_t half = width / 2;
    std::vector<double> out(f.size());
    for (std::size_t n = 0; n < f.size(); ++n) {
        const std::size_t lo = n >= half ? n - half : 0;
        const std::size_t hi = std::min(f.size() - 1, n + half);
        double sum = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) sum += f[k];
        out[n] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

struct PsiTilde {
    std::size_t first_level = 0;
    std::vector<std::vector<double>> value;       // s x levels: psi_j - <Phi, phi_j>
    std::vector<std::vector<double>> derivative;  // s x levels
};

/// psi~_j = psi_j - <Phi, phi_j> on the levels of phi, and its time derivative.
inline PsiTilde psi_tilde_derivative(const Discretization& d, const StateField& phi, DerivativeStencil stencil,
                                     std::size_t smoothing = 0) {
    if (!d.has_data()) throw ValidationError("measured data psi_j are required for inversion");
    PsiTilde out;
    out.first_level = phi.first_level();
    out.value.assign(d.s(), std::vector<double>(phi.level_count()));
    for (std::size_t n = phi.first_level(); n <= phi.last_level(); ++n) {
        const BoundaryTrace tr = trace_value(phi, n, d.grid());
        for (std::size_t j = 0; j < d.s(); ++j)
            out.value[j][n - phi.first_level()] = d.psi(j, n) - pair_with_weight(tr, d.weight(j), d.grid());
    }
    out.derivative.resize(d.s());
    for (std::size_t j = 0; j < d.s(); ++j) {
        out.value[j] = moving_average(out.value[j], smoothing);
        out.derivative[j] = differentiate(out.value[j], d.time().dt(), stencil);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fixed-point map

/// Everything R(q) needs on one window [first, last].
struct WindowProblem {
    const Discretization* disc = nullptr;
    InverseOptions opts;
    std::size_t first = 0;
    std::size_t last = 0;
    StateField phi;
    B0Matrix b0;
    PsiTilde psi;
    std::vector<StateField> ai_phi;               // (A_i Phi)_h at every node, i < r
    std::optional<std::vector<double>> pinned_first;  // q at `first`, fixed by the previous window

    std::size_t levels() const { return last - first + 1; }
};

/// Solves for Phi on [first, last] from `u_first`, then assembles B0 and psi~'.
inline WindowProblem prepare_window(const Discretization& d, std::size_t first, std::size_t last,
                                    std::span<const double> u_first, const InverseOptions& opts,
                                    std::optional<std::vector<double>> pinned_first = std::nullopt) {
    WindowProblem w;
    w.disc = &d;
    w.opts = opts;
    w.first = first;
    w.last = last;
    w.pinned_first = std::move(pinned_first);
    w.phi = solve_auxiliary_phi(d, opts.theta, first, last, u_first);
    const bool first_used = opts.theta != 1.0 && !w.pinned_first;
    w.b0 = build_B0(d, w.phi, opts, first_used ? first : first + 1);
    w.psi = psi_tilde_derivative(d, w.phi, opts.stencil(), opts.smoothing);
    for (std::size_t i = 0; i < d.r(); ++i) {
        StateField f(d.grid().size(), first, w.levels());
        for (std::size_t n = first; n <= last; ++n) {
            const LevelSamples& L = d.level(n);
            auto vals = apply_scheme_operator(
                d, n, [&](std::size_t node) { return L.unknown[i][node]; }, w.phi.level(n), BoundaryData::problem);
            std::copy(vals.begin(), vals.end(), f.level(n).begin());
        }
        w.ai_phi.push_back(std::move(f));
    }
    return w;
}

/// Right-hand side f^1 = sum_{i>=r} q_i f_i - sum_{i<r} q_i (A_i Phi)_h at level n.
inline std::vector<double> reduced_source(const WindowProblem& w, std::size_t n, std::span<const double> q) {
    const Discretization& d = *w.disc;
    const LevelSamples& L = d.level(n);
    std::vector<double> f(d.grid().size(), 0.0);
    for (std::size_t m = 0; m < L.modes.size(); ++m) {
        const double qi = q[d.r() + m];
        for (std::size_t p = 0; p < f.size(); ++p) f[p] += qi * L.modes[m][p];
    }
    for (std::size_t i = 0; i < d.r(); ++i) {
        const auto a = w.ai_phi[i].level(n);
        for (std::size_t p = 0; p < f.size(); ++p) f[p] -= q[i] * a[p];
    }
    return f;
}

/// Solves v_t + A(q) v = f^1 with v(first) = 0 and homogeneous boundary data.
inline StateField solve_reduced(const WindowProblem& w, const QTrajectory& q) {
    const Discretization& d = *w.disc;
    std::vector<double> zero(d.grid().size(), 0.0);
    return integrate(
        d, w.first, w.last, zero, [&](std::size_t n) { return q.at(n); },
        [&](std::size_t n, const std::vector<double>& qn) { return reduced_source(w, n, qn); },
        BoundaryData::homogeneous, w.opts.theta);
}

struct REvaluation {
    QTrajectory q;  // R(q)
    StateField v;   // the reduced solution for the input q
};

/// R(q) = B0^{-1} H(q), H_j = psi~_j' + <A(q) v, phi_j>, level by level.
inline REvaluation evaluate_R(const WindowProblem& w, const QTrajectory& q) {
    const Discretization& d = *w.disc;
    const std::size_t s = d.s();
    if (!q.all_finite()) throw ConvergenceError("non-finite iterate", {}, true);
    REvaluation out{QTrajectory(s, w.first, w.levels()), solve_reduced(w, q)};

    auto level_value = [&](std::size_t n) {
        const std::vector<double> qn = q.at(n);
        auto op_at = [&](std::size_t node) { return d.combined(n, node, qn); };
        const BoundaryTrace av = w.opts.trace == TraceMode::scheme
                                     ? scheme_boundary_trace(d, n, op_at, out.v.level(n), BoundaryData::homogeneous)
                                     : operator_trace(d.grid(), op_at, out.v.level(n));
        Eigen::VectorXd h(static_cast<Eigen::Index>(s));
        for (std::size_t j = 0; j < s; ++j)
            h[static_cast<Eigen::Index>(j)] =
                w.psi.derivative[j][n - w.first] + pair_with_weight(av, d.weight(j), d.grid());
        const Eigen::VectorXd x = w.b0.at(n).partialPivLu().solve(h);
        for (std::size_t i = 0; i < s; ++i) out.q(i, n) = x[static_cast<Eigen::Index>(i)];
    };
    for (std::size_t n = w.first + 1; n <= w.last; ++n) level_value(n);

    // The first level: inherited, or (theta = 1, where no step uses it)
    // extrapolated from the next levels, or computed directly.
    if (w.pinned_first) {
        for (std::size_t i = 0; i < s; ++i) out.q(i, w.first) = (*w.pinned_first)[i];
    } else if (w.opts.theta == 1.0) {
        const std::size_t m = w.last - w.first;
        for (std::size_t i = 0; i < s; ++i) {
            const auto& Q = out.q;
            const std::size_t f = w.first;
            double v = Q(i, f + 1);
            if (m >= 3) v = 3.0 * Q(i, f + 1) - 3.0 * Q(i, f + 2) + Q(i, f + 3);
            else if (m == 2) v = 2.0 * Q(i, f + 1) - Q(i, f + 2);
            out.q(i, f) = v;
        }
    } else {
        level_value(w.first);
    }
    return out;
}

/// Discrete L_p norm over the window (trapezoid weights in time), summed over components.
inline double window_norm(const QTrajectory& q, double dt, double p) {
    double total = 0.0;
    const std::size_t m = q.level_count();
    for (std::size_t i = 0; i < q.components(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double wgt = (m == 1) ? dt : ((k == 0 || k + 1 == m) ? 0.5 * dt : dt);
            acc += wgt * std::pow(std::abs(q(i, q.first_level() + k)), p);
        }
        total += std::pow(acc, 1.0 / p);
    }
    return total;
}

inline QTrajectory difference(const QTrajectory& a, const QTrajectory& b) {
    QTrajectory out(a.components(), a.first_level(), a.level_count());
    for (std::size_t i = 0; i < a.components(); ++i)
        for (std::size_t n = a.first_level(); n <= a.last_level(); ++n) out(i, n) = a(i, n) - b(i, n);
    return out;
}

struct PicardResult {
    QTrajectory q;
    StateField v;
    std::vector<double> increments;  // ||q^{k+1} - q^k|| for k = 0, 1, ...
    std::size_t iterations = 0;
    double norm_r0 = 0.0;            // ||R(0)||

    /// ||dq^{k+1}|| / ||dq^k||.
    std::vector<double> ratios() const {
        std::vector<double> out;
        for (std::size_t k = 1; k < increments.size(); ++k)
            out.push_back(increments[k - 1] > 0.0 ? increments[k] / increments[k - 1] : 0.0);
        return out;
    }
};

/// Picard iteration q^{k+1} = R(q^k) from q^0 = R(0).
inline PicardResult picard_solve(const WindowProblem& w) {
    const auto& o = w.opts;
    const double dt = w.disc->time().dt();
    PicardResult res;
    REvaluation cur = evaluate_R(w, QTrajectory(w.disc->s(), w.first, w.levels()));
    res.norm_r0 = window_norm(cur.q, dt, o.norm_p);
    std::size_t growth = 0;
    for (std::size_t k = 0; k < o.max_iter; ++k) {
        REvaluation next;
        try {
            next = evaluate_R(w, cur.q);
        } catch (const SolverError& e) {
            throw ConvergenceError(std::string("iteration broke down: ") + e.what(), res.increments, true);
        }
        const double inc = window_norm(difference(next.q, cur.q), dt, o.norm_p);
        const double size = window_norm(next.q, dt, o.norm_p);
        if (!std::isfinite(inc) || !std::isfinite(size))
            throw ConvergenceError("iterates became non-finite", res.increments, true);
        res.increments.push_back(inc);
        growth = (res.increments.size() >= 2 && inc > res.increments[res.increments.size() - 2]) ? growth + 1 : 0;
        res.iterations = k + 1;
        // v must belong to the returned iterate: next.v was computed from cur.q.
        cur.q = std::move(next.q);
        cur.v = std::move(next.v);
        if (inc <= o.tol * std::max(1.0, size)) {
            res.q = cur.q;
            res.v = solve_reduced(w, res.q);
            return res;
        }
        if (growth >= o.divergence_run)
            throw ConvergenceError("fixed-point iteration diverged (" + std::to_string(o.divergence_run) +
                                       " consecutive increment growths); shorten the time window",
                                   res.increments, true);
    }
    throw ConvergenceError("no convergence within " + std::to_string(o.max_iter) + " iterations", res.increments,
                           false);
}

// ---------------------------------------------------------------------------
// Windowed continuation

struct WindowPolicy {
    enum class Kind { single, fixed, adaptive } kind = Kind::adaptive;
    std::size_t count = 1;        // windows for Kind::fixed
    std::size_t max_halvings = 6; // for Kind::adaptive

    static WindowPolicy single() { return {Kind::single, 1, 0}; }
    static WindowPolicy fixed(std::size_t k) { return {Kind::fixed, k, 0}; }
    static WindowPolicy adaptive(std::size_t halvings = 6) { return {Kind::adaptive, 1, halvings}; }
};

struct WindowDiagnostics {
    std::size_t first = 0, last = 0;
    double t_start = 0.0, t_end = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    std::vector<double> increments;
    std::vector<double> ratios;
    double norm_r0 = 0.0;
    double min_abs_det = 0.0;
    std::size_t min_det_level = 0;
    double max_cond = 0.0;
    double det_floor = 0.0;
    std::string failure;  // empty on success
};

struct InverseReport {
    bool converged = false;
    std::string failure;
    std::size_t iterations = 0;     // total over windows
    std::size_t halvings = 0;
    std::vector<WindowDiagnostics> windows;  // every attempt, failed ones included
    double overdetermination_residual = 0.0;
    double pde_residual = 0.0;
    double min_abs_det = std::numeric_limits<double>::infinity();
    double max_cond = 0.0;
    double wall_time_s = 0.0;
};

struct InverseSolution {
    QTrajectory q;      // levels [0, covered]
    StateField u;       // u = v + Phi
    StateField phi;
    StateField v;
    InverseReport report;
    std::size_t covered_until = 0;  // last level reached (== steps on success)
};

namespace detail {

inline WindowDiagnostics describe(const Discretization& d, const WindowProblem* w, std::size_t first,
                                  std::size_t last) {
    WindowDiagnostics wd;
    wd.first = first;
    wd.last = last;
    wd.t_start = d.time().time(first);
    wd.t_end = d.time().time(last);
    if (w) {
        wd.min_abs_det = w->b0.min_abs_det;
        wd.min_det_level = w->b0.min_det_level;
        wd.max_cond = w->b0.max_cond;
        wd.det_floor = w->b0.floor;
    }
    return wd;
}

}  // namespace detail

/// Overdetermination residual max_{j,n} |<u(t_n), phi_j> - psi_j(t_n)| over
/// the levels of u, and the scheme residual of (u, q).
struct ResidualSummary {
    double overdetermination = 0.0;
    double pde = 0.0;
};

inline ResidualSummary verify_solution(const Discretization& d, const StateField& u, const QTrajectory& q,
                                       double theta) {
    ResidualSummary out;
    if (!d.has_data()) throw ValidationError("verification needs measured data");
    for (std::size_t n = u.first_level(); n <= u.last_level(); ++n) {
        const BoundaryTrace tr = trace_value(u, n, d.grid());
        for (std::size_t j = 0; j < d.s(); ++j)
            out.overdetermination =
                std::max(out.overdetermination, std::abs(pair_with_weight(tr, d.weight(j), d.grid()) - d.psi(j, n)));
    }
    out.pde = scheme_residual(d, u, q, theta);
    return out;
}

/// Solves on successive windows covering [0, T]. Never throws on iteration
/// failure: the result then has report.converged = false and holds everything
/// computed up to the failing window.
inline InverseSolution windowed_solve(const Discretization& d, const WindowPolicy& policy, const InverseOptions& opts) {
    const std::size_t steps = d.time().steps();
    const std::size_t s = d.s();
    const std::size_t np = d.grid().size();
    InverseSolution sol{QTrajectory(s, 0, steps + 1), StateField(np, 0, steps + 1), StateField(np, 0, steps + 1),
                        StateField(np, 0, steps + 1), {}, 0};
    std::copy(d.initial().begin(), d.initial().end(), sol.u.level(0).begin());
    std::copy(d.initial().begin(), d.initial().end(), sol.phi.level(0).begin());

    std::vector<std::size_t> fixed_breaks;
    if (policy.kind == WindowPolicy::Kind::fixed) {
        TimeGrid tg = d.time();
        tg.set_uniform_windows(policy.count);
        fixed_breaks = tg.windows();
    }

    std::size_t pos = 0;
    std::size_t length = steps;
    std::size_t window_index = 0;
    std::vector<double> u_first(d.initial().begin(), d.initial().end());
    std::optional<std::vector<double>> pinned;

    while (pos < steps) {
        std::size_t last = 0;
        if (policy.kind == WindowPolicy::Kind::fixed) last = fixed_breaks.at(window_index + 1);
        else last = std::min(steps, pos + length);

        std::optional<WindowProblem> w;
        WindowDiagnostics wd;
        try {
            w.emplace(prepare_window(d, pos, last, u_first, opts, pinned));
            wd = detail::describe(d, &*w, pos, last);
            PicardResult pr = picard_solve(*w);
            wd.converged = true;
            wd.iterations = pr.iterations;
            wd.increments = pr.increments;
            wd.ratios = pr.ratios();
            wd.norm_r0 = pr.norm_r0;
            sol.report.iterations += pr.iterations;
            sol.report.min_abs_det = std::min(sol.report.min_abs_det, w->b0.min_abs_det);
            sol.report.max_cond = std::max(sol.report.max_cond, w->b0.max_cond);
            sol.report.windows.push_back(wd);

            for (std::size_t n = pos; n <= last; ++n) {
                for (std::size_t i = 0; i < s; ++i) sol.q(i, n) = pr.q(i, n);
                auto uv = sol.u.level(n);
                const auto ph = w->phi.level(n);
                const auto vv = pr.v.level(n);
                for (std::size_t p = 0; p < np; ++p) uv[p] = vv[p] + ph[p];
                std::copy(ph.begin(), ph.end(), sol.phi.level(n).begin());
                std::copy(vv.begin(), vv.end(), sol.v.level(n).begin());
            }
            const auto ul = sol.u.level(last);
            u_first.assign(ul.begin(), ul.end());
            pinned = pr.q.at(last);
            pos = last;
            sol.covered_until = last;
            ++window_index;
        } catch (const ConvergenceError& e) {
            if (!w) wd = detail::describe(d, nullptr, pos, last);
            wd.converged = false;
            wd.increments = e.increments();
            wd.iterations = e.increments().size();
            wd.failure = e.what();
            sol.report.iterations += wd.iterations;
            sol.report.windows.push_back(wd);
            const bool can_halve = policy.kind == WindowPolicy::Kind::adaptive &&
                                   sol.report.halvings < policy.max_halvings && (last - pos) >= 2;
            if (!can_halve) {
                sol.report.failure = "window [" + Discretization::fmt(wd.t_start) + ", " +
                                     Discretization::fmt(wd.t_end) + "] failed: " + e.what();
                return sol;
            }
            length = std::max<std::size_t>(1, (last - pos) / 2);
            ++sol.report.halvings;
        }
    }
    sol.report.converged = true;
    if (d.has_data()) {
        const ResidualSummary rs = verify_solution(d, sol.u, sol.q, opts.theta);
        sol.report.overdetermination_residual = rs.overdetermination;
        sol.report.pde_residual = rs.pde;
    }
    return sol;
}

}  // namespace paraid
