#pragma once

#include "paraid/errors.hpp"
#include "paraid/problem.hpp"
#include "paraid/stencil.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace paraid {

/// Coefficients of the problem sampled at one time level.
struct LevelSamples {
    std::vector<PointOperator> base;                  // A_0, per node
    std::vector<std::vector<PointOperator>> unknown;  // A_i, i < r, per node (first order only)
    std::vector<double> f0;                           // per node
    std::vector<std::vector<double>> modes;           // f_i, i >= r, per node
    std::vector<BoundaryLocal> bc;                    // per boundary slot
    std::vector<double> g;                            // per boundary slot
    double delta0 = 0.0;                              // min eigenvalue of (a_kl) over nodes
    double epsilon0 = 0.0;                            // min |gamma . nu| over boundary nodes
};

/// A ProblemSpec with every coefficient sampled on its space-time grid.
/// Immutable after construction.
class Discretization {
public:
    explicit Discretization(const ProblemSpec& spec) : spec_(spec), grid_(spec.grid), time_(spec.time) {
        if (auto v = spec.structural_violations(); !v.empty()) throw ValidationError(std::move(v));
        const std::size_t np = grid_.size();
        const std::size_t nb = grid_.boundary().size();
        const int n = grid_.dim();
        const std::size_t r = spec.r();

        levels_.resize(time_.levels());
        for (std::size_t lev = 0; lev < time_.levels(); ++lev) {
            const double t = time_.time(lev);
            LevelSamples& L = levels_[lev];
            L.base.resize(np);
            L.unknown.assign(r, std::vector<PointOperator>(np));
            L.f0.resize(np);
            L.modes.assign(spec.source_modes.size(), std::vector<double>(np));
            L.delta0 = std::numeric_limits<double>::infinity();
            for (std::size_t p = 0; p < np; ++p) {
                PointOperator& op = L.base[p];
                for (int k = 0; k < n; ++k) {
                    for (int l = 0; l < n; ++l)
                        op.a[2 * k + l] = spec.op.diffusion[static_cast<std::size_t>(n * k + l)].at(t, grid_, p);
                    op.b[k] = spec.op.drift[static_cast<std::size_t>(k)].at(t, grid_, p);
                }
                op.c = spec.op.reaction.at(t, grid_, p);
                L.delta0 = std::min(L.delta0, min_eigenvalue(op, n, lev, p));
                for (std::size_t i = 0; i < r; ++i) {
                    PointOperator& ai = L.unknown[i][p];
                    for (int k = 0; k < n; ++k)
                        ai.b[k] = spec.op.unknown[i].drift[static_cast<std::size_t>(k)].at(t, grid_, p);
                    ai.c = spec.op.unknown[i].reaction.at(t, grid_, p);
                }
                L.f0[p] = spec.base_source.at(t, grid_, p);
                for (std::size_t m = 0; m < spec.source_modes.size(); ++m) L.modes[m][p] = spec.source_modes[m].at(t, grid_, p);
            }
            L.bc.resize(nb);
            L.g.resize(nb);
            L.epsilon0 = std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < nb; ++b) {
                const BoundaryNode& bn = grid_.boundary()[b];
                BoundaryLocal& bl = L.bc[b];
                for (int k = 0; k < n; ++k) bl.gamma[k] = spec.bc.conormal[static_cast<std::size_t>(k)].at(t, grid_, bn.node);
                bl.sigma = spec.bc.transfer.at(t, grid_, bn.node);
                L.g[b] = spec.bc.data.at(t, grid_, bn.node);
                // Non-tangency against each incident face normal.
                for (int k = 0; k < n; ++k) {
                    if (bn.side[k] == 0) continue;
                    const double gn = std::abs(bl.gamma[k]);
                    if (gn < L.epsilon0) {
                        L.epsilon0 = gn;
                        if (gn < worst_epsilon_) {
                            worst_epsilon_ = gn;
                            worst_epsilon_where_ = "boundary node " + std::to_string(b) + " (x=" + fmt(bn.x) +
                                                   (n == 2 ? ", y=" + fmt(bn.y) : "") + "), t=" + fmt(t);
                        }
                    }
                }
            }
        }

        initial_.resize(np);
        for (std::size_t p = 0; p < np; ++p) initial_[p] = spec.initial.at(0.0, grid_, p);

        weights_.assign(spec.s(), {});
        for (std::size_t j = 0; j < spec.s(); ++j) weights_[j] = sample_boundary(spec.measurement.weights[j], grid_, 0.0);

        if (spec.measurement.has_data()) {
            psi_.assign(spec.s(), std::vector<double>(time_.levels()));
            for (std::size_t j = 0; j < spec.s(); ++j)
                for (std::size_t lev = 0; lev < time_.levels(); ++lev)
                    psi_[j][lev] = spec.measurement.data[j].eval(time_.time(lev), 0.0, 0.0);
        }
    }

    const ProblemSpec& spec() const { return spec_; }
    const SpatialGrid& grid() const { return grid_; }
    const TimeGrid& time() const { return time_; }
    std::size_t r() const { return spec_.r(); }
    std::size_t s() const { return spec_.s(); }

    const LevelSamples& level(std::size_t n) const { return levels_.at(n); }
    std::span<const double> initial() const { return initial_; }
    /// phi_j sampled on boundary nodes.
    std::span<const double> weight(std::size_t j) const { return weights_.at(j); }
    bool has_data() const { return !psi_.empty(); }
    double psi(std::size_t j, std::size_t n) const { return psi_.at(j).at(n); }

    /// Coefficients of A(q) = A_0 + sum_{i<r} q_i A_i at a node.
    PointOperator combined(std::size_t n, std::size_t node, std::span<const double> q) const {
        const LevelSamples& L = levels_[n];
        PointOperator op = L.base[node];
        for (std::size_t i = 0; i < r(); ++i) op.add_scaled(q[i], L.unknown[i][node]);
        return op;
    }

    /// f_0 + sum_{i>=r} q_i f_i at every node.
    std::vector<double> source(std::size_t n, std::span<const double> q) const {
        const LevelSamples& L = levels_[n];
        std::vector<double> f = L.f0;
        for (std::size_t m = 0; m < L.modes.size(); ++m) {
            const double qi = q[r() + m];
            if (qi == 0.0) continue;
            for (std::size_t p = 0; p < f.size(); ++p) f[p] += qi * L.modes[m][p];
        }
        return f;
    }

    /// Smallest ellipticity constant over all samples, and where it occurs.
    double delta0() const { return worst_delta_; }
    const std::string& delta0_location() const { return worst_delta_where_; }
    double epsilon0() const { return worst_epsilon_; }
    const std::string& epsilon0_location() const { return worst_epsilon_where_; }
    double symmetry_defect() const { return symmetry_defect_; }

    /// Throws unless level n satisfies ellipticity and non-tangency.
    void require_admissible(std::size_t n) const {
        const LevelSamples& L = levels_.at(n);
        std::vector<Violation> v;
        if (!(L.delta0 > 0.0))
            v.push_back({"ellipticity", "t=" + fmt(time_.time(n)), L.delta0,
                         "min eigenvalue of the diffusion matrix delta0 = " + fmt(L.delta0) + " <= 0"});
        if (!(L.epsilon0 > kTangencyFloor))
            v.push_back({"non_tangency", "t=" + fmt(time_.time(n)), L.epsilon0,
                         "min |gamma . nu| epsilon0 = " + fmt(L.epsilon0) + " <= 0"});
        if (!v.empty()) throw ValidationError(std::move(v));
    }

    static constexpr double kTangencyFloor = 1e-12;

    static std::string fmt(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return buf;
    }

private:
    double min_eigenvalue(const PointOperator& op, int n, std::size_t lev, std::size_t p) {
        double lam = op.a[0];
        if (n == 2) {
            const double a12 = op.a[1], a21 = op.a[2];
            const double defect = std::abs(a12 - a21);
            symmetry_defect_ = std::max(symmetry_defect_, defect);
            const double off = 0.5 * (a12 + a21);
            const double mean = 0.5 * (op.a[0] + op.a[3]);
            const double half = 0.5 * (op.a[0] - op.a[3]);
            lam = mean - std::sqrt(half * half + off * off);
        }
        if (lam < worst_delta_) {
            worst_delta_ = lam;
            worst_delta_where_ = "node " + std::to_string(p) + " (x=" + fmt(grid_.x(p)) +
                                 (n == 2 ? ", y=" + fmt(grid_.y(p)) : "") + "), t=" + fmt(time_.time(lev));
        }
        return lam;
    }

    ProblemSpec spec_;
    SpatialGrid grid_;
    TimeGrid time_;
    std::vector<LevelSamples> levels_;
    std::vector<double> initial_;
    std::vector<std::vector<double>> weights_;
    std::vector<std::vector<double>> psi_;
    double worst_delta_ = std::numeric_limits<double>::infinity();
    std::string worst_delta_where_;
    double worst_epsilon_ = std::numeric_limits<double>::infinity();
    std::string worst_epsilon_where_;
    double symmetry_defect_ = 0.0;
};

}  // namespace paraid
