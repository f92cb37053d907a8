#pragma once

#include "paraid/errors.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace paraid {

/// A node on the boundary of the domain.
///
/// `side[k]` is the outward sign along axis k: -1 on the low face, +1 on the
/// high face, 0 if the node is not on a face normal to k. Edge nodes have
/// exactly one nonzero entry, 2-D corners have two.
struct BoundaryNode {
    std::size_t node = 0;
    double x = 0.0;
    double y = 0.0;
    std::array<double, 2> normal{};  // outward unit normal; corners use the diagonal
    double weight = 0.0;             // trapezoid length (2-D) or 1 (1-D counting measure)
    std::array<int, 2> side{};

    bool corner() const { return side[0] != 0 && side[1] != 0; }
    /// Axis of the face normal for non-corner nodes.
    int normal_axis() const { return side[0] != 0 ? 0 : 1; }
    int outward_sign() const { return side[normal_axis()]; }
};

/// Uniform tensor-product grid on [0, Lx] or [0, Lx] x [0, Ly].
/// Nodes are numbered x-fastest: index = i + Nx * j.
class SpatialGrid {
public:
    SpatialGrid() = default;

    SpatialGrid(int dim, std::array<double, 2> extent, std::array<std::size_t, 2> count)
        : dim_(dim), extent_(extent), count_(count) {
        if (dim != 1 && dim != 2) throw ValidationError("grid dimension must be 1 or 2");
        if (dim == 1) {
            extent_[1] = 0.0;
            count_[1] = 1;
        }
        for (int k = 0; k < dim; ++k) {
            if (!(extent_[k] > 0.0) || !std::isfinite(extent_[k]))
                throw ValidationError("grid extent must be positive and finite");
            if (count_[k] < 3)
                throw ValidationError("grid needs at least 3 nodes per axis (boundary-trace stencils use three nodes)");
            spacing_[k] = extent_[k] / static_cast<double>(count_[k] - 1);
        }
        build_boundary();
    }

    int dim() const { return dim_; }
    std::array<double, 2> extent() const { return extent_; }
    std::array<std::size_t, 2> count() const { return count_; }
    std::array<double, 2> spacing() const { return spacing_; }
    std::size_t nx() const { return count_[0]; }
    std::size_t ny() const { return count_[1]; }
    double hx() const { return spacing_[0]; }
    double hy() const { return spacing_[1]; }
    std::size_t size() const { return count_[0] * count_[1]; }

    std::size_t index(std::size_t i, std::size_t j = 0) const { return i + count_[0] * j; }
    std::size_t i_of(std::size_t node) const { return node % count_[0]; }
    std::size_t j_of(std::size_t node) const { return node / count_[0]; }

    /// Coordinate of node i along axis k. Computed as L * (i / (N-1)) so that
    /// refined grids reproduce coarse node positions bit for bit.
    double coord(int axis, std::size_t i) const {
        if (count_[axis] == 1) return 0.0;
        return extent_[axis] * (static_cast<double>(i) / static_cast<double>(count_[axis] - 1));
    }
    double x(std::size_t node) const { return coord(0, i_of(node)); }
    double y(std::size_t node) const { return coord(1, j_of(node)); }

    const std::vector<BoundaryNode>& boundary() const { return boundary_; }
    /// Position of `node` in boundary(), or -1 for interior nodes.
    long boundary_slot(std::size_t node) const { return slot_[node]; }
    bool on_boundary(std::size_t node) const { return slot_[node] >= 0; }

    bool operator==(const SpatialGrid& o) const {
        return dim_ == o.dim_ && extent_ == o.extent_ && count_ == o.count_;
    }

private:
    void build_boundary() {
        slot_.assign(size(), -1);
        boundary_.clear();
        if (dim_ == 1) {
            add(index(0), {-1, 0}, {-1.0, 0.0}, 1.0);
            add(index(count_[0] - 1), {1, 0}, {1.0, 0.0}, 1.0);
            return;
        }
        const std::size_t nx = count_[0], ny = count_[1];
        const double hx = spacing_[0], hy = spacing_[1];
        const double d = 1.0 / std::sqrt(2.0);
        const double corner_w = 0.5 * (hx + hy);
        // Counter-clockwise from the origin.
        add(index(0, 0), {-1, -1}, {-d, -d}, corner_w);
        for (std::size_t i = 1; i + 1 < nx; ++i) add(index(i, 0), {0, -1}, {0.0, -1.0}, hx);
        add(index(nx - 1, 0), {1, -1}, {d, -d}, corner_w);
        for (std::size_t j = 1; j + 1 < ny; ++j) add(index(nx - 1, j), {1, 0}, {1.0, 0.0}, hy);
        add(index(nx - 1, ny - 1), {1, 1}, {d, d}, corner_w);
        for (std::size_t i = nx - 2; i >= 1; --i) add(index(i, ny - 1), {0, 1}, {0.0, 1.0}, hx);
        add(index(0, ny - 1), {-1, 1}, {-d, d}, corner_w);
        for (std::size_t j = ny - 2; j >= 1; --j) add(index(0, j), {-1, 0}, {-1.0, 0.0}, hy);
    }

    void add(std::size_t node, std::array<int, 2> side, std::array<double, 2> normal, double w) {
        slot_[node] = static_cast<long>(boundary_.size());
        boundary_.push_back({node, x(node), y(node), normal, w, side});
    }

    int dim_ = 1;
    std::array<double, 2> extent_{1.0, 0.0};
    std::array<std::size_t, 2> count_{3, 1};
    std::array<double, 2> spacing_{0.5, 0.0};
    std::vector<BoundaryNode> boundary_;
    std::vector<long> slot_;
};

inline SpatialGrid build_grid(int dim, std::array<double, 2> extent, std::array<std::size_t, 2> count) {
    return SpatialGrid(dim, extent, count);
}

/// Nested refinement: (N - 1) * factor + 1 nodes per axis.
inline SpatialGrid refine(const SpatialGrid& g, std::size_t factor) {
    if (factor < 2) throw ValidationError("refinement factor must be at least 2");
    std::array<std::size_t, 2> c = g.count();
    for (int k = 0; k < g.dim(); ++k) c[k] = (c[k] - 1) * factor + 1;
    return SpatialGrid(g.dim(), g.extent(), c);
}

/// Sum over boundary nodes of value * weight_fn * quadrature weight.
/// Trapezoidal along each edge in 2-D; counting measure in 1-D.
inline double boundary_integral(std::span<const double> values, std::span<const double> weight_fn,
                                const SpatialGrid& grid) {
    const auto& b = grid.boundary();
    if (values.size() != b.size() || weight_fn.size() != b.size())
        throw Error("boundary_integral: expected one value per boundary node (" + std::to_string(b.size()) + ")");
    double sum = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) sum += values[k] * weight_fn[k] * b[k].weight;
    return sum;
}

/// Uniform time grid on [0, T] with window boundaries aligned to levels.
class TimeGrid {
public:
    TimeGrid() = default;

    TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("time horizon must be positive");
        if (steps < 1) throw ValidationError("time grid needs at least one step");
        dt_ = horizon / static_cast<double>(steps);
        windows_ = {0, steps};
    }

    double horizon() const { return horizon_; }
    std::size_t steps() const { return steps_; }
    std::size_t levels() const { return steps_ + 1; }
    double dt() const { return dt_; }
    double time(std::size_t n) const {
        return horizon_ * (static_cast<double>(n) / static_cast<double>(steps_));
    }

    /// Window boundaries as level indices: 0 = n_0 < n_1 < ... = steps.
    const std::vector<std::size_t>& windows() const { return windows_; }

    void set_windows(std::vector<std::size_t> breaks) {
        if (breaks.size() < 2 || breaks.front() != 0 || breaks.back() != steps_)
            throw ValidationError("windows must start at level 0 and end at the last level");
        for (std::size_t k = 1; k < breaks.size(); ++k)
            if (breaks[k] <= breaks[k - 1]) throw ValidationError("window boundaries must increase strictly");
        windows_ = std::move(breaks);
    }

    /// Splits [0, T] into `k` windows of (nearly) equal level counts.
    void set_uniform_windows(std::size_t k) {
        if (k < 1 || k > steps_) throw ValidationError("window count must lie in [1, steps]");
        std::vector<std::size_t> b(k + 1);
        for (std::size_t m = 0; m <= k; ++m) b[m] = (steps_ * m) / k;
        set_windows(std::move(b));
    }

    TimeGrid refined(std::size_t factor) const { return TimeGrid(horizon_, steps_ * factor); }

private:
    double horizon_ = 1.0;
    std::size_t steps_ = 1;
    double dt_ = 1.0;
    std::vector<std::size_t> windows_{0, 1};
};

}  // namespace paraid
