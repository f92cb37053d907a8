#pragma once

#include "paraid/errors.hpp"
#include "paraid/field.hpp"
#include "paraid/grid.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace paraid {

/// A_i = sum_k a_k^i d_k + a_0^i, multiplied by the unknown q_i(t).
struct FirstOrderOperator {
    std::vector<FieldSpec> drift;  // a_k^i, one per axis
    FieldSpec reaction;            // a_0^i
};

/// A_0 = -sum a_kl d_kl + sum a_k d_k + a_0, plus the unknown-weighted A_i.
struct OperatorSpec {
    std::vector<FieldSpec> diffusion;  // a_kl, dim x dim row-major
    std::vector<FieldSpec> drift;      // a_k
    FieldSpec reaction;                // a_0
    std::vector<FirstOrderOperator> unknown;
};

/// gamma . grad u + sigma u = g on the boundary.
struct BoundaryConditionSpec {
    std::vector<FieldSpec> conormal;  // gamma_k
    FieldSpec transfer;               // sigma
    FieldSpec data;                   // g
    double compat_tol = 1e-3;         // initial compatibility of u_0 with g(0)
};

/// Boundary weights phi_j(x) and measured series psi_j(t) = <u(t), phi_j>.
struct MeasurementSpec {
    std::vector<FieldSpec> weights;
    std::vector<FieldSpec> data;  // empty when not yet measured / generated
    double compat_tol = 1e-8;

    bool has_data() const { return !data.empty(); }
};

struct ProblemSpec {
    std::string name;
    SpatialGrid grid;
    TimeGrid time;
    OperatorSpec op;
    BoundaryConditionSpec bc;
    FieldSpec base_source;                 // f_0
    std::vector<FieldSpec> source_modes;   // f_{r+1} .. f_s
    FieldSpec initial;                     // u_0
    MeasurementSpec measurement;
    std::vector<FieldSpec> truth;          // optional q*_i(t), used for synthesis and scoring
    std::optional<FieldSpec> exact_solution;  // optional u*(t, x), for forward studies

    std::size_t r() const { return op.unknown.size(); }
    std::size_t s() const { return op.unknown.size() + source_modes.size(); }
    int dim() const { return grid.dim(); }

    /// Structural consistency: list sizes against dimension and counts.
    std::vector<Violation> structural_violations() const {
        std::vector<Violation> v;
        const auto n = static_cast<std::size_t>(dim());
        auto bad = [&](const std::string& what, const std::string& msg) { v.push_back({what, "", 0.0, msg}); };
        if (s() < 1) bad("counts", "at least one unknown (s >= 1) is required");
        if (op.diffusion.size() != n * n) bad("operator.diffusion", "expected a " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
        if (op.drift.size() != n) bad("operator.drift", "expected " + std::to_string(n) + " components");
        for (std::size_t i = 0; i < op.unknown.size(); ++i)
            if (op.unknown[i].drift.size() != n)
                bad("operator.unknown_operators", "operator " + std::to_string(i + 1) + ": expected " + std::to_string(n) + " drift components");
        if (bc.conormal.size() != n) bad("boundary.conormal", "expected " + std::to_string(n) + " components");
        if (measurement.weights.size() != s())
            bad("measurement.weights", "expected s = " + std::to_string(s()) + " weights, got " + std::to_string(measurement.weights.size()));
        if (measurement.has_data() && measurement.data.size() != s())
            bad("measurement.data", "expected s = " + std::to_string(s()) + " series, got " + std::to_string(measurement.data.size()));
        if (!truth.empty() && truth.size() != s())
            bad("truth", "expected s = " + std::to_string(s()) + " functions, got " + std::to_string(truth.size()));
        if (!(measurement.compat_tol > 0.0)) bad("measurement.compat_tol", "must be positive");
        if (!(bc.compat_tol > 0.0)) bad("boundary.compat_tol", "must be positive");
        return v;
    }
};

/// Node values of a scalar field over a contiguous range of time levels.
/// Levels are addressed by their absolute index on the problem's time grid.
class StateField {
public:
    StateField() = default;
    StateField(std::size_t nodes, std::size_t first_level, std::size_t level_count)
        : nodes_(nodes), first_(first_level), count_(level_count), data_(nodes * level_count, 0.0) {}

    std::size_t nodes() const { return nodes_; }
    std::size_t first_level() const { return first_; }
    std::size_t last_level() const { return first_ + count_ - 1; }
    std::size_t level_count() const { return count_; }
    bool has_level(std::size_t n) const { return n >= first_ && n < first_ + count_; }

    std::span<double> level(std::size_t n) { return {data_.data() + offset(n), nodes_}; }
    std::span<const double> level(std::size_t n) const { return {data_.data() + offset(n), nodes_}; }

    const std::vector<double>& data() const { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const StateField&) const = default;

private:
    std::size_t offset(std::size_t n) const {
        if (!has_level(n)) throw Error("state field has no time level " + std::to_string(n));
        return (n - first_) * nodes_;
    }

    std::size_t nodes_ = 0;
    std::size_t first_ = 0;
    std::size_t count_ = 0;
    std::vector<double> data_;
};

/// Samples of the s unknown functions q_i(t_n) over a range of time levels.
class QTrajectory {
public:
    QTrajectory() = default;
    QTrajectory(std::size_t s, std::size_t first_level, std::size_t level_count)
        : s_(s), first_(first_level), count_(level_count), data_(s * level_count, 0.0) {}

    std::size_t components() const { return s_; }
    std::size_t first_level() const { return first_; }
    std::size_t last_level() const { return first_ + count_ - 1; }
    std::size_t level_count() const { return count_; }
    bool has_level(std::size_t n) const { return n >= first_ && n < first_ + count_; }

    double& operator()(std::size_t i, std::size_t n) { return data_[index(i, n)]; }
    double operator()(std::size_t i, std::size_t n) const { return data_[index(i, n)]; }

    /// The s-vector at level n.
    std::vector<double> at(std::size_t n) const {
        std::vector<double> v(s_);
        for (std::size_t i = 0; i < s_; ++i) v[i] = (*this)(i, n);
        return v;
    }

    const std::vector<double>& data() const { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const QTrajectory&) const = default;

private:
    std::size_t index(std::size_t i, std::size_t n) const {
        if (i >= s_ || !has_level(n)) throw Error("q trajectory index out of range");
        return i * count_ + (n - first_);
    }

    std::size_t s_ = 0;
    std::size_t first_ = 0;
    std::size_t count_ = 0;
    std::vector<double> data_;
};

/// Samples expression-defined q_i(t) on the problem time grid.
inline QTrajectory sample_trajectory(std::span<const FieldSpec> q, const TimeGrid& tg) {
    QTrajectory out(q.size(), 0, tg.levels());
    for (std::size_t i = 0; i < q.size(); ++i)
        for (std::size_t n = 0; n < tg.levels(); ++n) out(i, n) = q[i].eval(tg.time(n), 0.0, 0.0);
    return out;
}

}  // namespace paraid
