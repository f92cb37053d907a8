#pragma once

#include "paraid/errors.hpp"
#include "paraid/expr.hpp"
#include "paraid/grid.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace paraid {

/// Gridded samples over a subset of the axes {t, x, y}, interpolated
/// piecewise-linearly (multilinearly). Evaluation outside the covered box is
/// an error rather than an extrapolation.
struct Table {
    std::string axes;                        // ordered subset of "txy", e.g. "t" or "xy"
    std::vector<std::vector<double>> coords; // one strictly increasing vector per axis
    std::vector<double> values;              // row-major, last axis fastest

    void validate() const {
        if (axes.empty() || axes.size() != coords.size())
            throw ValidationError("table: axes and coordinate lists disagree");
        std::size_t expected = 1;
        char prev = 0;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            const char c = axes[a];
            if ((c != 't' && c != 'x' && c != 'y') || c <= prev)
                throw ValidationError("table: axes must be an ordered subset of \"txy\"");
            prev = c;
            const auto& v = coords[a];
            if (v.size() < 2) throw ValidationError("table: each axis needs at least two samples");
            for (std::size_t i = 1; i < v.size(); ++i)
                if (!(v[i] > v[i - 1])) throw ValidationError("table: axis coordinates must increase strictly");
            expected *= v.size();
        }
        if (values.size() != expected)
            throw ValidationError("table: expected " + std::to_string(expected) + " values, got " +
                                  std::to_string(values.size()));
        for (double v : values)
            if (!std::isfinite(v)) throw ValidationError("table: non-finite value");
    }

    double eval(double t, double x, std::optional<double> y) const {
        // Locate the cell along each axis.
        std::size_t lo[3];
        double frac[3];
        for (std::size_t a = 0; a < axes.size(); ++a) {
            double p = 0.0;
            switch (axes[a]) {
                case 't': p = t; break;
                case 'x': p = x; break;
                default:
                    if (!y) throw EvalError("table over 'y' evaluated in a one-dimensional problem");
                    p = *y;
            }
            const auto& c = coords[a];
            const double slack = 1e-12 * std::max(1.0, c.back() - c.front());
            if (p < c.front() - slack || p > c.back() + slack)
                throw CoverageError(std::string("tabulated field does not cover ") + axes[a] + " = " +
                                    std::to_string(p) + " (range [" + std::to_string(c.front()) + ", " +
                                    std::to_string(c.back()) + "])");
            p = std::clamp(p, c.front(), c.back());
            auto it = std::upper_bound(c.begin(), c.end(), p);
            std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - c.begin() - 1, 0));
            if (i + 1 >= c.size()) i = c.size() - 2;
            lo[a] = i;
            frac[a] = (p - c[i]) / (c[i + 1] - c[i]);
        }
        // Multilinear blend over the 2^d cell corners.
        const std::size_t d = axes.size();
        double sum = 0.0;
        for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
            double w = 1.0;
            std::size_t flat = 0;
            for (std::size_t a = 0; a < d; ++a) {
                const bool up = (corner >> a) & 1U;
                w *= up ? frac[a] : 1.0 - frac[a];
                flat = flat * coords[a].size() + lo[a] + (up ? 1 : 0);
            }
            if (w != 0.0) sum += w * values[flat];
        }
        return sum;
    }

    bool operator==(const Table&) const = default;
};

/// A function of (t, x[, y]): an expression or a table.
class FieldSpec {
public:
    FieldSpec() : rep_(Expr::number(0.0)) {}
    FieldSpec(Expr e) : rep_(std::move(e)) {}  // NOLINT(google-explicit-constructor)
    FieldSpec(Table t) : rep_(std::move(t)) { std::get<Table>(rep_).validate(); }  // NOLINT

    static FieldSpec constant(double v) { return FieldSpec(Expr::number(v)); }
    static FieldSpec parse(std::string_view text) { return FieldSpec(Expr::parse(text)); }

    bool is_table() const { return std::holds_alternative<Table>(rep_); }
    const Expr* expr() const { return std::get_if<Expr>(&rep_); }
    const Table* table() const { return std::get_if<Table>(&rep_); }

    double eval(double t, double x, std::optional<double> y = std::nullopt) const {
        if (const auto* e = std::get_if<Expr>(&rep_)) return e->eval(t, x, y);
        return std::get<Table>(rep_).eval(t, x, y);
    }

    /// Evaluates at grid node `node` (y supplied only for 2-D grids).
    double at(double t, const SpatialGrid& grid, std::size_t node) const {
        const std::optional<double> y = grid.dim() == 2 ? std::optional<double>(grid.y(node)) : std::nullopt;
        return eval(t, grid.x(node), y);
    }

    bool uses_y() const {
        if (const auto* e = std::get_if<Expr>(&rep_)) return e->uses_y();
        return std::get<Table>(rep_).axes.find('y') != std::string::npos;
    }

private:
    std::variant<Expr, Table> rep_;
};

/// Samples `f` at every (t_n, node); level-major layout [n * grid.size() + node].
inline std::vector<double> sample_field(const FieldSpec& f, const SpatialGrid& grid, const TimeGrid& tg) {
    std::vector<double> out(tg.levels() * grid.size());
    for (std::size_t n = 0; n < tg.levels(); ++n) {
        const double t = tg.time(n);
        for (std::size_t p = 0; p < grid.size(); ++p) out[n * grid.size() + p] = f.at(t, grid, p);
    }
    return out;
}

/// Samples `f` on the boundary nodes at time t.
inline std::vector<double> sample_boundary(const FieldSpec& f, const SpatialGrid& grid, double t) {
    std::vector<double> out;
    out.reserve(grid.boundary().size());
    for (const auto& b : grid.boundary()) out.push_back(f.at(t, grid, b.node));
    return out;
}

}  // namespace paraid
