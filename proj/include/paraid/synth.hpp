#pragma once

// Synthetic measurements from a known q*, seeded noise, and error scores.

#include "paraid/discretization.hpp"
#include "paraid/errors.hpp"
#include "paraid/forward.hpp"
#include "paraid/trace.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace paraid {

struct SynthConfig {
    std::vector<FieldSpec> truth;  // q*_i(t); empty means "use spec.truth"
    std::size_t oversample = 2;    // refinement factor in space and time for data generation
    bool inverse_crime = false;    // generate on the inversion grid itself
    double noise = 0.0;            // relative Gaussian level
    std::uint64_t seed = 0;
    double theta = 1.0;

    std::size_t factor() const { return inverse_crime ? 1 : oversample; }

    void validate() const {
        std::vector<Violation> v;
        if (oversample < 1) v.push_back({"synth.oversample", "", 0.0, "oversampling factor must be >= 1"});
        if (!(noise >= 0.0) || !std::isfinite(noise))
            v.push_back({"synth.noise", "", noise, "noise level must be a finite number >= 0"});
        if (!v.empty()) throw ValidationError(std::move(v));
    }
};

struct SynthResult {
    MeasurementSpec measurement;
    QTrajectory truth;                       // q* on the inversion time grid
    std::vector<std::vector<double>> psi;    // s x levels, as stored in measurement.data
};

/// Series on the time grid as a tabulated field over t.
inline FieldSpec time_series(const TimeGrid& tg, std::vector<double> values) {
    Table t;
    t.axes = "t";
    t.coords.emplace_back(tg.levels());
    for (std::size_t n = 0; n < tg.levels(); ++n) t.coords[0][n] = tg.time(n);
    t.values = std::move(values);
    return FieldSpec(std::move(t));
}

/// psi_j(t_n)(1 + level * xi_jn) with xi standard normal; t = 0 stays exact.
/// The normals come from std::mt19937_64(seed) through Box-Muller (one pair
/// per two samples, j-major order), so output is reproducible bit for bit.
inline std::vector<std::vector<double>> add_noise(std::vector<std::vector<double>> psi, double level,
                                                  std::uint64_t seed) {
    if (!(level >= 0.0)) throw ValidationError("noise level must be >= 0");
    if (level == 0.0) return psi;
    std::mt19937_64 rng(seed);
    auto uniform = [&] {  // (0, 1]
        return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
    };
    bool have_spare = false;
    double spare = 0.0;
    auto normal = [&] {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double a = 2.0 * M_PI * uniform();
        spare = r * std::sin(a);
        have_spare = true;
        return r * std::cos(a);
    };
    for (auto& series : psi)
        for (std::size_t n = 1; n < series.size(); ++n) series[n] *= 1.0 + level * normal();
    return psi;
}

/// Solves the forward problem with q* (on a grid refined by cfg.factor() in
/// space and time) and records psi_j on the inversion time grid. psi_j(0) is
/// paired on the inversion grid so the data are compatible with u_0 exactly.
inline SynthResult generate_measurements(const ProblemSpec& spec, const SynthConfig& cfg) {
    cfg.validate();
    const std::vector<FieldSpec>& truth = cfg.truth.empty() ? spec.truth : cfg.truth;
    if (truth.size() != spec.s())
        throw ValidationError("synthesis needs " + std::to_string(spec.s()) + " true coefficient functions, got " +
                              std::to_string(truth.size()));
    const std::size_t k = cfg.factor();

    ProblemSpec fine = spec;
    fine.measurement.data.clear();
    if (k > 1) {
        fine.grid = refine(spec.grid, k);
        fine.time = spec.time.refined(k);
    }
    const Discretization fd(fine);
    const QTrajectory q_fine = sample_trajectory(truth, fd.time());
    const StateField u = solve_forward(fd, q_fine, cfg.theta);

    ProblemSpec coarse = spec;
    coarse.measurement.data.clear();
    const SpatialGrid& cg = coarse.grid;
    std::vector<double> u0(cg.size());
    for (std::size_t p = 0; p < cg.size(); ++p) u0[p] = coarse.initial.at(0.0, cg, p);
    const BoundaryTrace u0_trace = trace_value(cg, u0);

    const TimeGrid& tg = spec.time;
    SynthResult out;
    out.psi.assign(spec.s(), std::vector<double>(tg.levels()));
    for (std::size_t j = 0; j < spec.s(); ++j) {
        const std::vector<double> w = sample_boundary(spec.measurement.weights[j], cg, 0.0);
        out.psi[j][0] = pair_with_weight(u0_trace, w, cg);
    }
    for (std::size_t n = 1; n < tg.levels(); ++n) {
        const BoundaryTrace tr = trace_value(u, n * k, fd.grid());
        for (std::size_t j = 0; j < spec.s(); ++j) out.psi[j][n] = pair_with_weight(tr, fd.weight(j), fd.grid());
    }
    out.psi = add_noise(std::move(out.psi), cfg.noise, cfg.seed);

    out.measurement = spec.measurement;
    out.measurement.data.clear();
    for (const auto& series : out.psi) out.measurement.data.push_back(time_series(tg, series));
    out.truth = sample_trajectory(truth, tg);
    return out;
}

/// The problem with its measured data replaced.
inline ProblemSpec with_measurements(ProblemSpec spec, MeasurementSpec m) {
    spec.measurement = std::move(m);
    return spec;
}

struct ComponentScore {
    double l2 = 0.0;    // relative unless `absolute`
    double linf = 0.0;  // relative unless `absolute`
    bool absolute = false;
};

struct Score {
    std::vector<ComponentScore> components;
    ComponentScore aggregate;
};

/// Relative discrete L2 (trapezoid in time) and L-infinity errors. When the
/// reference is identically zero the absolute errors are reported and flagged.
inline Score score(const QTrajectory& rec, const QTrajectory& truth, double dt) {
    if (rec.components() != truth.components() || rec.first_level() != truth.first_level() ||
        rec.level_count() != truth.level_count())
        throw ValidationError("score: trajectories live on different grids");
    const std::size_t m = truth.level_count();
    auto weight = [&](std::size_t k) { return m == 1 ? dt : (k == 0 || k + 1 == m) ? 0.5 * dt : dt; };
    Score s;
    double err2_all = 0.0, ref2_all = 0.0, errinf_all = 0.0, refinf_all = 0.0;
    for (std::size_t i = 0; i < truth.components(); ++i) {
        double err2 = 0.0, ref2 = 0.0, errinf = 0.0, refinf = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t n = truth.first_level() + k;
            const double e = rec(i, n) - truth(i, n);
            err2 += weight(k) * e * e;
            ref2 += weight(k) * truth(i, n) * truth(i, n);
            errinf = std::max(errinf, std::abs(e));
            refinf = std::max(refinf, std::abs(truth(i, n)));
        }
        ComponentScore c;
        c.absolute = ref2 == 0.0;
        c.l2 = c.absolute ? std::sqrt(err2) : std::sqrt(err2 / ref2);
        c.linf = c.absolute ? errinf : errinf / refinf;
        s.components.push_back(c);
        err2_all += err2;
        ref2_all += ref2;
        errinf_all = std::max(errinf_all, errinf);
        refinf_all = std::max(refinf_all, refinf);
    }
    s.aggregate.absolute = ref2_all == 0.0;
    s.aggregate.l2 = s.aggregate.absolute ? std::sqrt(err2_all) : std::sqrt(err2_all / ref2_all);
    s.aggregate.linf = s.aggregate.absolute ? errinf_all : errinf_all / refinf_all;
    return s;
}

}  // namespace paraid
