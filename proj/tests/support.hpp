#pragma once

// Problem builders shared by the test suites.

#include "paraid/io.hpp"
#include "paraid/problem.hpp"
#include "paraid/synth.hpp"

#include <string>
#include <utility>
#include <vector>

namespace testing_support {

using paraid::FieldSpec;

inline std::vector<FieldSpec> parse_all(const std::vector<std::string>& texts) {
    std::vector<FieldSpec> out;
    for (const auto& t : texts) out.push_back(FieldSpec::parse(t));
    return out;
}

/// One-dimensional problem on [0, length] with expression-valued data.
struct Problem1D {
    std::size_t nodes = 11;
    double length = 1.0;
    double horizon = 1.0;
    std::size_t steps = 10;
    std::string a11 = "1", drift = "0", reaction = "0";
    std::vector<std::pair<std::string, std::string>> unknown;  // (drift, reaction) per A_i
    std::string gamma = "2*x-1", sigma = "0", g = "0";
    std::string f0 = "0";
    std::vector<std::string> modes{"1"};
    std::string u0 = "0";
    std::vector<std::string> weights{"1"};
    std::vector<std::string> truth;
    std::string exact;
    double bc_tol = 1e-3;

    paraid::ProblemSpec build() const {
        paraid::ProblemSpec p;
        p.name = "test";
        p.grid = paraid::SpatialGrid(1, {length, 0.0}, {nodes, 1});
        p.time = paraid::TimeGrid(horizon, steps);
        p.op.diffusion = {FieldSpec::parse(a11)};
        p.op.drift = {FieldSpec::parse(drift)};
        p.op.reaction = FieldSpec::parse(reaction);
        for (const auto& [b, c] : unknown) p.op.unknown.push_back({{FieldSpec::parse(b)}, FieldSpec::parse(c)});
        p.bc.conormal = {FieldSpec::parse(gamma)};
        p.bc.transfer = FieldSpec::parse(sigma);
        p.bc.data = FieldSpec::parse(g);
        p.bc.compat_tol = bc_tol;
        p.base_source = FieldSpec::parse(f0);
        p.source_modes = parse_all(modes);
        p.initial = FieldSpec::parse(u0);
        p.measurement.weights = parse_all(weights);
        p.truth = parse_all(truth);
        if (!exact.empty()) p.exact_solution = FieldSpec::parse(exact);
        return p;
    }
};

/// Two-dimensional problem on [0, lx] x [0, ly], isotropic diffusion by default.
struct Problem2D {
    std::size_t nx = 11, ny = 11;
    double lx = 1.0, ly = 1.0;
    double horizon = 0.25;
    std::size_t steps = 10;
    std::vector<std::string> diffusion{"1", "0", "0", "1"};
    std::vector<std::string> drift{"0", "0"};
    std::string reaction = "0";
    std::vector<std::pair<std::vector<std::string>, std::string>> unknown;
    std::vector<std::string> gamma{"2*x-1", "2*y-1"};
    std::string sigma = "0", g = "0";
    std::string f0 = "0";
    std::vector<std::string> modes{"1"};
    std::string u0 = "0";
    std::vector<std::string> weights{"1"};
    std::vector<std::string> truth;
    double bc_tol = 1e-3;

    paraid::ProblemSpec build() const {
        paraid::ProblemSpec p;
        p.name = "test2d";
        p.grid = paraid::SpatialGrid(2, {lx, ly}, {nx, ny});
        p.time = paraid::TimeGrid(horizon, steps);
        p.op.diffusion = parse_all(diffusion);
        p.op.drift = parse_all(drift);
        p.op.reaction = FieldSpec::parse(reaction);
        for (const auto& [b, c] : unknown) p.op.unknown.push_back({parse_all(b), FieldSpec::parse(c)});
        p.bc.conormal = parse_all(gamma);
        p.bc.transfer = FieldSpec::parse(sigma);
        p.bc.data = FieldSpec::parse(g);
        p.bc.compat_tol = bc_tol;
        p.base_source = FieldSpec::parse(f0);
        p.source_modes = parse_all(modes);
        p.initial = FieldSpec::parse(u0);
        p.measurement.weights = parse_all(weights);
        p.truth = parse_all(truth);
        return p;
    }
};

inline paraid::ProblemSpec fixture(const std::string& name) {
    return paraid::read_problem(std::string(PARAID_FIXTURE_DIR) + "/" + name + ".json");
}

/// The spec with noise-free data synthesized from its truth.
inline paraid::ProblemSpec with_data(const paraid::ProblemSpec& spec, bool inverse_crime, double theta = 1.0,
                                     std::size_t oversample = 2) {
    paraid::SynthConfig cfg;
    cfg.inverse_crime = inverse_crime;
    cfg.oversample = oversample;
    cfg.theta = theta;
    return paraid::with_measurements(spec, paraid::generate_measurements(spec, cfg).measurement);
}

}  // namespace testing_support
