#include "paraid/app.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <iostream>

namespace {

/// "NX" or "NX,NY".
std::array<std::size_t, 2> parse_grid(const std::string& text) {
    std::array<std::size_t, 2> c{0, 0};
    const auto comma = text.find(',');
    auto one = [](std::string_view s, std::size_t& v) {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || v < 3)
            throw paraid::ValidationError("--grid expects NX[,NY] with at least 3 nodes per axis");
    };
    one(std::string_view(text).substr(0, comma), c[0]);
    if (comma != std::string::npos) one(std::string_view(text).substr(comma + 1), c[1]);
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recovery of time-dependent coefficients in parabolic equations from boundary integral data"};
    app.require_subcommand(1);

    paraid::RunConfig cfg;
    std::string grid, policy = "adaptive";
    std::size_t nt = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", cfg.config, "problem JSON file")->required();
        sub->add_option("--out", cfg.out, "output directory");
        sub->add_option("--grid", grid, "spatial nodes NX[,NY]");
        sub->add_option("--nt", nt, "time steps");
        sub->add_option("--theta", cfg.theta, "time weighting: 1 (backward Euler) or 0.5 (Crank-Nicolson)");
    };
    auto solver = [&](CLI::App* sub) {
        sub->add_option("--tol", cfg.tol, "fixed-point tolerance");
        sub->add_option("--max-iter", cfg.max_iter, "fixed-point iteration budget per window");
        sub->add_option("--window-policy", policy, "single, fixed:K or adaptive");
        sub->add_option("--smooth", cfg.smoothing, "odd moving-average width applied to the data before differentiation");
        sub->add_option("--norm-p", cfg.norm_p, "exponent of the increment norm");
    };
    auto synthesis = [&](CLI::App* sub) {
        sub->add_option("--noise", cfg.noise, "relative Gaussian noise level");
        sub->add_option("--seed", cfg.seed, "noise seed");
        sub->add_option("--oversample", cfg.oversample, "refinement factor for data generation (1 = same grid)");
    };

    auto* check = app.add_subcommand("check", "validate a problem without solving");
    common(check);
    auto* forward = app.add_subcommand("forward", "solve the forward problem");
    common(forward);
    auto* synth = app.add_subcommand("synth", "generate synthetic measurements");
    common(synth);
    synthesis(synth);
    auto* invert = app.add_subcommand("invert", "recover q from measurements");
    common(invert);
    solver(invert);
    synthesis(invert);
    invert->add_flag("--emit-solution", cfg.emit_solution, "also write u_final.csv");
    auto* study = app.add_subcommand("study", "grid refinement study");
    common(study);
    solver(study);
    synthesis(study);
    study->add_option("--levels", cfg.levels, "refinement levels (>= 3)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? paraid::kExitOk : paraid::kExitValidation;
    }

    try {
        cfg.command = app.get_subcommands().front()->get_name();
        if (!grid.empty()) cfg.grid = parse_grid(grid);
        if (nt > 0) cfg.nt = nt;
        cfg.policy = paraid::parse_window_policy(policy);
    } catch (const paraid::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return paraid::kExitValidation;
    }
    return paraid::run(cfg);
}
