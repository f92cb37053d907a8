#pragma once

// Subcommand drivers behind the command-line tool. Each returns an exit code:
// 0 success, 1 validation or usage error, 2 non-convergence, 3 I/O error.

#include "paraid/discretization.hpp"
#include "paraid/errors.hpp"
#include "paraid/forward.hpp"
#include "paraid/inverse.hpp"
#include "paraid/io.hpp"
#include "paraid/synth.hpp"

#include <Eigen/Core>

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace paraid {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNoConvergence = 2, kExitIo = 3 };

struct RunConfig {
    std::string command;
    std::filesystem::path config;
    std::filesystem::path out = ".";
    std::optional<std::array<std::size_t, 2>> grid;
    std::optional<std::size_t> nt;
    double theta = 1.0;
    double tol = 1e-10;
    std::size_t max_iter = 50;
    WindowPolicy policy = WindowPolicy::adaptive();
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::size_t oversample = 2;
    bool emit_solution = false;
    std::size_t smoothing = 0;
    std::size_t levels = 3;  // study
    double norm_p = 2.0;

    InverseOptions inverse_options() const {
        InverseOptions o;
        o.theta = theta;
        o.tol = tol;
        o.max_iter = max_iter;
        o.smoothing = smoothing;
        o.norm_p = norm_p;
        return o;
    }

    SynthConfig synth_config() const {
        SynthConfig s;
        s.oversample = oversample;
        s.inverse_crime = oversample == 1;
        s.noise = noise;
        s.seed = seed;
        s.theta = theta;
        return s;
    }

    std::vector<Violation> violations() const {
        std::vector<Violation> v;
        auto bad = [&](const std::string& what, double mag, const std::string& msg) { v.push_back({what, "", mag, msg}); };
        if (!(tol > 0.0)) bad("--tol", tol, "tolerance must be > 0");
        if (theta != 1.0 && theta != 0.5) bad("--theta", theta, "theta must be 1 or 0.5");
        if (max_iter < 1) bad("--max-iter", 0.0, "at least one iteration is required");
        if (!(noise >= 0.0)) bad("--noise", noise, "noise level must be >= 0");
        if (oversample < 1) bad("--oversample", 0.0, "oversampling factor must be >= 1");
        if (smoothing != 0 && smoothing % 2 == 0) bad("--smooth", static_cast<double>(smoothing), "smoothing width must be odd");
        if (!(norm_p >= 1.0)) bad("--norm-p", norm_p, "norm exponent must be >= 1");
        if (policy.kind == WindowPolicy::Kind::fixed && policy.count < 1) bad("--window-policy", 0.0, "fixed:K needs K >= 1");
        return v;
    }
};

/// "single", "adaptive" or "fixed:K".
inline WindowPolicy parse_window_policy(const std::string& text) {
    if (text == "single") return WindowPolicy::single();
    if (text == "adaptive") return WindowPolicy::adaptive();
    if (text.rfind("fixed:", 0) == 0) {
        const std::string k = text.substr(6);
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(k, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == k.size() && used > 0 && v >= 1) return WindowPolicy::fixed(v);
    }
    throw ValidationError("--window-policy must be single, adaptive or fixed:K with K >= 1 (got \"" + text + "\")");
}

inline std::string window_policy_name(const WindowPolicy& p) {
    switch (p.kind) {
        case WindowPolicy::Kind::single: return "single";
        case WindowPolicy::Kind::fixed: return "fixed:" + std::to_string(p.count);
        default: return "adaptive";
    }
}

/// Grid and time-step overrides from the command line.
inline ProblemSpec apply_overrides(ProblemSpec spec, const RunConfig& cfg) {
    if (cfg.grid) {
        auto c = *cfg.grid;
        if (spec.dim() == 1) c[1] = 1;
        else if (c[1] == 0) c[1] = c[0];
        spec.grid = SpatialGrid(spec.dim(), spec.grid.extent(), c);
    }
    if (cfg.nt) spec.time = TimeGrid(spec.time.horizon(), *cfg.nt);
    return spec;
}

namespace detail {

inline json config_echo(const RunConfig& c) {
    json grid = nullptr;
    if (c.grid) grid = {(*c.grid)[0], (*c.grid)[1]};
    return {{"command", c.command},
            {"config", c.config.generic_string()},
            {"grid", grid},
            {"nt", c.nt ? json(*c.nt) : json(nullptr)},
            {"theta", c.theta},
            {"tol", c.tol},
            {"max_iter", c.max_iter},
            {"window_policy", window_policy_name(c.policy)},
            {"noise", c.noise},
            {"seed", c.seed},
            {"oversample", c.oversample},
            {"smoothing", c.smoothing},
            {"norm_p", c.norm_p},
            {"emit_solution", c.emit_solution},
            {"levels", c.levels}};
}

inline json report_header(const RunConfig& c, const ProblemSpec* spec) {
    json r;
    r["schema"] = kReportSchema;
    r["versions"] = {{"paraid", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)}};
    r["config"] = config_echo(c);
    r["seed"] = c.seed;
    if (spec) {
        r["problem"] = {{"name", spec->name},
                        {"dim", spec->dim()},
                        {"nodes", {spec->grid.count()[0], spec->grid.count()[1]}},
                        {"steps", spec->time.steps()},
                        {"horizon", spec->time.horizon()},
                        {"r", spec->r()},
                        {"s", spec->s()}};
    }
    return r;
}

/// Creates the output directory and proves it writable before any solve.
inline void prepare_output(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    const auto probe = dir / ".write_probe";
    write_text(probe, "");
    std::filesystem::remove(probe, ec);
}

inline void write_timing(const std::filesystem::path& dir, double seconds) {
    write_text(dir / "timing.json", json{{"wall_time_s", seconds}}.dump(2) + "\n");
}

inline void print_violations(std::ostream& err, const ValidationError& e) {
    err << "validation failed (" << e.violations().size() << "):\n";
    for (const auto& v : e.violations()) {
        err << "  - " << v.condition;
        if (!v.location.empty()) err << " [" << v.location << "]";
        err << ": " << v.message << "\n";
    }
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Loads, overrides and validates; throws ValidationError listing everything.
inline std::pair<ProblemSpec, Audit> load_for_run(const RunConfig& cfg) {
    if (!std::filesystem::exists(cfg.config)) throw IoError("problem file not found: " + cfg.config.string());
    ProblemSpec spec = apply_overrides(read_problem(cfg.config), cfg);
    const Discretization d(spec);
    Audit a = audit(d);
    if (!a.violations.empty()) throw ValidationError(a.violations);
    return {std::move(spec), std::move(a)};
}

}  // namespace detail

/// Validation audit only. Always exit 0 unless the file cannot be read.
inline int run_check(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        detail::prepare_output(cfg.out);
        if (!std::filesystem::exists(cfg.config)) throw IoError("problem file not found: " + cfg.config.string());
        json r = detail::report_header(cfg, nullptr);
        try {
            ProblemSpec spec = apply_overrides(read_problem(cfg.config), cfg);
            const Discretization d(spec);
            r = detail::report_header(cfg, &spec);
            r["audit"] = audit_to_json(audit(d));
        } catch (const ValidationError& e) {
            r["audit"] = {{"checks", json::object()}, {"violations", violations_to_json(e.violations())}, {"warnings", json::array()}};
        }
        const std::string text = r.dump(2) + "\n";
        write_text(cfg.out / "check.json", text);
        out << text;
        return kExitOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
}

/// Forward solve with the problem's true q (zero when absent).
inline int run_forward(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (auto v = cfg.violations(); !v.empty()) throw ValidationError(v);
        detail::prepare_output(cfg.out);
        auto [spec, aud] = detail::load_for_run(cfg);
        const Discretization d(spec);
        const QTrajectory q = spec.truth.empty() ? QTrajectory(d.s(), 0, d.time().levels()) : sample_trajectory(spec.truth, d.time());
        const StateField u = solve_forward(d, q, cfg.theta);
        const std::size_t last = d.time().steps();

        std::vector<std::vector<double>> psi(d.s(), std::vector<double>(d.time().levels()));
        for (std::size_t n = 0; n < d.time().levels(); ++n) {
            const auto pairs = pair_with_weights(trace_value(u, n, d.grid()), d);
            for (std::size_t j = 0; j < d.s(); ++j) psi[j][n] = pairs[j];
        }
        json r = detail::report_header(cfg, &spec);
        r["audit"] = audit_to_json(aud);
        r["forward"] = {{"scheme_residual", number(scheme_residual(d, u, q, cfg.theta))}, {"truth_used", !spec.truth.empty()}};
        if (spec.exact_solution) {
            double e = 0.0;
            for (std::size_t n = 0; n <= last; ++n)
                for (std::size_t p = 0; p < d.grid().size(); ++p)
                    e = std::max(e, std::abs(u.level(n)[p] - spec.exact_solution->at(d.time().time(n), d.grid(), p)));
            r["forward"]["max_error_vs_exact"] = number(e);
        }
        write_text(cfg.out / "u_final.csv", state_csv(u, last, d.grid()));
        write_text(cfg.out / "psi_generated.csv", series_csv(psi, d.time()));
        write_text(cfg.out / "report.json", r.dump(2) + "\n");
        detail::write_timing(cfg.out, detail::elapsed(t0));
        out << "forward: " << d.time().steps() << " steps on " << d.grid().size() << " nodes\n";
        return kExitOk;
    } catch (const ValidationError& e) {
        detail::print_violations(err, e);
        return kExitValidation;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

/// Synthetic measurements from the problem's truth. Writes psi_generated.csv
/// and problem_with_data.json (ready for `invert`).
inline int run_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (auto v = cfg.violations(); !v.empty()) throw ValidationError(v);
        detail::prepare_output(cfg.out);
        if (!std::filesystem::exists(cfg.config)) throw IoError("problem file not found: " + cfg.config.string());
        ProblemSpec spec = apply_overrides(read_problem(cfg.config), cfg);
        const SynthResult sr = generate_measurements(spec, cfg.synth_config());
        ProblemSpec with = with_measurements(spec, sr.measurement);
        const Discretization d(with);
        const Audit aud = audit(d);
        json r = detail::report_header(cfg, &with);
        r["audit"] = audit_to_json(aud);
        write_text(cfg.out / "psi_generated.csv", series_csv(sr.psi, with.time));
        write_text(cfg.out / "q_true.csv", trajectory_csv(sr.truth, with.time));
        save_problem(with, cfg.out / "problem_with_data.json");
        write_text(cfg.out / "report.json", r.dump(2) + "\n");
        detail::write_timing(cfg.out, detail::elapsed(t0));
        out << "synth: " << with.s() << " series, " << with.time.levels() << " levels\n";
        return aud.violations.empty() ? kExitOk : kExitValidation;
    } catch (const ValidationError& e) {
        detail::print_violations(err, e);
        return kExitValidation;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

/// Inversion. Problems without measured data but with a truth are first
/// given synthetic data (--oversample, --noise, --seed).
inline int run_invert(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (auto v = cfg.violations(); !v.empty()) throw ValidationError(v);
        detail::prepare_output(cfg.out);
        if (!std::filesystem::exists(cfg.config)) throw IoError("problem file not found: " + cfg.config.string());
        ProblemSpec spec = apply_overrides(read_problem(cfg.config), cfg);
        bool synthesized = false;
        if (!spec.measurement.has_data()) {
            if (spec.truth.empty()) throw ValidationError("problem has neither measured data nor a truth to synthesize from");
            spec = with_measurements(spec, generate_measurements(spec, cfg.synth_config()).measurement);
            synthesized = true;
        }
        const Discretization d(spec);
        const Audit aud = audit(d);
        if (!aud.violations.empty()) throw ValidationError(aud.violations);

        json r = detail::report_header(cfg, &spec);
        r["audit"] = audit_to_json(aud);
        r["data"] = {{"synthesized", synthesized}};

        InverseSolution sol;
        try {
            sol = windowed_solve(d, cfg.policy, cfg.inverse_options());
        } catch (const DegenerateMatrixError& e) {
            r["inverse"] = {{"converged", false}, {"failure", e.what()}, {"degenerate_level", e.level()}, {"det", number(e.det())}};
            write_text(cfg.out / "report.json", r.dump(2) + "\n");
            detail::write_timing(cfg.out, detail::elapsed(t0));
            err << "error: " << e.what() << "\n";
            return kExitValidation;
        }
        r["inverse"] = inverse_report_to_json(sol.report);
        if (!spec.truth.empty()) {
            const QTrajectory truth = sample_trajectory(spec.truth, d.time());
            if (sol.report.converged) r["score"] = score_to_json(score(sol.q, truth, d.time().dt()));
        }
        write_text(cfg.out / "q_recovered.csv", trajectory_csv(sol.q, d.time()));
        if (cfg.emit_solution) write_text(cfg.out / "u_final.csv", state_csv(sol.u, sol.covered_until, d.grid()));
        write_text(cfg.out / "report.json", r.dump(2) + "\n");
        detail::write_timing(cfg.out, detail::elapsed(t0));
        if (!sol.report.converged) {
            err << "no convergence: " << sol.report.failure << "\n";
            return kExitNoConvergence;
        }
        out << "invert: converged in " << sol.report.iterations << " iterations over " << sol.report.windows.size()
            << " window attempt(s); overdetermination residual " << fmt17(sol.report.overdetermination_residual) << "\n";
        return kExitOk;
    } catch (const ValidationError& e) {
        detail::print_violations(err, e);
        return kExitValidation;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

struct StudyRow {
    std::size_t nodes = 0;
    std::size_t steps = 0;
    double h = 0.0;
    double dt = 0.0;
    double forward_error = std::nan("");
    double reconstruction_error = std::nan("");
};

/// Observed order log(e_k / e_{k+1}) / log(h_k / h_{k+1}).
inline double observed_order(double e_coarse, double e_fine, double h_coarse, double h_fine) {
    return std::log(e_coarse / e_fine) / std::log(h_coarse / h_fine);
}

/// Refines space and time together by 2 per level. The forward column needs
/// an exact solution, the reconstruction column a truth. Rows are appended as
/// levels finish, so a failure leaves the completed part in `rows`.
inline void convergence_study(const ProblemSpec& base, const RunConfig& cfg, std::vector<StudyRow>& rows) {
    for (std::size_t k = 0; k < cfg.levels; ++k) {
        ProblemSpec spec = base;
        const std::size_t f = std::size_t{1} << k;
        if (k > 0) {
            spec.grid = refine(base.grid, f);
            spec.time = base.time.refined(f);
        }
        StudyRow row;
        row.nodes = spec.grid.count()[0];
        row.steps = spec.time.steps();
        row.h = spec.grid.hx();
        row.dt = spec.time.dt();
        if (spec.exact_solution) {
            ProblemSpec fs = spec;
            fs.measurement.data.clear();
            const Discretization d(fs);
            const QTrajectory q = fs.truth.empty() ? QTrajectory(d.s(), 0, d.time().levels()) : sample_trajectory(fs.truth, d.time());
            const StateField u = solve_forward(d, q, cfg.theta);
            double e = 0.0;
            for (std::size_t n = 0; n < d.time().levels(); ++n)
                for (std::size_t p = 0; p < d.grid().size(); ++p)
                    e = std::max(e, std::abs(u.level(n)[p] - fs.exact_solution->at(d.time().time(n), d.grid(), p)));
            row.forward_error = e;
        }
        if (!spec.truth.empty()) {
            SynthConfig sc = cfg.synth_config();
            spec = with_measurements(spec, generate_measurements(spec, sc).measurement);
            const Discretization d(spec);
            const InverseSolution sol = windowed_solve(d, cfg.policy, cfg.inverse_options());
            if (!sol.report.converged) throw ConvergenceError("study level " + std::to_string(k) + ": " + sol.report.failure, {}, false);
            row.reconstruction_error = score(sol.q, sample_trajectory(spec.truth, d.time()), d.time().dt()).aggregate.l2;
        }
        rows.push_back(row);
    }
}

inline std::string study_csv(const std::vector<StudyRow>& rows) {
    std::vector<std::vector<double>> table;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        double of = std::nan(""), orc = std::nan("");
        if (k > 0) {
            of = observed_order(rows[k - 1].forward_error, r.forward_error, rows[k - 1].h, r.h);
            orc = observed_order(rows[k - 1].reconstruction_error, r.reconstruction_error, rows[k - 1].h, r.h);
        }
        table.push_back({static_cast<double>(k), static_cast<double>(r.nodes), static_cast<double>(r.steps), r.h, r.dt,
                         r.forward_error, of, r.reconstruction_error, orc});
    }
    return csv_table({"level", "nodes", "steps", "h", "dt", "forward_error", "forward_order", "reconstruction_error",
                      "reconstruction_order"},
                     table);
}

inline int run_study(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<StudyRow> rows;
    try {
        if (auto v = cfg.violations(); !v.empty()) throw ValidationError(v);
        if (cfg.levels < 3) throw ValidationError("a convergence study needs at least 3 levels (orders compare consecutive pairs)");
        detail::prepare_output(cfg.out);
        if (!std::filesystem::exists(cfg.config)) throw IoError("problem file not found: " + cfg.config.string());
        ProblemSpec spec = apply_overrides(read_problem(cfg.config), cfg);
        if (!spec.exact_solution && spec.truth.empty())
            throw ValidationError("study needs an exact_solution (forward) or a truth (reconstruction)");
        try {
            convergence_study(spec, cfg, rows);
        } catch (const Error&) {
            write_text(cfg.out / "study.csv", study_csv(rows));
            throw;
        }
        write_text(cfg.out / "study.csv", study_csv(rows));
        detail::write_timing(cfg.out, detail::elapsed(t0));
        out << study_csv(rows);
        return kExitOk;
    } catch (const ValidationError& e) {
        detail::print_violations(err, e);
        return kExitValidation;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

inline int run(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    if (cfg.command == "check") return run_check(cfg, out, err);
    if (cfg.command == "forward") return run_forward(cfg, out, err);
    if (cfg.command == "synth") return run_synth(cfg, out, err);
    if (cfg.command == "invert") return run_invert(cfg, out, err);
    if (cfg.command == "study") return run_study(cfg, out, err);
    err << "unknown command: " << cfg.command << "\n";
    return kExitValidation;
}

}  // namespace paraid
