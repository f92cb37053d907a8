#include "paraid/app.hpp"

#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

using namespace paraid;
namespace fs = std::filesystem;
using testing_support::fixture;

namespace {

const fs::path kFixtures = PARAID_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("paraid_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Runs the built executable and returns its exit status.
int cli(const std::string& args) {
    const std::string cmd = std::string(PARAID_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<Violation> load_violations(const fs::path& path) {
    try {
        load_problem(path);
    } catch (const ValidationError& e) {
        return e.violations();
    }
    return {};
}

RunConfig config(const std::string& command, const std::string& name, const fs::path& out) {
    RunConfig c;
    c.command = command;
    c.config = kFixtures / (name + ".json");
    c.out = out;
    return c;
}

int run_quiet(const RunConfig& c) {
    std::ostringstream out, err;
    return run(c, out, err);
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) h = (h ^ ch) * 1099511628211ull;
    return h;
}

}  // namespace

TEST_CASE("load_problem: bundled fixtures load cleanly") {
    for (const char* name : {"linear_source_1d", "heat_cos_1d", "mms_1d", "nonlinear_1d", "nonlinear_long_1d",
                             "nonlinear_stiff_1d", "linear_source_2d", "degenerate_b0_1d", "singular_initial_1d",
                             "study_1d"}) {
        INFO(name);
        CHECK(load_violations(kFixtures / (std::string(name) + ".json")).empty());
    }
}

TEST_CASE("load_problem: a shifted initial measurement is a single violation") {
    const fs::path dir = scratch("compat");
    ProblemSpec spec = testing_support::with_data(fixture("linear_source_1d"), false);
    const Discretization d(spec);
    std::vector<double> psi(d.time().levels());
    for (std::size_t n = 0; n < psi.size(); ++n) psi[n] = d.psi(0, n);
    psi[0] += 1.0;
    spec.measurement.data = {time_series(d.time(), psi)};
    save_problem(spec, dir / "p.json");
    const auto v = load_violations(dir / "p.json");
    REQUIRE(v.size() == 1);
    CHECK(v[0].condition == "compatibility_psi");
    CHECK(v[0].magnitude == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("load_problem: negative diffusion names delta0") {
    const auto v = load_violations(kFixtures / "negative_diffusion_1d.json");
    REQUIRE(v.size() == 1);
    CHECK(v[0].condition == "ellipticity");
    CHECK(v[0].message.find("delta0") != std::string::npos);
    CHECK(v[0].magnitude < 0.0);
}

TEST_CASE("load_problem: syntax errors carry their location") {
    const fs::path dir = scratch("syntax");
    json doc = json::parse(read_text(kFixtures / "linear_source_1d.json"));
    doc["initial"] = "sin(x";
    doc["source"]["modes"][0] = "1+*x";
    write_text(dir / "p.json", doc.dump(2));
    const auto v = load_violations(dir / "p.json");
    REQUIRE(v.size() == 2);
    for (const auto& e : v) CHECK(e.condition == "expression_syntax");
    CHECK(v[0].location.find("@") != std::string::npos);
    bool saw_initial = false, saw_mode = false;
    for (const auto& e : v) {
        if (e.location.rfind("initial", 0) == 0) saw_initial = e.location.find("@5") != std::string::npos;
        if (e.location.rfind("source.modes", 0) == 0) saw_mode = e.location.find("@2") != std::string::npos;
    }
    CHECK(saw_initial);
    CHECK(saw_mode);
}

TEST_CASE("load_problem: every failure is reported together") {
    const fs::path dir = scratch("many");
    json doc = json::parse(read_text(kFixtures / "linear_source_2d.json"));
    doc["operator"]["diffusion"] = json::array({json::array({"-1", "0"}), json::array({"0", "1"})});
    doc["boundary"]["conormal"] = json::array({"1", "0"});
    write_text(dir / "p.json", doc.dump(2));
    const auto v = load_violations(dir / "p.json");
    std::vector<std::string> kinds;
    for (const auto& e : v) kinds.push_back(e.condition);
    CHECK(std::ranges::count(kinds, "ellipticity") == 1);
    CHECK(std::ranges::count(kinds, "non_tangency") == 1);
}

TEST_CASE("load_problem: schema violations") {
    const fs::path dir = scratch("schema");
    json doc = json::parse(read_text(kFixtures / "linear_source_1d.json"));
    doc["schema"] = "something-else/9";
    doc["time"].erase("steps");
    write_text(dir / "p.json", doc.dump(2));
    CHECK(load_violations(dir / "p.json").size() >= 2);
    write_text(dir / "bad.json", "{ not json");
    CHECK_THROWS_AS(load_problem(dir / "bad.json"), ValidationError);
    CHECK_THROWS_AS(load_problem(dir / "missing.json"), IoError);
}

TEST_CASE("exit codes: success, validation, non-convergence, I/O") {
    const fs::path dir = scratch("exit");
    const std::string fx = kFixtures.string() + "/";
    CHECK(cli("invert --config " + fx + "linear_source_1d.json --out " + (dir / "a").string() + " --grid 41 --nt 80") == 0);
    CHECK(cli("invert --config " + fx + "negative_diffusion_1d.json --out " + (dir / "b").string()) == 1);
    CHECK(cli("invert --config " + fx + "linear_source_1d.json --out " + (dir / "c").string() + " --theta 0.3") == 1);
    CHECK(cli("invert --config " + fx + "nonlinear_long_1d.json --out " + (dir / "d").string() +
              " --window-policy single") == 2);
    CHECK(cli("invert --config " + fx + "nonlinear_long_1d.json --out " + (dir / "e").string() +
              " --window-policy adaptive") == 0);
    CHECK(cli("invert --config " + fx + "does_not_exist.json --out " + (dir / "f").string()) == 3);
    CHECK(cli("invert --config " + fx + "degenerate_b0_1d.json --out " + (dir / "g").string()) == 1);
    CHECK(cli("study --config " + fx + "study_1d.json --out " + (dir / "h").string() + " --levels 2") == 1);
    CHECK(cli("frobnicate") == 1);
    CHECK(fs::exists(dir / "d" / "report.json"));
    CHECK(fs::exists(dir / "g" / "report.json"));
}

TEST_CASE("invert: writes the documented artifacts") {
    const fs::path dir = scratch("artifacts");
    RunConfig c = config("invert", "nonlinear_1d", dir);
    c.emit_solution = true;
    REQUIRE(run_quiet(c) == 0);
    const std::string q = read_text(dir / "q_recovered.csv");
    CHECK(q.rfind("t,q_1,q_2\n", 0) == 0);
    CHECK(std::ranges::count(q, '\n') == 102);
    CHECK(fs::exists(dir / "u_final.csv"));

    const json r = json::parse(read_text(dir / "report.json"));
    CHECK(r["schema"] == "paraid-report/1");
    for (const char* key : {"versions", "config", "seed", "problem", "audit", "inverse", "score"}) CHECK(r.contains(key));
    const json& inv = r["inverse"];
    for (const char* key : {"converged", "failure", "iterations", "halvings", "overdetermination_residual",
                            "pde_residual", "min_abs_det", "max_cond", "windows"})
        CHECK(inv.contains(key));
    REQUIRE(!inv["windows"].empty());
    for (const char* key : {"first_level", "last_level", "t_start", "t_end", "converged", "iterations", "increments",
                            "increment_ratios", "norm_R0", "min_abs_det", "min_det_level", "max_cond", "det_floor",
                            "failure"})
        CHECK(inv["windows"][0].contains(key));
    CHECK(inv["windows"][0]["increments"].size() == inv["windows"][0]["iterations"].get<std::size_t>());
    CHECK(r["score"]["aggregate"]["l2"].get<double>() <= 5e-2);
    CHECK(json::parse(read_text(dir / "timing.json")).contains("wall_time_s"));
}

TEST_CASE("check: statuses") {
    auto statuses = [](const std::string& name) {
        const fs::path dir = scratch("check_" + name);
        REQUIRE(run_quiet(config("check", name, dir)) == 0);
        return json::parse(read_text(dir / "check.json"))["audit"];
    };
    const json ok = statuses("linear_source_2d");
    for (const auto& [k, v] : ok["checks"].items()) {
        INFO(k);
        CHECK((v["status"] == "pass" || v["status"] == "skipped"));
    }
    CHECK(ok["violations"].empty());

    const json tang = statuses("tangential_2d");
    CHECK(tang["checks"]["non_tangency"]["status"] == "fail");
    CHECK(tang["checks"]["ellipticity"]["status"] == "pass");

    const json sing = statuses("singular_initial_1d");
    CHECK(sing["checks"]["solvability_initial"]["status"] == "warn");
    CHECK(!sing["warnings"].empty());

    CHECK(statuses("negative_diffusion_1d")["checks"]["ellipticity"]["status"] == "fail");
}

TEST_CASE("forward and synth: artifacts") {
    const fs::path dir = scratch("forward");
    REQUIRE(run_quiet(config("forward", "heat_cos_1d", dir / "f")) == 0);
    const json r = json::parse(read_text(dir / "f" / "report.json"));
    CHECK(r["forward"]["max_error_vs_exact"].get<double>() < 1e-3);
    CHECK(fs::exists(dir / "f" / "u_final.csv"));
    CHECK(fs::exists(dir / "f" / "psi_generated.csv"));

    RunConfig s = config("synth", "linear_source_1d", dir / "s");
    s.noise = 1e-3;
    s.seed = 5;
    REQUIRE(run_quiet(s) == 0);
    for (const char* f : {"psi_generated.csv", "q_true.csv", "problem_with_data.json", "report.json"})
        CHECK(fs::exists(dir / "s" / f));
    CHECK(load_violations(dir / "s" / "problem_with_data.json").empty());
}

TEST_CASE("study: table and orders") {
    const fs::path dir = scratch("study");
    RunConfig c = config("study", "mms_1d", dir / "mms");
    c.theta = 0.5;
    REQUIRE(run_quiet(c) == 0);
    const std::string t = read_text(dir / "mms" / "study.csv");
    CHECK(t.rfind("level,nodes,steps,h,dt,forward_error,forward_order,reconstruction_error,reconstruction_order\n", 0) == 0);
    CHECK(std::ranges::count(t, '\n') == 4);

    RunConfig r = config("study", "study_1d", dir / "rec");
    std::ostringstream out, err;
    REQUIRE(run(r, out, err) == 0);
    std::vector<StudyRow> rows;
    convergence_study(read_problem(r.config), r, rows);
    REQUIRE(rows.size() == 3);
    for (std::size_t k = 1; k < 3; ++k)
        CHECK(observed_order(rows[k - 1].reconstruction_error, rows[k].reconstruction_error, rows[k - 1].h, rows[k].h) >= 1.0);

    c.levels = 2;
    CHECK(run_quiet(c) == 1);
}

TEST_CASE("reproducibility: identical inputs give identical bytes") {
    const fs::path dir = scratch("repro");
    std::uint64_t sums[2][2];
    for (int k = 0; k < 2; ++k) {
        RunConfig c = config("invert", "linear_source_1d", dir / std::to_string(k));
        c.grid = std::array<std::size_t, 2>{41, 1};
        c.nt = 80;
        c.noise = 1e-3;
        c.seed = 17;
        REQUIRE(run_quiet(c) == 0);
        sums[k][0] = fnv1a(read_text(dir / std::to_string(k) / "q_recovered.csv"));
        const std::string rep = read_text(dir / std::to_string(k) / "report.json");
        sums[k][1] = fnv1a(rep);
    }
    CHECK(sums[0][0] == sums[1][0]);
    // The config echo holds the output directory only through --out, which
    // is not part of the echo, so the reports match byte for byte.
    CHECK(sums[0][1] == sums[1][1]);
}
