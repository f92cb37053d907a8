#pragma once

// JSON problem files, CSV tables and JSON reports.

#include "paraid/discretization.hpp"
#include "paraid/errors.hpp"
#include "paraid/inverse.hpp"
#include "paraid/problem.hpp"
#include "paraid/synth.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace paraid {

using json = nlohmann::ordered_json;

inline constexpr const char* kProblemSchema = "paraid-problem/1";
inline constexpr const char* kReportSchema = "paraid-report/1";
inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Problem files

namespace detail {

/// Collects schema and expression errors instead of stopping at the first.
class SchemaReader {
public:
    std::vector<Violation> violations;

    void fail(const std::string& path, const std::string& msg) { violations.push_back({"schema", path, 0.0, msg}); }

    const json* child(const json& obj, const std::string& key, const std::string& path, bool required = true) {
        if (!obj.is_object()) {
            fail(path, "expected an object");
            return nullptr;
        }
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) fail(join(path, key), "missing required key");
            return nullptr;
        }
        return &*it;
    }

    FieldSpec field(const json* j, const std::string& path) {
        if (!j) return {};
        try {
            if (j->is_number()) return FieldSpec::constant(j->get<double>());
            if (j->is_string()) return FieldSpec::parse(j->get<std::string>());
            if (j->is_object()) {
                Table t;
                t.axes = j->at("axes").get<std::string>();
                t.coords = j->at("coords").get<std::vector<std::vector<double>>>();
                t.values = j->at("values").get<std::vector<double>>();
                return FieldSpec(std::move(t));
            }
            fail(path, "expected an expression string, a number or a table object");
        } catch (const ParseError& e) {
            violations.push_back({"expression_syntax", path + " @" + std::to_string(e.offset()), 0.0,
                                  path + ": " + e.reason() + " at offset " + std::to_string(e.offset()) + " in \"" +
                                      j->get<std::string>() + "\""});
        } catch (const ValidationError& e) {
            fail(path, e.what());
        } catch (const json::exception& e) {
            fail(path, std::string("malformed table: ") + e.what());
        }
        return {};
    }

    std::vector<FieldSpec> fields(const json* j, const std::string& path) {
        std::vector<FieldSpec> out;
        if (!j) return out;
        if (!j->is_array()) {
            fail(path, "expected an array");
            return out;
        }
        for (std::size_t k = 0; k < j->size(); ++k) out.push_back(field(&(*j)[k], path + "[" + std::to_string(k) + "]"));
        return out;
    }

    template <class T>
    T value(const json* j, const std::string& path, T fallback) {
        if (!j) return fallback;
        try {
            return j->get<T>();
        } catch (const json::exception&) {
            fail(path, "wrong type");
            return fallback;
        }
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }
};

inline json field_to_json(const FieldSpec& f) {
    if (const Table* t = f.table()) return json{{"axes", t->axes}, {"coords", t->coords}, {"values", t->values}};
    return f.expr()->to_string();
}

inline json fields_to_json(const std::vector<FieldSpec>& fs) {
    json a = json::array();
    for (const auto& f : fs) a.push_back(field_to_json(f));
    return a;
}

}  // namespace detail

/// Parses a problem document. Schema and expression errors are reported together.
inline ProblemSpec parse_problem(const json& doc) {
    detail::SchemaReader rd;
    ProblemSpec p;
    if (!doc.is_object()) throw ValidationError({{"schema", "", 0.0, "problem file must hold a JSON object"}});
    if (auto* s = rd.child(doc, "schema", "", false); s && (!s->is_string() || s->get<std::string>() != kProblemSchema))
        rd.fail("schema", std::string("unsupported schema (expected \"") + kProblemSchema + "\")");
    p.name = rd.value<std::string>(rd.child(doc, "name", "", false), "name", "");

    int dim = 1;
    if (const json* dom = rd.child(doc, "domain", "")) {
        dim = rd.value<int>(rd.child(*dom, "dim", "domain"), "domain.dim", 1);
        auto extent = rd.value<std::vector<double>>(rd.child(*dom, "extent", "domain"), "domain.extent", {});
        auto nodes = rd.value<std::vector<std::size_t>>(rd.child(*dom, "nodes", "domain"), "domain.nodes", {});
        if (dim != 1 && dim != 2) rd.fail("domain.dim", "dimension must be 1 or 2");
        else if (extent.size() != static_cast<std::size_t>(dim) || nodes.size() != static_cast<std::size_t>(dim))
            rd.fail("domain", "extent and nodes need one entry per dimension");
        else {
            try {
                p.grid = SpatialGrid(dim, {extent[0], dim == 2 ? extent[1] : 0.0}, {nodes[0], dim == 2 ? nodes[1] : 1});
            } catch (const ValidationError& e) {
                rd.fail("domain", e.what());
            }
        }
    }
    if (const json* tm = rd.child(doc, "time", "")) {
        const double horizon = rd.value<double>(rd.child(*tm, "horizon", "time"), "time.horizon", 1.0);
        const std::size_t steps = rd.value<std::size_t>(rd.child(*tm, "steps", "time"), "time.steps", 1);
        try {
            p.time = TimeGrid(horizon, steps);
        } catch (const ValidationError& e) {
            rd.fail("time", e.what());
        }
    }
    if (const json* op = rd.child(doc, "operator", "")) {
        if (const json* dif = rd.child(*op, "diffusion", "operator")) {
            if (!dif->is_array()) rd.fail("operator.diffusion", "expected a matrix (array of rows)");
            else
                for (std::size_t k = 0; k < dif->size(); ++k) {
                    auto row = rd.fields(&(*dif)[k], "operator.diffusion[" + std::to_string(k) + "]");
                    p.op.diffusion.insert(p.op.diffusion.end(), row.begin(), row.end());
                }
        }
        p.op.drift = rd.fields(rd.child(*op, "drift", "operator"), "operator.drift");
        p.op.reaction = rd.field(rd.child(*op, "reaction", "operator"), "operator.reaction");
        if (const json* un = rd.child(*op, "unknown_operators", "operator", false)) {
            if (!un->is_array()) rd.fail("operator.unknown_operators", "expected an array");
            else
                for (std::size_t i = 0; i < un->size(); ++i) {
                    const std::string path = "operator.unknown_operators[" + std::to_string(i) + "]";
                    FirstOrderOperator a;
                    a.drift = rd.fields(rd.child((*un)[i], "drift", path), path + ".drift");
                    const json* re = rd.child((*un)[i], "reaction", path, false);
                    a.reaction = re ? rd.field(re, path + ".reaction") : FieldSpec::constant(0.0);
                    p.op.unknown.push_back(std::move(a));
                }
        }
    }
    if (const json* bc = rd.child(doc, "boundary", "")) {
        p.bc.conormal = rd.fields(rd.child(*bc, "conormal", "boundary"), "boundary.conormal");
        p.bc.transfer = rd.field(rd.child(*bc, "transfer", "boundary"), "boundary.transfer");
        p.bc.data = rd.field(rd.child(*bc, "data", "boundary"), "boundary.data");
        p.bc.compat_tol = rd.value<double>(rd.child(*bc, "compat_tol", "boundary", false), "boundary.compat_tol", 1e-3);
    }
    if (const json* src = rd.child(doc, "source", "")) {
        const json* base = rd.child(*src, "base", "source", false);
        p.base_source = base ? rd.field(base, "source.base") : FieldSpec::constant(0.0);
        if (const json* modes = rd.child(*src, "modes", "source", false)) p.source_modes = rd.fields(modes, "source.modes");
    }
    p.initial = rd.field(rd.child(doc, "initial", ""), "initial");
    if (const json* m = rd.child(doc, "measurement", "")) {
        p.measurement.weights = rd.fields(rd.child(*m, "weights", "measurement"), "measurement.weights");
        if (const json* data = rd.child(*m, "data", "measurement", false)) p.measurement.data = rd.fields(data, "measurement.data");
        p.measurement.compat_tol = rd.value<double>(rd.child(*m, "compat_tol", "measurement", false), "measurement.compat_tol", 1e-8);
    }
    if (const json* tr = rd.child(doc, "truth", "", false)) p.truth = rd.fields(tr, "truth");
    if (const json* ex = rd.child(doc, "exact_solution", "", false)) p.exact_solution = rd.field(ex, "exact_solution");

    if (rd.violations.empty()) {
        auto v = p.structural_violations();
        rd.violations.insert(rd.violations.end(), v.begin(), v.end());
    }
    if (dim == 1) {
        auto check_y = [&](const FieldSpec& f, const std::string& where) {
            if (f.uses_y()) rd.violations.push_back({"schema", where, 0.0, where + ": uses y in a one-dimensional problem"});
        };
        for (std::size_t k = 0; k < p.op.diffusion.size(); ++k) check_y(p.op.diffusion[k], "operator.diffusion");
        for (const auto& f : p.op.drift) check_y(f, "operator.drift");
        check_y(p.op.reaction, "operator.reaction");
        for (const auto& a : p.op.unknown) {
            for (const auto& f : a.drift) check_y(f, "operator.unknown_operators");
            check_y(a.reaction, "operator.unknown_operators");
        }
        for (const auto& f : p.bc.conormal) check_y(f, "boundary.conormal");
        check_y(p.bc.transfer, "boundary.transfer");
        check_y(p.bc.data, "boundary.data");
        check_y(p.base_source, "source.base");
        for (const auto& f : p.source_modes) check_y(f, "source.modes");
        check_y(p.initial, "initial");
        for (const auto& f : p.measurement.weights) check_y(f, "measurement.weights");
    }
    if (!rd.violations.empty()) throw ValidationError(std::move(rd.violations));
    return p;
}

inline json problem_to_json(const ProblemSpec& p) {
    const int n = p.dim();
    json doc;
    doc["schema"] = kProblemSchema;
    doc["name"] = p.name;
    const auto& g = p.grid;
    doc["domain"] = n == 1 ? json{{"dim", 1}, {"extent", {g.extent()[0]}}, {"nodes", {g.count()[0]}}}
                           : json{{"dim", 2}, {"extent", {g.extent()[0], g.extent()[1]}}, {"nodes", {g.count()[0], g.count()[1]}}};
    doc["time"] = {{"horizon", p.time.horizon()}, {"steps", p.time.steps()}};
    json dif = json::array();
    for (int k = 0; k < n; ++k) {
        json row = json::array();
        for (int l = 0; l < n; ++l) row.push_back(detail::field_to_json(p.op.diffusion[static_cast<std::size_t>(n * k + l)]));
        dif.push_back(row);
    }
    json un = json::array();
    for (const auto& a : p.op.unknown)
        un.push_back({{"drift", detail::fields_to_json(a.drift)}, {"reaction", detail::field_to_json(a.reaction)}});
    doc["operator"] = {{"diffusion", dif},
                       {"drift", detail::fields_to_json(p.op.drift)},
                       {"reaction", detail::field_to_json(p.op.reaction)},
                       {"unknown_operators", un}};
    doc["boundary"] = {{"conormal", detail::fields_to_json(p.bc.conormal)},
                       {"transfer", detail::field_to_json(p.bc.transfer)},
                       {"data", detail::field_to_json(p.bc.data)},
                       {"compat_tol", p.bc.compat_tol}};
    doc["source"] = {{"base", detail::field_to_json(p.base_source)}, {"modes", detail::fields_to_json(p.source_modes)}};
    doc["initial"] = detail::field_to_json(p.initial);
    json m = {{"weights", detail::fields_to_json(p.measurement.weights)}, {"compat_tol", p.measurement.compat_tol}};
    if (p.measurement.has_data()) m["data"] = detail::fields_to_json(p.measurement.data);
    doc["measurement"] = m;
    if (!p.truth.empty()) doc["truth"] = detail::fields_to_json(p.truth);
    if (p.exact_solution) doc["exact_solution"] = detail::field_to_json(*p.exact_solution);
    return doc;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

inline ProblemSpec read_problem(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError({{"schema", path.string() + " @" + std::to_string(e.byte), 0.0,
                                std::string("invalid JSON: ") + e.what()}});
    }
    return parse_problem(doc);
}

inline void save_problem(const ProblemSpec& p, const std::filesystem::path& path) {
    write_text(path, problem_to_json(p).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Validation audit

struct Audit {
    double delta0 = 0.0;
    std::string delta0_location;
    double epsilon0 = 0.0;
    std::string epsilon0_location;
    double symmetry_defect = 0.0;
    double min_det_initial = 0.0;
    double det_floor_initial = 0.0;
    std::size_t min_det_initial_level = 0;
    std::vector<double> psi_compat;  // |psi_j(0) - <u0, phi_j>| (empty without data)
    double bc_compat = 0.0;          // max |B u0 - g(0)|
    std::vector<Violation> violations;
    std::vector<std::string> warnings;
};

/// Ellipticity, non-tangency, compatibility and the u_0-based solvability pre-check.
inline Audit audit(const Discretization& d) {
    Audit a;
    a.delta0 = d.delta0();
    a.delta0_location = d.delta0_location();
    a.epsilon0 = d.epsilon0();
    a.epsilon0_location = d.epsilon0_location();
    a.symmetry_defect = d.symmetry_defect();
    if (!(a.delta0 > 0.0))
        a.violations.push_back({"ellipticity", a.delta0_location, a.delta0,
                                "ellipticity fails: delta0 = " + Discretization::fmt(a.delta0) + " <= 0 at " + a.delta0_location});
    if (!(a.epsilon0 > Discretization::kTangencyFloor))
        a.violations.push_back({"non_tangency", a.epsilon0_location, a.epsilon0,
                                "non-tangency fails: epsilon0 = |gamma . nu| = " + Discretization::fmt(a.epsilon0) + " at " +
                                    a.epsilon0_location});
    if (a.symmetry_defect > 0.0)
        a.warnings.push_back("diffusion matrix is not symmetric (max |a12 - a21| = " +
                             Discretization::fmt(a.symmetry_defect) + "); its symmetric part is used for ellipticity");

    const BoundaryTrace u0 = trace_value(d.grid(), d.initial());
    if (d.has_data())
        for (std::size_t j = 0; j < d.s(); ++j)
            a.psi_compat.push_back(std::abs(d.psi(j, 0) - pair_with_weight(u0, d.weight(j), d.grid())));
    const BoundaryTrace bu0 = conormal_trace(d, d.initial(), 0);
    for (std::size_t b = 0; b < bu0.size(); ++b) a.bc_compat = std::max(a.bc_compat, std::abs(bu0[b] - d.level(0).g[b]));
    auto compat = check_compatibility(d);
    a.violations.insert(a.violations.end(), compat.begin(), compat.end());

    try {
        const B0Matrix b = build_B0_initial(d);
        a.min_det_initial = b.min_abs_det;
        a.det_floor_initial = b.floor;
        a.min_det_initial_level = b.min_det_level;
        if (b0_degenerate(b))
            a.warnings.push_back("solvability pre-check with u0: |det| = " + Discretization::fmt(b.min_abs_det) +
                                 " at time level " + std::to_string(b.min_det_level) + " (t=" +
                                 Discretization::fmt(d.time().time(b.min_det_level)) + ") is below the floor " +
                                 Discretization::fmt(b.floor) + "; the Phi-based matrix decides");
    } catch (const Error& e) {
        a.warnings.push_back(std::string("solvability pre-check skipped: ") + e.what());
    }
    return a;
}

struct LoadedProblem {
    ProblemSpec spec;
    Audit audit;
};

/// Reads, compiles and fully validates a problem. Every failure is reported at once.
inline LoadedProblem load_problem(const std::filesystem::path& path) {
    ProblemSpec spec = read_problem(path);
    const Discretization d(spec);
    Audit a = audit(d);
    if (!a.violations.empty()) throw ValidationError(a.violations);
    return {std::move(spec), std::move(a)};
}

// ---------------------------------------------------------------------------
// CSV

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t k = 0; k < header.size(); ++k) out += (k ? "," : "") + header[k];
    out += "\n";
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < r.size(); ++k) out += (k ? "," : "") + fmt17(r[k]);
        out += "\n";
    }
    return out;
}

/// Columns t, <prefix>_1 .. <prefix>_s.
inline std::string trajectory_csv(const QTrajectory& q, const TimeGrid& tg, const std::string& prefix = "q") {
    std::vector<std::string> h{"t"};
    for (std::size_t i = 0; i < q.components(); ++i) h.push_back(prefix + "_" + std::to_string(i + 1));
    std::vector<std::vector<double>> rows;
    for (std::size_t n = q.first_level(); n <= q.last_level(); ++n) {
        std::vector<double> r{tg.time(n)};
        for (std::size_t i = 0; i < q.components(); ++i) r.push_back(q(i, n));
        rows.push_back(std::move(r));
    }
    return csv_table(h, rows);
}

inline std::string series_csv(const std::vector<std::vector<double>>& psi, const TimeGrid& tg) {
    std::vector<std::string> h{"t"};
    for (std::size_t j = 0; j < psi.size(); ++j) h.push_back("psi_" + std::to_string(j + 1));
    std::vector<std::vector<double>> rows;
    for (std::size_t n = 0; n < tg.levels(); ++n) {
        std::vector<double> r{tg.time(n)};
        for (const auto& s : psi) r.push_back(s[n]);
        rows.push_back(std::move(r));
    }
    return csv_table(h, rows);
}

/// Final-time state: columns x[, y], u.
inline std::string state_csv(const StateField& u, std::size_t level, const SpatialGrid& g) {
    std::vector<std::string> h = g.dim() == 2 ? std::vector<std::string>{"x", "y", "u"} : std::vector<std::string>{"x", "u"};
    std::vector<std::vector<double>> rows;
    const auto v = u.level(level);
    for (std::size_t p = 0; p < g.size(); ++p) {
        if (g.dim() == 2) rows.push_back({g.x(p), g.y(p), v[p]});
        else rows.push_back({g.x(p), v[p]});
    }
    return csv_table(h, rows);
}

// ---------------------------------------------------------------------------
// JSON reports

inline json violations_to_json(const std::vector<Violation>& vs) {
    json a = json::array();
    for (const auto& v : vs)
        a.push_back({{"condition", v.condition}, {"location", v.location}, {"magnitude", v.magnitude}, {"message", v.message}});
    return a;
}

/// Non-finite numbers are written as strings so the document stays valid JSON.
inline json number(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline json audit_to_json(const Audit& a) {
    json checks = json::object();
    checks["ellipticity"] = {{"status", a.delta0 > 0.0 ? "pass" : "fail"}, {"delta0", number(a.delta0)}, {"location", a.delta0_location}};
    checks["non_tangency"] = {{"status", a.epsilon0 > Discretization::kTangencyFloor ? "pass" : "fail"},
                              {"epsilon0", number(a.epsilon0)},
                              {"location", a.epsilon0_location}};
    bool psi_ok = true;
    for (const auto& v : a.violations)
        if (v.condition == "compatibility_psi") psi_ok = false;
    bool bc_ok = true;
    for (const auto& v : a.violations)
        if (v.condition == "compatibility_bc") bc_ok = false;
    json psi = json::array();
    for (double r : a.psi_compat) psi.push_back(number(r));
    checks["compatibility_psi"] = {{"status", a.psi_compat.empty() ? "skipped" : (psi_ok ? "pass" : "fail")}, {"residuals", psi}};
    checks["compatibility_bc"] = {{"status", bc_ok ? "pass" : "fail"}, {"max_residual", number(a.bc_compat)}};
    const bool pre_ok = a.min_det_initial > a.det_floor_initial && a.min_det_initial > 0.0;
    checks["solvability_initial"] = {{"status", pre_ok ? "pass" : "warn"},
                                     {"min_abs_det", number(a.min_det_initial)},
                                     {"det_floor", number(a.det_floor_initial)},
                                     {"level", a.min_det_initial_level}};
    return {{"checks", checks},
            {"symmetry_defect", number(a.symmetry_defect)},
            {"violations", violations_to_json(a.violations)},
            {"warnings", a.warnings}};
}

inline json numbers(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(number(x));
    return a;
}

inline json inverse_report_to_json(const InverseReport& r) {
    json windows = json::array();
    for (const auto& w : r.windows)
        windows.push_back({{"first_level", w.first},
                           {"last_level", w.last},
                           {"t_start", w.t_start},
                           {"t_end", w.t_end},
                           {"converged", w.converged},
                           {"iterations", w.iterations},
                           {"increments", numbers(w.increments)},
                           {"increment_ratios", numbers(w.ratios)},
                           {"norm_R0", number(w.norm_r0)},
                           {"min_abs_det", number(w.min_abs_det)},
                           {"min_det_level", w.min_det_level},
                           {"max_cond", number(w.max_cond)},
                           {"det_floor", number(w.det_floor)},
                           {"failure", w.failure}});
    return {{"converged", r.converged},
            {"failure", r.failure},
            {"iterations", r.iterations},
            {"halvings", r.halvings},
            {"overdetermination_residual", number(r.overdetermination_residual)},
            {"pde_residual", number(r.pde_residual)},
            {"min_abs_det", number(r.min_abs_det)},
            {"max_cond", number(r.max_cond)},
            {"windows", windows}};
}

inline json score_to_json(const Score& s) {
    json comps = json::array();
    for (const auto& c : s.components) comps.push_back({{"l2", number(c.l2)}, {"linf", number(c.linf)}, {"absolute", c.absolute}});
    return {{"aggregate", {{"l2", number(s.aggregate.l2)}, {"linf", number(s.aggregate.linf)}, {"absolute", s.aggregate.absolute}}},
            {"components", comps}};
}

}  // namespace paraid
