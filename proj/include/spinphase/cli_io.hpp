#pragma once

// Command-line front end: run configurations (JSON or flags), execution of
// the harness experiments, and CSV / JSON / gnuplot output.

#include "spinphase/adiabatic.hpp"
#include "spinphase/errors.hpp"
#include "spinphase/exact_dynamics.hpp"
#include "spinphase/field_profile.hpp"
#include "spinphase/geometric_phases.hpp"
#include "spinphase/harness.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace spinphase {

using json = nlohmann::json;

enum class Command { simulate, phases, convergence, stokes, timescale };
enum class Format { csv, json, gnuplot };

inline const char* to_string(Command c) {
    switch (c) {
    case Command::simulate: return "simulate";
    case Command::phases: return "phases";
    case Command::convergence: return "convergence";
    case Command::stokes: return "stokes";
    case Command::timescale: return "timescale";
    }
    return "unknown";
}

inline Command command_from_string(const std::string& s) {
    for (auto c : {Command::simulate, Command::phases, Command::convergence, Command::stokes, Command::timescale})
        if (s == to_string(c)) return c;
    throw ConfigError("unknown command '" + s + "'");
}

inline const char* to_string(Format f) {
    switch (f) {
    case Format::csv: return "csv";
    case Format::json: return "json";
    case Format::gnuplot: return "gnuplot";
    }
    return "unknown";
}

inline Format format_from_string(const std::string& s) {
    for (auto f : {Format::csv, Format::json, Format::gnuplot})
        if (s == to_string(f)) return f;
    throw ConfigError("unknown output format '" + s + "'");
}

inline Method method_from_string(const std::string& s) {
    if (s == "dopri5") return Method::dopri5;
    if (s == "exponential_midpoint" || s == "expmid") return Method::exponential_midpoint;
    throw ConfigError("unknown integration method '" + s + "'");
}

struct ProfileConfig {
    std::string kind = "uniform_rotation";
    FieldProfile::Params params;
    double epsilon = 1.0;
    TimeDomain t_domain;
    std::vector<TableRow> table;

    bool operator==(const ProfileConfig&) const = default;
};

struct IntegratorSettings {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    std::string method = "dopri5";
    double fixed_step = 1e-2;
    long samples = 2000;

    bool operator==(const IntegratorSettings&) const = default;
};

struct RunConfig {
    Command command = Command::simulate;
    ProfileConfig profile;
    IntegratorSettings integrator;
    double t_start = 0.0;
    std::optional<double> t_end;
    std::vector<double> eps{0.16, 0.08, 0.04, 0.02};
    double horizon = 2.0 * pi;  // eps * t held fixed in convergence runs
    std::vector<double> B_list;  // empty: use the profile's B0
    long nodes = 400;
    bool measure = false;
    std::string initial_state = "branch";
    std::string output_dir = ".";
    std::set<Format> formats{Format::csv, Format::json, Format::gnuplot};

    bool operator==(const RunConfig&) const = default;
};

inline std::string default_output_dir() {
    const char* env = std::getenv("SPINPHASE_OUT_DIR");
    return env && *env ? std::string(env) : std::string(".");
}

// ---------------------------------------------------------------- JSON

namespace detail {

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_or(const json& j, double if_null) {
    if (j.is_null()) return if_null;
    if (!j.is_number()) throw ConfigError("expected a number, got " + j.dump());
    return j.get<double>();
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

} // namespace detail

inline json to_json(const ProfileConfig& p) {
    json j;
    j["kind"] = p.kind;
    j["params"] = json::object();
    for (const auto& [k, v] : p.params) j["params"][k] = v;
    j["epsilon"] = p.epsilon;
    j["t_domain"] = json::array({detail::finite_or_null(p.t_domain.begin), detail::finite_or_null(p.t_domain.end)});
    if (!p.table.empty()) {
        j["table"] = json::array();
        for (const auto& r : p.table) j["table"].push_back({r.s, r.B, r.theta, r.phi});
    }
    return j;
}

inline ProfileConfig profile_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("profile must be a JSON object");
    detail::reject_unknown(j, {"kind", "params", "epsilon", "t_domain", "table"}, "profile");
    ProfileConfig p;
    try {
        if (j.contains("kind")) p.kind = j.at("kind").get<std::string>();
        if (j.contains("params")) {
            for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it) p.params[it.key()] = it.value().get<double>();
        }
        if (j.contains("epsilon")) p.epsilon = j.at("epsilon").get<double>();
        if (j.contains("t_domain")) {
            const json& d = j.at("t_domain");
            if (!d.is_array() || d.size() != 2) throw ConfigError("t_domain must be [begin, end]");
            p.t_domain.begin = detail::number_or(d[0], -std::numeric_limits<double>::infinity());
            p.t_domain.end = detail::number_or(d[1], std::numeric_limits<double>::infinity());
        }
        if (j.contains("table")) {
            for (const auto& row : j.at("table")) {
                if (!row.is_array() || row.size() != 4) throw ConfigError("table rows must be [s, B, theta, phi]");
                p.table.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>(), row[3].get<double>()});
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("profile: ") + e.what());
    }
    return p;
}

inline json to_json(const IntegratorSettings& s) {
    return {{"rel_tol", s.rel_tol},       {"abs_tol", s.abs_tol},
            {"max_step", detail::finite_or_null(s.max_step)},
            {"method", s.method},         {"fixed_step", s.fixed_step},
            {"samples", s.samples}};
}

inline IntegratorSettings integrator_settings_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("integrator must be a JSON object");
    detail::reject_unknown(j, {"rel_tol", "abs_tol", "max_step", "method", "fixed_step", "samples"}, "integrator");
    IntegratorSettings s;
    try {
        if (j.contains("rel_tol")) s.rel_tol = j.at("rel_tol").get<double>();
        if (j.contains("abs_tol")) s.abs_tol = j.at("abs_tol").get<double>();
        if (j.contains("max_step")) s.max_step = detail::number_or(j.at("max_step"), std::numeric_limits<double>::infinity());
        if (j.contains("method")) s.method = j.at("method").get<std::string>();
        if (j.contains("fixed_step")) s.fixed_step = j.at("fixed_step").get<double>();
        if (j.contains("samples")) s.samples = j.at("samples").get<long>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("integrator: ") + e.what());
    }
    return s;
}

inline json to_json(const RunConfig& c) {
    json j;
    j["command"] = to_string(c.command);
    j["profile"] = to_json(c.profile);
    j["integrator"] = to_json(c.integrator);
    j["t_span"] = json::array({c.t_start, c.t_end ? json(*c.t_end) : json(nullptr)});
    j["eps"] = c.eps;
    j["horizon"] = c.horizon;
    j["B_list"] = c.B_list;
    j["nodes"] = c.nodes;
    j["measure"] = c.measure;
    j["initial_state"] = c.initial_state;
    j["output_dir"] = c.output_dir;
    j["formats"] = json::array();
    for (Format f : c.formats) j["formats"].push_back(to_string(f));
    return j;
}

inline RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
    detail::reject_unknown(j, {"command", "profile", "integrator", "t_span", "eps", "horizon", "B_list", "nodes", "measure",
                               "initial_state", "output_dir", "formats"},
                           "run configuration");
    RunConfig c;
    c.output_dir = default_output_dir();
    try {
        if (j.contains("command")) c.command = command_from_string(j.at("command").get<std::string>());
        if (j.contains("profile")) c.profile = profile_config_from_json(j.at("profile"));
        if (j.contains("integrator")) c.integrator = integrator_settings_from_json(j.at("integrator"));
        if (j.contains("t_span")) {
            const json& s = j.at("t_span");
            if (!s.is_array() || s.size() != 2) throw ConfigError("t_span must be [t_start, t_end]");
            c.t_start = s[0].get<double>();
            if (!s[1].is_null()) c.t_end = s[1].get<double>();
        }
        if (j.contains("eps")) c.eps = j.at("eps").get<std::vector<double>>();
        if (j.contains("horizon")) c.horizon = j.at("horizon").get<double>();
        if (j.contains("B_list")) c.B_list = j.at("B_list").get<std::vector<double>>();
        if (j.contains("nodes")) c.nodes = j.at("nodes").get<long>();
        if (j.contains("measure")) c.measure = j.at("measure").get<bool>();
        if (j.contains("initial_state")) c.initial_state = j.at("initial_state").get<std::string>();
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("formats")) {
            c.formats.clear();
            for (const auto& f : j.at("formats")) c.formats.insert(format_from_string(f.get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
    return run_config_from_json(j);
}

/// Reads s,B,theta,phi rows; lines that do not start with a number are skipped.
inline std::vector<TableRow> load_table_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open table file '" + path + "'");
    std::vector<TableRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        TableRow r;
        if (std::sscanf(line.c_str(), "%lf , %lf , %lf , %lf", &r.s, &r.B, &r.theta, &r.phi) == 4) rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------- validation

inline FieldProfile build_profile(const ProfileConfig& p) {
    return FieldProfile::make(profile_kind_from_string(p.kind), p.params, p.epsilon, p.t_domain, p.table);
}

inline IntegratorConfig build_integrator(const IntegratorSettings& s) {
    IntegratorConfig cfg;
    cfg.rel_tol = s.rel_tol;
    cfg.abs_tol = s.abs_tol;
    cfg.max_step = s.max_step;
    cfg.method = method_from_string(s.method);
    cfg.fixed_step = s.fixed_step;
    cfg.validate();
    if (s.samples < 2) throw ConfigError("samples must be at least 2");
    return cfg;
}

/// One period for the periodic kinds; the others need an explicit end time.
inline double resolve_t_end(const RunConfig& c, const FieldProfile& profile) {
    if (c.t_end) return *c.t_end;
    const double Omega = profile.param("Omega", 0.0);
    if ((profile.kind() == ProfileKind::sinusoidal_angle || profile.kind() == ProfileKind::cone_3d) && Omega != 0.0)
        return c.t_start + 2.0 * pi / std::abs(Omega * profile.epsilon());
    if (profile.kind() == ProfileKind::user_tabulated) return profile.domain().end;
    throw ConfigError("--t-end is required for profile kind " + std::string(to_string(profile.kind())));
}

inline Spinor resolve_initial_state(const std::string& spec) {
    const double r = 1.0 / std::sqrt(2.0);
    if (spec == "up") return {1.0, 0.0};
    if (spec == "down") return {0.0, 1.0};
    if (spec == "x") return {r, r};
    if (spec == "y") return {cplx(r, 0.0), cplx(0.0, r)};
    double v[4];
    if (std::sscanf(spec.c_str(), "%lf , %lf , %lf , %lf", &v[0], &v[1], &v[2], &v[3]) == 4) {
        const Spinor psi{cplx(v[0], v[1]), cplx(v[2], v[3])};
        if (std::abs(psi.norm2() - 1.0) > 1e-9) throw ConfigError("initial state is not normalized");
        return psi;
    }
    throw ConfigError("initial state must be branch, up, down, x, y or re_up,im_up,re_dn,im_dn");
}

/// Throws ConfigError when the configuration cannot run; returns the profile.
inline FieldProfile validate_run_config(const RunConfig& c) {
    const FieldProfile profile = build_profile(c.profile);
    build_integrator(c.integrator);
    if (c.initial_state != "branch") resolve_initial_state(c.initial_state);
    switch (c.command) {
    case Command::convergence:
        if (c.eps.size() < 2) throw ConfigError("convergence needs at least two epsilon values");
        for (double e : c.eps)
            if (!(e > 0.0)) throw ConfigError("epsilon values must be positive");
        if (!(c.horizon > 0.0)) throw ConfigError("horizon must be positive");
        break;
    case Command::stokes:
        if (c.nodes < 3) throw ConfigError("a loop needs at least three nodes");
        for (double B : c.B_list)
            if (!(B > 0.0)) throw ConfigError("B_list entries must be positive");
        break;
    case Command::timescale:
        if (profile.kind() != ProfileKind::uniform_rotation) throw ConfigError("timescale runs use uniform_rotation");
        break;
    case Command::simulate:
    case Command::phases: resolve_t_end(c, profile); break;
    }
    return profile;
}

// ---------------------------------------------------------------- CLI

namespace detail {

inline std::vector<double> parse_number_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(std::string("bad number '") + item + "' in " + what);
        }
    }
    return out;
}

inline FieldProfile::Params default_params(ProfileKind k) {
    switch (k) {
    case ProfileKind::constant: return {{"B0", 1.0}, {"theta", 0.0}, {"phi", 0.0}};
    case ProfileKind::uniform_rotation: return {{"B0", 1.0}, {"omega", 0.1}, {"theta_start", 0.0}};
    case ProfileKind::polynomial_angle: return {{"B0", 1.0}, {"a0", 0.0}, {"a1", 0.1}};
    case ProfileKind::sinusoidal_angle: return {{"B0", 1.0}, {"theta0", 0.3}, {"Omega", 1.0}, {"theta_c", 0.0}};
    case ProfileKind::cone_3d: return {{"B0", 1.0}, {"theta", pi / 3.0}, {"Omega", 1.0}, {"phi_start", 0.0}};
    case ProfileKind::user_tabulated: return {};
    }
    return {};
}

} // namespace detail

/// Thrown by parse_cli for --help; carries the formatted help text.
struct HelpRequested {
    std::string text;
};

/// Parses argv (argv[0] is the program name). Flags given next to --config
/// override the values loaded from the file.
inline RunConfig parse_cli(const std::vector<std::string>& args) {
    CLI::App app{"Phases of a spin-1/2 in a slowly varying field", "spinphase"};
    app.require_subcommand(1);

    std::optional<std::string> config_path, kind, coeffs, table_path, eps, B_list, formats, method, initial, out;
    std::optional<double> t_start, t_end, epsilon, rel_tol, abs_tol, max_step, horizon;
    std::optional<long> samples, nodes;
    bool measure = false;

    // Flag name -> profile parameter name.
    const std::vector<std::pair<std::string, std::string>> param_flags{
        {"--B0", "B0"},         {"--omega", "omega"},         {"--theta0", "theta0"},   {"--Omega", "Omega"},
        {"--theta-c", "theta_c"}, {"--theta", "theta"},         {"--phi", "phi"},         {"--phi-start", "phi_start"},
        {"--theta-start", "theta_start"}, {"--B1", "B1"},     {"--OmegaB", "OmegaB"},   {"--B-min", "B_min"},
        {"--fd-step", "fd_step"}};
    std::map<std::string, std::optional<double>> param_values;
    for (const auto& [flag, name] : param_flags) param_values[name];

    const std::pair<Command, const char*> commands[] = {
        {Command::simulate, "integrate the spin and write the trajectory with its phases"},
        {Command::phases, "phase budget: exact total phase against phi0, phi1, phi2"},
        {Command::convergence, "error of the quasi-stationary spin at orders 0, 1, 2 over an eps ladder"},
        {Command::stokes, "line vs surface form of the second-order phase for a (theta, theta_dot) loop"},
        {Command::timescale, "t1 = B/omega^2 where the second-order phase reaches 1/4"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [c, what] : commands) {
        CLI::App* sub = app.add_subcommand(to_string(c), what);
        sub->fallthrough();
        subs.push_back(sub);
    }

    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--profile", kind, "constant, uniform_rotation, sinusoidal, polynomial, cone or user_tabulated");
    for (const auto& [flag, name] : param_flags) app.add_option(flag, param_values[name]);
    app.add_option("--coeffs", coeffs, "polynomial coefficients a0,a1,...");
    app.add_option("--table", table_path, "CSV of s,B,theta,phi rows");
    app.add_option("--epsilon", epsilon);
    app.add_option("--t-start", t_start);
    app.add_option("--t-end", t_end);
    app.add_option("--rel-tol", rel_tol);
    app.add_option("--abs-tol", abs_tol);
    app.add_option("--max-step", max_step);
    app.add_option("--method", method, "dopri5 or exponential_midpoint");
    app.add_option("--samples", samples, "output intervals for simulate");
    app.add_option("--eps", eps, "comma-separated epsilon list");
    app.add_option("--horizon", horizon, "fixed eps*t for convergence runs");
    app.add_option("--B-list", B_list, "comma-separated field strengths for stokes");
    app.add_option("--nodes", nodes, "loop nodes for stokes");
    app.add_flag("--measure", measure, "integrate the exact phase in timescale runs");
    app.add_option("--initial-state", initial, "branch, up, down, x, y or re_up,im_up,re_dn,im_dn");
    app.add_option("--out", out, "output directory");
    app.add_option("--formats", formats, "subset of csv,json,gnuplot; empty or none for stdout only");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        throw HelpRequested{app.help()};
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    RunConfig c = config_path ? load_run_config(*config_path) : RunConfig{};
    if (!config_path) c.output_dir = default_output_dir();
    for (std::size_t i = 0; i < subs.size(); ++i)
        if (subs[i]->parsed()) c.command = static_cast<Command>(i);

    if (kind) {
        const ProfileKind k = profile_kind_from_string(*kind);
        if (!config_path || profile_kind_from_string(c.profile.kind) != k) c.profile.params = detail::default_params(k);
        c.profile.kind = to_string(k);
    } else if (!config_path) {
        c.profile.params = detail::default_params(profile_kind_from_string(c.profile.kind));
    }
    for (const auto& [name, v] : param_values)
        if (v) c.profile.params[name] = *v;
    if (coeffs) {
        std::erase_if(c.profile.params, [](const auto& kv) { return kv.first.size() == 2 && kv.first[0] == 'a'; });
        const auto a = detail::parse_number_list(*coeffs, "--coeffs");
        for (std::size_t i = 0; i < a.size(); ++i) c.profile.params["a" + std::to_string(i)] = a[i];
    }
    if (table_path) {
        c.profile.table = load_table_csv(*table_path);
        c.profile.kind = "user_tabulated";
    }
    if (epsilon) c.profile.epsilon = *epsilon;
    if (t_start) c.t_start = *t_start;
    if (t_end) c.t_end = *t_end;
    if (rel_tol) c.integrator.rel_tol = *rel_tol;
    if (abs_tol) c.integrator.abs_tol = *abs_tol;
    if (max_step) c.integrator.max_step = *max_step;
    if (method) c.integrator.method = *method;
    if (samples) c.integrator.samples = *samples;
    if (eps) c.eps = detail::parse_number_list(*eps, "--eps");
    if (horizon) c.horizon = *horizon;
    if (B_list) c.B_list = detail::parse_number_list(*B_list, "--B-list");
    if (nodes) c.nodes = *nodes;
    if (measure) c.measure = true;
    if (initial) c.initial_state = *initial;
    if (out) c.output_dir = *out;
    if (formats) {
        c.formats.clear();
        if (*formats != "none") {
            std::stringstream ss(*formats);
            std::string f;
            while (std::getline(ss, f, ','))
                if (!f.empty()) c.formats.insert(format_from_string(f));
        }
    }
    validate_run_config(c);
    return c;
}

// ---------------------------------------------------------------- execution

struct SimulateResult {
    SpinorTrajectory trajectory;
    PhaseSeries phase;
    std::vector<Vec3> field;
    std::vector<double> phi0_cumulative;
    std::vector<double> phi2_cumulative;
    std::string reference;
};

struct RunResults {
    RunConfig config;
    std::optional<SimulateResult> simulate;
    std::optional<PhaseBudget> phases;
    std::optional<ConvergenceReport> convergence;
    std::vector<StokesRow> stokes;
    std::optional<TimescaleReport> timescale;
};

inline SimulateResult run_simulate(const RunConfig& c, const FieldProfile& profile) {
    const double t0 = c.t_start, t1 = resolve_t_end(c, profile);
    IntegratorConfig cfg = build_integrator(c.integrator);
    cfg.dense_output_grid = uniform_grid(t0, t1, c.integrator.samples);
    const bool branch = c.initial_state == "branch";
    const Spinor psi0 = branch ? second_order_eigenvector(profile, t0) : resolve_initial_state(c.initial_state);
    const PhaseReference ref = branch ? PhaseReference::tracked_eigenvector : PhaseReference::initial_state;
    PhaseRun run = integrate_with_phase(profile, psi0, t0, t1, cfg, ref);

    SimulateResult r;
    r.reference = branch ? "tracked_eigenvector" : "initial_state";
    double p0 = 0.0, p2 = 0.0;
    for (std::size_t i = 0; i < run.trajectory.size(); ++i) {
        const double t = run.trajectory.times[i];
        if (i > 0) {
            const double tp = run.trajectory.times[i - 1];
            p0 += phi0(profile, tp, t);
            p2 += phi2(profile, tp, t);
        }
        r.field.push_back(profile.sample(t).B_vec);
        r.phi0_cumulative.push_back(p0);
        r.phi2_cumulative.push_back(p2);
    }
    r.trajectory = std::move(run.trajectory);
    r.phase = std::move(run.phase);
    return r;
}

inline std::vector<StokesRow> run_stokes(const RunConfig& c, const FieldProfile& profile) {
    std::vector<MLoop> loops;
    if (profile.kind() == ProfileKind::sinusoidal_angle) {
        const double omega_t = profile.param("Omega", 1.0) * profile.epsilon();
        loops.push_back(sinusoidal_loop(profile.param("theta0", 0.0), omega_t, c.nodes));
    } else {
        loops.push_back(loop_from_profile(profile, c.t_start, resolve_t_end(c, profile), c.nodes));
    }
    loops.push_back(loops.front().reversed());
    std::vector<double> Bs = c.B_list;
    if (Bs.empty()) Bs.push_back(profile.param("B0", 1.0));
    return run_stokes_check(loops, Bs);
}

inline RunResults execute(const RunConfig& c) {
    const FieldProfile profile = validate_run_config(c);
    RunResults r;
    r.config = c;
    switch (c.command) {
    case Command::simulate: r.simulate = run_simulate(c, profile); break;
    case Command::phases:
        r.phases = run_phase_budget(profile, c.t_start, resolve_t_end(c, profile), build_integrator(c.integrator));
        break;
    case Command::convergence:
        r.convergence = run_convergence(profile, c.eps, c.horizon, build_integrator(c.integrator), c.integrator.samples);
        break;
    case Command::stokes: r.stokes = run_stokes(c, profile); break;
    case Command::timescale:
        r.timescale = run_timescale_demo(profile.param("B0", 1.0), profile.param("omega", 0.0), c.measure,
                                         build_integrator(c.integrator));
        break;
    }
    return r;
}

// ---------------------------------------------------------------- output

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_row(std::initializer_list<double> values) {
    std::string s;
    for (double v : values) {
        if (!s.empty()) s += ',';
        s += fmt17(v);
    }
    return s + '\n';
}

inline const char* trajectory_csv_header = "t,Bx,By,Bz,Sx,Sy,Sz,re_up,im_up,re_dn,im_dn,phase_total,phi0,phi2";
inline const char* stokes_csv_header = "loop_id,line_integral,surface_integral,abs_diff";
inline const char* convergence_csv_header = "eps,err_order0,err_order1,err_order2";

inline std::string trajectory_csv(const SimulateResult& r) {
    std::string s = std::string(trajectory_csv_header) + '\n';
    for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
        const Spinor& psi = r.trajectory.states[i];
        const BlochVector S = spinor_to_bloch(psi);
        const Vec3& B = r.field[i];
        s += csv_row({r.trajectory.times[i], B(0), B(1), B(2), S.x, S.y, S.z, psi.up.real(), psi.up.imag(), psi.down.real(),
                      psi.down.imag(), r.phase.phase[i], r.phi0_cumulative[i], r.phi2_cumulative[i]});
    }
    return s;
}

inline std::string stokes_csv(const std::vector<StokesRow>& rows) {
    std::string s = std::string(stokes_csv_header) + '\n';
    for (const auto& r : rows) s += fmt17(static_cast<double>(r.loop_id)) + ',' + csv_row({r.line_integral, r.surface_integral, r.abs_diff});
    return s;
}

inline std::string convergence_csv(const ConvergenceReport& rep) {
    std::string s = std::string(convergence_csv_header) + '\n';
    for (std::size_t i = 0; i < rep.epsilons.size(); ++i)
        s += csv_row({rep.epsilons[i], rep.errors_order0[i], rep.errors_order1[i], rep.errors_order2[i]});
    return s;
}

inline json phases_json(const PhaseBudget& b) {
    return {{"phi0", b.phases.phi0},
            {"phi1", b.phases.phi1},
            {"phi2", b.phases.phi2},
            {"phi_total_exact", b.phases.phi_total_exact},
            {"phi_dyn_expect", b.phases.phi_dyn_expect},
            {"phi_geom_aa", b.phases.phi_geom_aa},
            {"residual_eps4", b.r_total},
            {"r_aa", b.r_aa},
            {"aa_to_phi2_ratio", detail::finite_or_null(b.aa_to_phi2_ratio())},
            {"profile", b.profile_kind},
            {"t_span", {b.t0, b.t1}},
            {"rel_tol", b.rel_tol},
            {"abs_tol", b.abs_tol}};
}

inline json summary_json(const RunResults& r) {
    json j;
    j["command"] = to_string(r.config.command);
    j["config"] = to_json(r.config);
    if (r.simulate) {
        const SimulateResult& s = *r.simulate;
        j["phase_reference"] = s.reference;
        j["t_span"] = {s.trajectory.times.front(), s.trajectory.times.back()};
        j["samples"] = s.trajectory.size();
        j["phase_total"] = s.phase.final();
        j["phi0"] = s.phi0_cumulative.back();
        j["phi2"] = s.phi2_cumulative.back();
        j["max_norm_drift"] = max_norm_drift(s.trajectory);
        j["accepted_steps"] = s.trajectory.meta.stats.accepted;
        j["rejected_steps"] = s.trajectory.meta.stats.rejected;
    }
    if (r.phases) j["phases"] = phases_json(*r.phases);
    if (r.convergence) {
        const ConvergenceReport& c = *r.convergence;
        j["eps"] = c.epsilons;
        j["errors"] = {{"order0", c.errors_order0}, {"order1", c.errors_order1}, {"order2", c.errors_order2}};
        j["slopes"] = json::array();
        j["slope_stderr"] = json::array();
        for (const auto& f : c.fits) {
            j["slopes"].push_back(f.slope);
            j["slope_stderr"].push_back(f.stderr_slope);
        }
    }
    if (r.config.command == Command::stokes) {
        j["rows"] = json::array();
        double worst = 0.0;
        for (const auto& row : r.stokes) {
            j["rows"].push_back({{"loop_id", row.loop_id}, {"B", row.B}, {"line_integral", row.line_integral},
                                 {"surface_integral", row.surface_integral}, {"abs_diff", row.abs_diff}});
            worst = std::max(worst, row.abs_diff);
        }
        j["max_abs_diff"] = worst;
    }
    if (r.timescale) {
        const TimescaleReport& t = *r.timescale;
        j["B"] = t.B;
        j["omega"] = t.omega;
        j["unbounded"] = t.unbounded;
        j["t1"] = detail::finite_or_null(t.t1);
        j["t2"] = detail::finite_or_null(t.t2);
        j["phi2_closed_form"] = t.phi2_closed_form;
        j["phi2_quadrature"] = t.phi2_quadrature;
        j["total_minus_phi0"] = t.total_minus_phi0 ? json(*t.total_minus_phi0) : json(nullptr);
    }
    return j;
}

/// Checks that a summary carries the keys and types its command promises.
/// Throws IoError naming the first violation.
inline void validate_summary(const json& j) {
    auto need = [&](const json& obj, const std::string& key, auto pred, const char* type) {
        if (!obj.contains(key) || !pred(obj.at(key))) throw IoError("summary key '" + key + "' missing or not " + type);
    };
    auto num = [](const json& v) { return v.is_number(); };
    auto num_or_null = [](const json& v) { return v.is_number() || v.is_null(); };
    auto arr = [](const json& v) { return v.is_array(); };
    auto str = [](const json& v) { return v.is_string(); };
    need(j, "command", str, "a string");
    need(j, "config", [](const json& v) { return v.is_object(); }, "an object");
    switch (command_from_string(j.at("command").get<std::string>())) {
    case Command::simulate:
        for (const char* k : {"phase_total", "phi0", "phi2", "max_norm_drift", "samples"}) need(j, k, num, "a number");
        need(j, "t_span", arr, "an array");
        break;
    case Command::phases:
        need(j, "phases", [](const json& v) { return v.is_object(); }, "an object");
        for (const char* k : {"phi0", "phi1", "phi2", "phi_total_exact", "phi_dyn_expect", "phi_geom_aa", "residual_eps4", "r_aa"})
            need(j.at("phases"), k, num, "a number");
        need(j.at("phases"), "aa_to_phi2_ratio", num_or_null, "a number or null");
        break;
    case Command::convergence:
        need(j, "eps", arr, "an array");
        need(j, "slopes", [](const json& v) { return v.is_array() && v.size() == 3; }, "a 3-element array");
        need(j, "errors", [](const json& v) { return v.is_object(); }, "an object");
        break;
    case Command::stokes:
        need(j, "rows", arr, "an array");
        need(j, "max_abs_diff", num, "a number");
        for (const auto& row : j.at("rows"))
            for (const char* k : {"loop_id", "B", "line_integral", "surface_integral", "abs_diff"}) need(row, k, num, "a number");
        break;
    case Command::timescale:
        for (const char* k : {"B", "omega", "phi2_closed_form", "phi2_quadrature"}) need(j, k, num, "a number");
        for (const char* k : {"t1", "t2", "total_minus_phi0"}) need(j, k, num_or_null, "a number or null");
        break;
    }
}

namespace detail {

inline std::string write_file(const std::filesystem::path& dir, const std::string& name, const std::string& content) {
    const std::filesystem::path p = dir / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write '" + p.string() + "'");
    out << content;
    out.close();
    if (!out) throw IoError("write failed for '" + p.string() + "'");
    return p.string();
}

inline std::string gnuplot_script(Command c) {
    std::string s = "set datafile separator ','\nset key autotitle columnhead\n";
    switch (c) {
    case Command::simulate:
        s += "set xlabel 't'\nset ylabel 'spin'\n"
             "plot 'traj.csv' using 1:5 with lines, '' using 1:6 with lines, '' using 1:7 with lines\n"
             "pause -1\n"
             "set ylabel 'phase'\n"
             "plot 'traj.csv' using 1:($12-$13) with lines title 'phase_total - phi0', '' using 1:14 with lines\n";
        break;
    case Command::convergence:
        s += "set logscale xy\nset xlabel 'eps'\nset ylabel 'max |S - S_qs|'\n"
             "plot 'convergence.csv' using 1:2 with linespoints, '' using 1:3 with linespoints, "
             "'' using 1:4 with linespoints\n";
        break;
    case Command::stokes:
        s += "set xlabel 'loop'\nplot 'stokes.csv' using 1:2 with points, '' using 1:3 with points\n";
        break;
    default: break;
    }
    return s;
}

} // namespace detail

/// Writes the artifacts selected by config.formats and returns their paths.
/// With no formats selected nothing is written and the list is empty.
inline std::vector<std::string> write_outputs(const RunResults& r, const RunConfig& config) {
    std::vector<std::string> written;
    if (config.formats.empty()) return written;
    const json summary = summary_json(r);
    validate_summary(summary);

    const std::filesystem::path dir(config.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");

    const bool csv = config.formats.count(Format::csv) > 0;
    const bool js = config.formats.count(Format::json) > 0;
    const bool gp = config.formats.count(Format::gnuplot) > 0;
    const std::string body = summary.dump(2) + '\n';

    switch (config.command) {
    case Command::simulate:
        if (csv) written.push_back(detail::write_file(dir, "traj.csv", trajectory_csv(*r.simulate)));
        if (js) written.push_back(detail::write_file(dir, "summary.json", body));
        if (gp) written.push_back(detail::write_file(dir, "plot.gp", detail::gnuplot_script(config.command)));
        break;
    case Command::phases:
        if (csv) {
            std::string s = "quantity,value\n";
            const json table = phases_json(*r.phases);
            for (const auto& [k, v] : table.items())
                if (v.is_number()) s += k + ',' + fmt17(v.get<double>()) + '\n';
            written.push_back(detail::write_file(dir, "phases.csv", s));
        }
        if (js) written.push_back(detail::write_file(dir, "phases.json", body));
        break;
    case Command::convergence:
        if (csv) written.push_back(detail::write_file(dir, "convergence.csv", convergence_csv(*r.convergence)));
        if (js) written.push_back(detail::write_file(dir, "convergence.json", body));
        if (gp) written.push_back(detail::write_file(dir, "convergence.gp", detail::gnuplot_script(config.command)));
        break;
    case Command::stokes:
        if (csv) written.push_back(detail::write_file(dir, "stokes.csv", stokes_csv(r.stokes)));
        if (js) written.push_back(detail::write_file(dir, "stokes.json", body));
        if (gp) written.push_back(detail::write_file(dir, "stokes.gp", detail::gnuplot_script(config.command)));
        break;
    case Command::timescale:
        if (js) written.push_back(detail::write_file(dir, "timescale.json", body));
        break;
    }
    return written;
}

// ---------------------------------------------------------------- exit codes

enum ExitCode : int { exit_ok = 0, exit_usage = 2, exit_config = 3, exit_io = 4, exit_numerical = 5 };

inline int exit_code_for(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::Usage: return exit_usage;
    case ErrorKind::Config: return exit_config;
    case ErrorKind::Io: return exit_io;
    default: return exit_numerical;
    }
}

/// Whole program: parse, run, write. Returns the process exit status.
inline int run_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig config = parse_cli(args);
        const RunResults results = execute(config);
        if (config.formats.empty()) {
            out << summary_json(results).dump(2) << '\n';
        } else {
            for (const auto& path : write_outputs(results, config)) out << path << '\n';
        }
        return exit_ok;
    } catch (const HelpRequested& h) {
        out << h.text;
        return exit_ok;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_numerical;
    }
}

} // namespace spinphase
