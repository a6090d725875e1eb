#include "mabuchi/battery.hpp"

#include <CLI11.hpp>

#include <Eigen/Core>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mabuchi;

namespace {

enum ExitCode { ok = 0, check_failed = 1, config_error = 2, solver_error = 3, io_error = 4 };

struct Run {
    std::string command;
    fs::path out;
    KeyValueConfig cfg;
    std::uint64_t seed = 7;
    std::vector<std::string> artifacts;

    fs::path artifact(const std::string& name) {
        artifacts.push_back(name);
        return out / name;
    }
    void save(const std::string& name, const json& j) { write_json_file(artifact(name), j); }
    void save(const std::string& name, const CsvTable& t) { t.save(artifact(name)); }
};

GridSpec grid_spec(const KeyValueConfig& c) {
    GridSpec s;
    s.dimension = c.get_int("grid.dimension", s.dimension);
    s.domain = domain_from_string(c.get_string("grid.domain", s.dimension == 1 ? "unit_disc" : "unit_ball"));
    s.h_z = c.get_double("grid.h", 0.04);
    s.n_t = c.get_int("grid.nt", 9);
    s.m_dir = c.get_int("grid.m_dir", s.m_dir);
    s.m_circ = c.get_int("grid.m_circ", s.m_circ);
    s.stencil_k = c.get_int("grid.stencil_k", s.stencil_k);
    return s;
}

struct SolverSettings {
    EnvelopeConfig envelope;
    bool trace = true;
};

SolverSettings solver_config(const KeyValueConfig& c) {
    EnvelopeConfig e;
    e.max_iterations = c.get_int("solver.max_iterations", e.max_iterations);
    e.tolerance = c.get_double("solver.tolerance", 1e-8);
    if (!(e.tolerance > 0.0)) throw ConfigError("solver.tolerance must be > 0");
    const auto mode = c.get_string("solver.mode", "gauss_seidel");
    if (mode == "gauss_seidel")
        e.mode = SweepMode::gauss_seidel;
    else if (mode == "jacobi")
        e.mode = SweepMode::jacobi;
    else
        throw ConfigError("solver.mode must be gauss_seidel or jacobi");
    e.adaptive_direction = c.get_bool("solver.adaptive_direction", e.adaptive_direction);
    e.refine_direction = c.get_bool("solver.refine_direction", e.refine_direction);
    e.refine_passes = c.get_int("solver.refine_passes", e.refine_passes);
    e.full_sweep_every = c.get_int("solver.full_sweep_every", e.full_sweep_every);
    e.barrier_slack = c.get_double("solver.barrier_slack", e.barrier_slack);
    return {e, c.get_bool("solver.trace", true)};
}

FamilySpec family_spec(const KeyValueConfig& c, const std::string& key, double default_c) {
    FamilySpec f;
    f.kind = family_from_string(c.get_string(key, "scaled_quadratic"));
    f.c = c.get_double(key + ".c", default_c);
    f.a = c.get_double(key + ".a", f.a);
    f.b = c.get_double(key + ".b", f.b);
    f.eps = c.get_double(key + ".eps", f.eps);
    f.k = c.get_int(key + ".k", f.k);
    return f;
}

struct Endpoint {
    Potential potential;
    std::optional<FamilySpec> family;
};

/// `endpoints.<name>` is a family name or `file:<path>` to a spatial grid function.
Endpoint endpoint(const KeyValueConfig& c, const std::string& name, const GridPtr& grid, double default_c) {
    const std::string key = "endpoints." + name;
    const std::string value = c.get_string(key, "scaled_quadratic");
    if (value.rfind("file:", 0) == 0) {
        const auto u = load_grid_function(value.substr(5), grid);
        if (!(u.grid().spec() == grid->spec())) throw ConfigError(key + ": stored grid differs from the configured grid");
        try {
            return {Potential(u, PshCheck::strict), std::nullopt};
        } catch (const PshViolation& e) {
            throw ConfigError(key + ": " + e.what());
        } catch (const UsageError& e) {
            throw ConfigError(key + ": " + e.what());
        }
    }
    const auto f = family_spec(c, key, default_c);
    return {family_potential(grid, f), f};
}

json family_json(const std::optional<FamilySpec>& f) {
    if (!f) return json("file");
    json j{{"family", to_string(f->kind)}};
    switch (f->kind) {
        case FamilyKind::scaled_quadratic: j["c"] = f->c; break;
        case FamilyKind::quartic_blend: j["a"] = f->a; j["b"] = f->b; break;
        case FamilyKind::angular_perturbation: j["eps"] = f->eps; j["k"] = f->k; break;
    }
    return j;
}

/// Solves the envelope, optionally streaming the sweep trace to trace.csv.
EnvelopeResult solve_envelope(Run& run, const Potential& p0, const Potential& p1, const SolverSettings& settings) {
    std::ostringstream trace;
    trace.precision(17);
    EnvelopeConfig ec = settings.envelope;
    const bool want_trace = settings.trace;
    if (want_trace) {
        trace << "iteration,full,sup_update\n";
        ec.trace = &trace;
    }
    auto res = psh_envelope(boundary_data(p0, p1), ec);
    if (want_trace) write_text_file(run.artifact("trace.csv"), trace.str());
    return res;
}

int cmd_envelope(Run& run) {
    const auto grid = build_grid(grid_spec(run.cfg));
    const auto ec = solver_config(run.cfg);
    const auto e0 = endpoint(run.cfg, "phi0", grid, 1.0), e1 = endpoint(run.cfg, "phi1", grid, 2.0);
    run.cfg.check_all_used();
    const auto res = solve_envelope(run, e0.potential, e1.potential, ec);
    save_grid_function(run.artifact("envelope.json"), res.phi);
    run.save("diagnostics.json", json{{"config_hash", config_hash(grid->spec(), ec.envelope)},
                                      {"phi0", family_json(e0.family)},
                                      {"phi1", family_json(e1.family)},
                                      {"diagnostics", to_json(res.diagnostics)}});
    return res.diagnostics.converged ? ok : solver_error;
}

int cmd_geodesic(Run& run) {
    const auto grid = build_grid(grid_spec(run.cfg));
    const auto ec = solver_config(run.cfg);
    const auto e0 = endpoint(run.cfg, "phi0", grid, 1.0), e1 = endpoint(run.cfg, "phi1", grid, 2.0);
    const double radius = run.cfg.get_double("report.residual_radius", 0.8);
    const double rho_k = run.cfg.get_double("report.rho_k", 0.7);
    const double ding_t = run.cfg.get_double("report.ding_t", 1.0);
    run.cfg.check_all_used();

    const auto res = solve_envelope(run, e0.potential, e1.potential, ec);
    const auto path = GeodesicPath::from_full(res.phi, config_hash(grid->spec(), ec.envelope), res.diagnostics);
    run.save("path.json", to_json(path));

    json report{{"config_hash", path.provenance()},
                {"phi0", family_json(e0.family)},
                {"phi1", family_json(e1.family)},
                {"diagnostics", to_json(res.diagnostics)}};
    std::optional<ResidualReport> residual;
    if (path.size() >= 3) {
        residual = geodesic_residual(path, radius);
        report["residual"] = {{"radius", radius},
                              {"sup", residual->sup},
                              {"mean", residual->mean},
                              {"evaluated", residual->evaluated},
                              {"degenerate_fraction", residual->degenerate_fraction}};
    }
    const auto lip = lipschitz_report(path);
    report["lipschitz"] = {{"observed_t", lip.lipschitz_t}, {"bound", lip.lipschitz_bound}, {"spatial", lip.spatial_lipschitz}};
    if (rho_k > 0.0 && rho_k + 2 * grid->h() < 1.0) {
        const auto sd = second_difference_report(path, rho_k);
        report["second_difference"] = {{"rho_k", rho_k}, {"sup", sd.second_difference_sup}, {"per_t", sd.second_difference_per_t}};
    }
    const auto energies = energy_along(path);
    const auto dings = ding_along(path, ding_t);
    report["energy"] = {{"chord_deviation", energies.chord_deviation}};
    report["ding"] = {{"t", ding_t}, {"concavity_defect", dings.concavity_defect}};
    if (grid->n() == 1 && e0.family && e1.family) {
        const auto g0 = radial_profile(*e0.family), g1 = radial_profile(*e1.family);
        if (g0 && g1) {
            const auto cmp = compare_with_oracle(path, toric_oracle(*g0, *g1));
            report["toric_oracle"] = {{"sup", cmp.sup}, {"mean", cmp.mean}};
        }
    }
    run.save("geodesic_report.json", report);

    CsvTable csv({"t", "energy", "sup_velocity", "residual_sup"});
    for (std::size_t j = 0; j < path.size(); ++j)
        csv.add({path.t(j), energies.energy[j], path.velocity(j).sup_norm(),
                 residual ? residual->per_slice_sup[j] : std::numeric_limits<double>::quiet_NaN()});
    run.save("slices.csv", csv);
    return res.diagnostics.converged ? ok : solver_error;
}

int cmd_energy(Run& run) {
    const auto grid = build_grid(grid_spec(run.cfg));
    const double t = run.cfg.get_double("energy.t", 1.0);
    const std::string source = run.cfg.get_string("energy.path", "geodesic");
    std::optional<GeodesicPath> path;
    if (source.rfind("file:", 0) == 0) {
        run.cfg.check_all_used();
        path = path_from_json(read_json_file(source.substr(5)));
    } else if (source == "geodesic" || source == "linear") {
        const auto ec = solver_config(run.cfg);
        const auto e0 = endpoint(run.cfg, "phi0", grid, 1.0), e1 = endpoint(run.cfg, "phi1", grid, 2.0);
        run.cfg.check_all_used();
        if (source == "geodesic") {
            const auto res = solve_envelope(run, e0.potential, e1.potential, ec);
            if (!res.diagnostics.converged) throw NumericalError("geodesic solve did not converge");
            path = GeodesicPath::from_full(res.phi, config_hash(grid->spec(), ec.envelope), res.diagnostics);
        } else {
            path = probes::linear_path(e0.potential.values(), e1.potential.values(), grid->nt());
        }
    } else {
        throw ConfigError("energy.path must be geodesic, linear or file:<path>");
    }
    const auto rep = ding_along(*path, t);
    run.save("energy_report.json", json{{"source", source},
                                        {"t", t},
                                        {"s", rep.s},
                                        {"energy", rep.energy},
                                        {"ding", rep.ding},
                                        {"chord_deviation", rep.chord_deviation},
                                        {"concavity_defect", rep.concavity_defect}});
    CsvTable csv({"s", "energy", "ding"});
    for (std::size_t j = 0; j < rep.s.size(); ++j) csv.add({rep.s[j], rep.energy[j], rep.ding[j]});
    run.save("energy.csv", csv);
    return ok;
}

int cmd_ke_solve(Run& run) {
    const auto grid = build_grid(grid_spec(run.cfg));
    KEConfig kc;
    const double t = run.cfg.get_double("ke.t", 1.0);
    kc.tolerance = run.cfg.get_double("ke.tolerance", kc.tolerance);
    kc.max_iterations = run.cfg.get_int("ke.max_iterations", kc.max_iterations);
    kc.damping = run.cfg.get_double("ke.damping", kc.damping);
    kc.damping_growth = run.cfg.get_double("ke.damping_growth", kc.damping_growth);
    kc.patience = run.cfg.get_int("ke.patience", kc.patience);
    const auto scan = run.cfg.get_list("ke.scan", {});
    run.cfg.check_all_used();

    const DiscLaplacian lap(grid);
    const auto r = solve_ma_t(lap, t, kc);
    run.save("ke_report.json", json{{"t", r.t},
                                    {"converged", r.converged},
                                    {"diverged", r.diverged},
                                    {"iterations", r.iterations},
                                    {"residual", r.residual},
                                    {"ding", r.ding},
                                    {"mass", r.mass},
                                    {"symmetry_defect", r.symmetry_defect},
                                    {"final_damping", r.final_damping}});
    CsvTable trace({"iteration", "residual"});
    for (std::size_t k = 0; k < r.trace.size(); ++k) trace.add({static_cast<double>(k), r.trace[k]});
    run.save("ke_trace.csv", trace);
    save_grid_function(run.artifact("phi_t.json"), r.phi);

    if (!scan.empty()) {
        const auto rep = threshold_scan(lap, scan, kc);
        json entries = json::array();
        for (const auto& e : rep.entries)
            entries.push_back({{"t", e.t}, {"converged", e.converged}, {"diverged", e.diverged}, {"iterations", e.iterations}, {"residual", e.residual}});
        run.save("threshold_scan.json",
                 json{{"analytic_threshold", rep.analytic_threshold},
                      {"empirical_onset", rep.empirical_onset ? json(*rep.empirical_onset) : json(nullptr)},
                      {"entries", entries}});
    }
    if (!r.converged) throw NumericalError("(MA)_t fixed point did not converge at t = " + format_double(t));
    return ok;
}

int cmd_curvature(Run& run) {
    const double h = run.cfg.get_double("curvature.h", 0.05);
    const double step = run.cfg.get_double("curvature.step", 0.05);
    const int pairs = run.cfg.get_int("curvature.pairs", 100);
    run.cfg.check_all_used();
    if (!(h > 0.0) || !(step > 0.0) || pairs < 1) throw ConfigError("curvature.h, curvature.step and curvature.pairs must be positive");

    const auto g = probes::disc(h);
    const Potential phi = probes::scaled(g, 1.0);
    probes::SeededUniform u(run.seed);
    double antisym = 0.0;
    for (int k = 0; k < 10; ++k) {
        const auto a = probes::random_field(g, u), b = probes::random_field(g, u);
        antisym = std::max(antisym, (poisson_bracket(a, b, phi) + poisson_bracket(b, a, phi)).sup_norm());
    }
    const double gap_c = probes::bracket_commutator_gap(2 * h, 2 * step), gap_f = probes::bracket_commutator_gap(h, step);
    const double sym_c = probes::local_symmetry_at(2 * h, 2 * step), sym_f = probes::local_symmetry_at(h, step);
    const double adj_c = probes::adjointness_defect(2 * h), adj_f = probes::adjointness_defect(h);
    const double met_c = probes::metric_compatibility_defect(2 * h, 2 * step), met_f = probes::metric_compatibility_defect(h, step);
    run.save("curvature_report.json",
             json{{"seed", run.seed},
                  {"h", h},
                  {"step", step},
                  {"antisymmetry_defect", antisym},
                  {"max_sectional_curvature", probes::max_sectional_curvature(h, pairs, run.seed)},
                  {"pairs", pairs},
                  {"bracket_vs_commutator", {{"coarse", gap_c}, {"fine", gap_f}}},
                  {"local_symmetry", {{"coarse", sym_c}, {"fine", sym_f}}},
                  {"adjointness", {{"coarse", adj_c}, {"fine", adj_f}}},
                  {"metric_compatibility", {{"coarse", met_c}, {"fine", met_f}}}});
    return ok;
}

int cmd_check(Run& run) {
    BatteryOptions opt;
    opt.seed = run.seed;
    std::stringstream ss(run.cfg.get_string("check.suites", ""));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
        if (b != std::string::npos) opt.suites.insert(item.substr(b, e - b + 1));
    }
    run.cfg.check_all_used();
    const auto report = run_battery(opt);
    run.save("check_report.json", report);
    for (const auto& c : report["checks"])
        std::cout << (c["pass"].get<bool>() ? "PASS  " : "FAIL  ") << c["name"].get<std::string>() << "  " << c["measured"].dump() << '\n';
    std::cout << report["passed"] << " passed, " << report["failed"] << " failed\n";
    return report["all_pass"].get<bool>() ? ok : check_failed;
}

std::string compiler_version() {
#if defined(__clang__)
    return std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    return std::string("gcc ") + __VERSION__;
#else
    return "unknown";
#endif
}

json versions() {
    return json{{"mabuchi", library_version},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                      "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                {"cli11", CLI11_VERSION},
                {"compiler", compiler_version()}};
}

std::string config_digest(const Run& run) {
    std::string text = run.command + "\nseed=" + std::to_string(run.seed) + "\n";
    for (const auto& [k, v] : run.cfg.resolved()) text += k + "=" + v + "\n";
    return fnv1a_hex(text);
}

json error_json(const char* kind, int code, const std::string& message) {
    return json{{"error", {{"kind", kind}, {"exit_code", code}, {"message", message}}}};
}

}  // namespace

int main(int argc, char** argv) {
    const auto start = std::chrono::steady_clock::now();
    CLI::App app{"Weak Mabuchi geodesics, Monge-Ampere functionals and the (MA)_t family on model domains"};
    app.require_subcommand(1);
    app.fallthrough();

    Run run;
    std::string config_path;
    std::string out = "mabuchi_out";
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "key = value configuration file");
    app.add_option("-o,--out", out, "output directory")->capture_default_str();
    app.add_option("-s,--set", overrides, "override a config key, e.g. --set grid.h=0.02");
    app.add_option("--seed", run.seed, "seed for sampled test directions")->capture_default_str();

    const std::vector<std::pair<std::string, std::string>> commands{
        {"geodesic", "solve the geodesic between two endpoints and report its properties"},
        {"envelope", "solve the Perron-Bremermann envelope on Omega x A"},
        {"energy", "Monge-Ampere energy and Ding functional along a path"},
        {"ke-solve", "solve (MA)_t on the unit disc"},
        {"curvature", "Poisson bracket, connection and curvature probes"},
        {"check", "run the invariant battery"}};
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    int code = ok;
    json error;
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        code = config_error;
        error = error_json("config", code, e.what());
    }
    if (code == ok) run.command = app.get_subcommands().front()->get_name();
    run.out = out;

    if (code == ok) {
        try {
            fs::create_directories(run.out);
        } catch (const fs::filesystem_error& e) {
            code = io_error;
            error = error_json("io", code, e.what());
        }
    }
    if (code == ok) {
        try {
            if (!config_path.empty()) run.cfg = KeyValueConfig::from_file(config_path);
            for (const auto& o : overrides) run.cfg.set_override(o);
            if (run.command == "geodesic") code = cmd_geodesic(run);
            else if (run.command == "envelope") code = cmd_envelope(run);
            else if (run.command == "energy") code = cmd_energy(run);
            else if (run.command == "ke-solve") code = cmd_ke_solve(run);
            else if (run.command == "curvature") code = cmd_curvature(run);
            else code = cmd_check(run);
            if (code == solver_error) error = error_json("solver", code, "solver did not converge");
        } catch (const ConfigError& e) {
            code = config_error;
            error = error_json("config", code, e.what());
        } catch (const UsageError& e) {
            code = config_error;
            error = error_json("config", code, e.what());
        } catch (const IoError& e) {
            code = io_error;
            error = error_json("io", code, e.what());
        } catch (const FormatError& e) {
            code = io_error;
            error = error_json("io", code, e.what());
        } catch (const NumericalError& e) {
            code = solver_error;
            error = error_json("solver", code, e.what());
        } catch (const DomainError& e) {
            code = solver_error;
            error = error_json("solver", code, e.what());
        }
    }

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest{{"command", run.command},
                  {"status", code == ok ? "ok" : (code == check_failed ? "checks_failed" : "error")},
                  {"exit_code", code},
                  {"config_hash", config_digest(run)},
                  {"config", run.cfg.entries()},
                  {"resolved_config", run.cfg.resolved()},
                  {"seed", run.seed},
                  {"versions", versions()},
                  {"wall_time_seconds", seconds},
                  {"artifacts", run.artifacts}};
    if (!error.is_null()) {
        std::cerr << error.dump() << '\n';
        manifest["error"] = error["error"];
    }
    try {
        fs::create_directories(run.out);
        if (!error.is_null()) write_json_file(run.out / "error.json", error);
        write_json_file(run.out / "manifest.json", manifest);
    } catch (const std::exception& e) {
        std::cerr << error_json("io", io_error, std::string("cannot write manifest: ") + e.what()).dump() << '\n';
        if (code == ok) code = io_error;
    }
    return code;
}
