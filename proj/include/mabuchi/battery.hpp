#pragma once

// Invariant battery: the module properties and reduced-size acceptance
// checks, evaluated deterministically for a given seed. Reports carry the
// measured values next to their thresholds and never include timings.

#include "mabuchi/families.hpp"
#include "mabuchi/functionals.hpp"
#include "mabuchi/geodesic.hpp"
#include "mabuchi/io.hpp"
#include "mabuchi/ke_solver.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace mabuchi {

namespace probes {

using Z = std::array<cplx, 2>;

/// Uniform double in [lo, hi) from the top 53 bits of a 64-bit Mersenne twister.
class SeededUniform {
public:
    explicit SeededUniform(std::uint64_t seed) : rng_(seed) {}
    double operator()(double lo, double hi) {
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

private:
    std::mt19937_64 rng_;
};

inline GridPtr disc(double h, int nt = 3) {
    GridSpec s;
    s.h_z = h;
    s.n_t = nt;
    return build_grid(s);
}

inline Potential scaled(const GridPtr& g, double c) {
    FamilySpec f;
    f.c = c;
    return family_potential(g, f);
}

inline GridFunction zero_trace(const GridPtr& g, const std::function<double(const Z&)>& f) {
    auto u = GridFunction::spatial_from(g, f);
    for (std::size_t s = 0; s < g->spatial_count(); ++s)
        if (!g->spatial_interior(s)) u[s] = 0.0;
    return u;
}

/// (1 - |z|^2) times a random real polynomial of degree <= 2 in (x, y).
inline GridFunction random_field(const GridPtr& g, SeededUniform& u) {
    std::array<double, 6> c{};
    for (double& x : c) x = u(-1.0, 1.0);
    return zero_trace(g, [c](const Z& z) {
        const double x = z[0].real(), y = z[0].imag();
        return (1.0 - std::norm(z[0])) * (c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y);
    });
}

/// Smooth polynomial family of potentials and fields with up to three parameters.
inline PathFamily polynomial_family(const GridPtr& g, double step, int params) {
    auto phi = [](const Z& z, const std::array<double, 3>& p) {
        const cplx w = z[0];
        const double r2 = std::norm(w);
        return (r2 - 1.0) * (1.0 + 0.3 * p[0] * w.real() + 0.2 * p[1] * w.imag() + 0.15 * p[2] * (w.real() * w.imag()) +
                             0.1 * p[0] * p[1]);
    };
    auto psi = [](const Z& z, const std::array<double, 3>& p) {
        const cplx w = z[0];
        return (1.0 - std::norm(w)) * (w.real() * w.imag() + p[0] * w.real() - 0.5 * p[1] * w.imag() + 0.3 * p[2]);
    };
    return PathFamily::sample(g, params, {3, 3, 3}, {step, step, step}, phi, psi);
}

inline double bracket_commutator_gap(double h, double step) {
    const auto fam = polynomial_family(disc(h), step, 2);
    const auto b = curvature_tensor(fam, CurvatureMode::bracket);
    const auto c = curvature_tensor(fam, CurvatureMode::commutator);
    return interior_sup(b - c, fam.phi(fam.center()).hessian(), 0.8);
}

inline double local_symmetry_at(double h, double step) {
    return local_symmetry_residual(polynomial_family(disc(h), step, 3), 0.8);
}

/// |<<{psi, theta}, eta>> - <<psi, {theta, eta}>>| for compactly supported fields.
inline double adjointness_defect(double h) {
    const auto g = disc(h);
    const Potential phi = scaled(g, 1.0);
    auto bump = [](const Z& z, auto f) {
        const double r2 = std::norm(z[0]);
        return r2 < 0.64 ? std::pow(0.64 - r2, 3) * f(z[0]) : 0.0;
    };
    const auto psi = GridFunction::spatial_from(g, [&](const Z& z) { return bump(z, [](cplx w) { return w.real(); }); });
    const auto theta = GridFunction::spatial_from(
        g, [&](const Z& z) { return bump(z, [](cplx w) { return w.imag() + w.real() * w.real(); }); });
    const auto eta =
        GridFunction::spatial_from(g, [&](const Z& z) { return bump(z, [](cplx w) { return 1.0 + w.imag(); }); });
    return std::abs(inner_product(poisson_bracket(psi, theta, phi), eta, phi) -
                    inner_product(psi, poisson_bracket(theta, eta, phi), phi));
}

/// d/dt <<psi1, psi2>> - <<D psi1, psi2>> - <<psi1, D psi2>> at the centre of a 3-sample family.
inline double metric_compatibility_defect(double h, double dt) {
    const auto g = disc(h);
    auto phi = [](const Z& z, const std::array<double, 3>& p) {
        return (std::norm(z[0]) - 1.0) * (1.0 + 0.4 * p[0] * z[0].real() + 0.2 * p[0] * p[0]);
    };
    auto psi1 = [](const Z& z, const std::array<double, 3>& p) { return (1.0 - std::norm(z[0])) * (1.0 + p[0] * z[0].imag()); };
    auto psi2 = [](const Z& z, const std::array<double, 3>& p) { return (1.0 - std::norm(z[0])) * (z[0].real() + p[0] * p[0]); };
    const auto f1 = PathFamily::sample(g, 1, {3, 1, 1}, {dt, 0, 0}, phi, psi1);
    const auto f2 = PathFamily::sample(g, 1, {3, 1, 1}, {dt, 0, 0}, phi, psi2);
    const double ddt = (inner_product(f1.psi({2, 0, 0}), f2.psi({2, 0, 0}), f1.phi({2, 0, 0})) -
                        inner_product(f1.psi({0, 0, 0}), f2.psi({0, 0, 0}), f1.phi({0, 0, 0}))) /
                       (2 * dt);
    const auto& c = f1.phi({1, 0, 0});
    return std::abs(ddt - inner_product(covariant_derivative(f1)[0], f2.psi({1, 0, 0}), c) -
                    inner_product(f1.psi({1, 0, 0}), covariant_derivative(f2)[0], c));
}

/// Largest K(psi1, psi2) over seeded random pairs; exactly <= 0 by construction.
inline double max_sectional_curvature(double h, int pairs, std::uint64_t seed) {
    const auto g = disc(h);
    const Potential phi = Potential::from_function(
        g, [](const Z& z) { return std::norm(z[0]) - 1.0 + 0.1 * (std::pow(std::norm(z[0]), 2) - 1.0); });
    SeededUniform u(seed);
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < pairs; ++k) {
        const auto a = random_field(g, u);
        const auto b = random_field(g, u);
        worst = std::max(worst, sectional_curvature(phi, a, b));
    }
    return worst;
}

inline double g_quadratic(double s) { return std::exp(2 * s) - 1.0; }
inline double g_double_quadratic(double s) { return 2.0 * (std::exp(2 * s) - 1.0); }

/// Solved geodesic between |z|^2 - 1 and 2(|z|^2 - 1).
inline GeodesicPath radial_geodesic(double h, int nt, const EnvelopeConfig& cfg = {}) {
    const auto g = disc(h, nt);
    return solve_geodesic(scaled(g, 1.0), scaled(g, 2.0), cfg);
}

inline GeodesicPath linear_path(const GridFunction& a, const GridFunction& b, int slices) {
    std::vector<GridFunction> out;
    for (int j = 0; j < slices; ++j) {
        const double t = static_cast<double>(j) / (slices - 1);
        out.push_back((1 - t) * a + t * b);
    }
    return GeodesicPath(std::move(out));
}

inline double max_radial_error(const GridFunction& u, const std::function<double(double)>& radial) {
    const Grid& g = u.grid();
    double e = 0.0;
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (g.spatial_interior(s)) e = std::max(e, std::abs(u[s] - radial(std::norm(g.z(s)[0]))));
    return e;
}

inline bool bit_identical(const GridFunction& a, const GridFunction& b) {
    return a.size() == b.size() && a.tag() == b.tag() && a.grid().spec() == b.grid().spec() &&
           std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace probes

struct BatteryOptions {
    std::uint64_t seed = 7;
    std::set<std::string> suites;  // empty selects every suite
};

inline const std::vector<std::string>& battery_suites() {
    static const std::vector<std::string> s{"grid", "ma_kernels", "envelope", "geodesic", "functionals", "ke_solver", "io"};
    return s;
}

/// Runs the selected suites; the result lists every check with measured
/// values, thresholds and status, plus pass/fail totals.
inline json run_battery(const BatteryOptions& opt = {}) {
    using namespace probes;
    for (const auto& s : opt.suites)
        if (std::find(battery_suites().begin(), battery_suites().end(), s) == battery_suites().end())
            throw ConfigError("unknown check suite '" + s + "'");
    auto selected = [&](const std::string& s) { return opt.suites.empty() || opt.suites.count(s) != 0; };

    json checks = json::array();
    auto record = [&](const std::string& name, bool pass, json measured, json threshold) {
        checks.push_back({{"name", name}, {"pass", pass}, {"measured", std::move(measured)}, {"threshold", std::move(threshold)}});
    };
    auto guarded = [&](const std::string& name, const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            record(name, false, json{{"error", e.what()}}, json{});
        }
    };

    EnvelopeConfig env;
    env.mode = SweepMode::jacobi;
    env.tolerance = 1e-8;

    if (selected("grid")) {
        guarded("grid.classification_deterministic", [&] {
            const auto a = disc(0.1, 5), b = disc(0.1, 5);
            const bool same = std::equal(a->classes().begin(), a->classes().end(), b->classes().begin(), b->classes().end());
            record("grid.classification_deterministic", same, json{{"identical", same}}, json{{"identical", true}});
        });
        guarded("grid.refinement_triples_interior", [&] {
            const double ratio = static_cast<double>(disc(0.05)->interior_spatial_count()) /
                                 static_cast<double>(disc(0.1)->interior_spatial_count());
            record("grid.refinement_triples_interior", ratio >= 3.0, json{{"ratio", ratio}}, json{{"min", 3.0}});
        });
    }

    if (selected("ma_kernels")) {
        guarded("ma.disc_mass", [&] {
            const double mass = integrate(ma_density(scaled(disc(0.05), 1.0)));
            record("ma.disc_mass", std::abs(mass - 2.0) <= 2e-2, json{{"mass", mass}}, json{{"expected", 2.0}, {"tolerance", 2e-2}});
        });
        guarded("bracket.antisymmetry", [&] {
            const auto g = disc(0.1);
            const Potential phi = scaled(g, 1.0);
            SeededUniform u(opt.seed);
            double defect = 0.0;
            for (int k = 0; k < 10; ++k) {
                const auto a = random_field(g, u), b = random_field(g, u);
                defect = std::max(defect, (poisson_bracket(a, b, phi) + poisson_bracket(b, a, phi)).sup_norm());
            }
            record("bracket.antisymmetry", defect == 0.0, json{{"defect", defect}}, json{{"max", 0.0}});
        });
        guarded("bracket.adjointness_refines", [&] {
            const double c = adjointness_defect(0.1), f = adjointness_defect(0.05);
            const double order = std::log2(c / f);
            record("bracket.adjointness_refines", f < c && f < 1e-3, json{{"h0.1", c}, {"h0.05", f}, {"order", order}},
                   json{{"fine_max", 1e-3}, {"decreasing", true}});
        });
        guarded("curvature.sectional_nonpositive", [&] {
            const double worst = max_sectional_curvature(0.1, 100, opt.seed);
            record("curvature.sectional_nonpositive", worst <= 0.0, json{{"max_K", worst}, {"pairs", 100}}, json{{"max", 0.0}});
        });
        guarded("curvature.bracket_matches_commutator", [&] {
            const double c = bracket_commutator_gap(0.1, 0.1), f = bracket_commutator_gap(0.05, 0.05);
            record("curvature.bracket_matches_commutator", f <= 0.6 * c, json{{"coarse", c}, {"fine", f}, {"ratio", f / c}},
                   json{{"max_ratio", 0.6}});
        });
        guarded("curvature.local_symmetry_refines", [&] {
            const double c = local_symmetry_at(0.1, 0.1), f = local_symmetry_at(0.05, 0.05);
            record("curvature.local_symmetry_refines", f <= 0.5 * c, json{{"coarse", c}, {"fine", f}, {"ratio", f / c}},
                   json{{"max_ratio", 0.5}});
        });
        guarded("connection.metric_compatibility_refines", [&] {
            const double c = metric_compatibility_defect(0.1, 0.1), f = metric_compatibility_defect(0.05, 0.05);
            record("connection.metric_compatibility_refines", f <= 0.6 * c,
                   json{{"coarse", c}, {"fine", f}, {"ratio", f / c}}, json{{"max_ratio", 0.6}});
        });
    }

    if (selected("envelope")) {
        guarded("envelope.constant_path", [&] {
            const auto g = disc(0.1, 5);
            const auto p = scaled(g, 1.0);
            const auto path = solve_geodesic(p, p, env);
            double err = 0.0;
            for (const auto& sl : path.slices()) err = std::max(err, sup_distance(sl, p.values()));
            record("envelope.constant_path", err <= 1e-4, json{{"sup_error", err}}, json{{"max", 1e-4}});
        });
        guarded("envelope.comparison", [&] {
            const auto g = disc(0.1, 5);
            const auto lo = psh_envelope(boundary_data(scaled(g, 2.0), scaled(g, 3.0)), env).phi;
            const auto hi = psh_envelope(boundary_data(scaled(g, 1.0), scaled(g, 2.0)), env).phi;
            double excess = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < lo.size(); ++i) excess = std::max(excess, lo[i] - hi[i]);
            record("envelope.comparison", excess <= 1e-4, json{{"max_excess", excess}}, json{{"max", 1e-4}});
        });
        guarded("envelope.barrier_bracketing", [&] {
            const auto g = disc(0.1, 5);
            const auto p0 = scaled(g, 1.0), p1 = scaled(g, 2.0);
            const auto res = psh_envelope(boundary_data(p0, p1), env);
            const auto low = lower_barrier(p0, p1);
            double below = 0.0;
            for (std::size_t i = 0; i < low.size(); ++i) below = std::max(below, low[i] - res.phi[i]);
            record("envelope.barrier_bracketing", below <= 1e-9 && res.diagnostics.converged,
                   json{{"max_barrier_excess", below}, {"converged", res.diagnostics.converged}},
                   json{{"max", 1e-9}});
        });
    }

    std::optional<GeodesicPath> radial;
    if (selected("geodesic") || selected("functionals")) {
        guarded("geodesic.solve_radial", [&] { radial = radial_geodesic(0.04, 5, env); });
    }

    if (selected("geodesic")) {
        if (radial) {
            guarded("geodesic.toric_oracle", [&] {
                const auto cmp = compare_with_oracle(*radial, toric_oracle(g_quadratic, g_double_quadratic));
                record("geodesic.toric_oracle", cmp.sup <= 5e-2, json{{"sup", cmp.sup}, {"mean", cmp.mean}, {"h", 0.04}},
                       json{{"max", 5e-2}});
            });
            guarded("geodesic.lipschitz_in_t", [&] {
                const auto rep = lipschitz_report(*radial);
                const double bound = rep.lipschitz_bound + 1e-3 + radial->diagnostics()->tolerance / radial->dt();
                record("geodesic.lipschitz_in_t", rep.lipschitz_t <= bound,
                       json{{"observed", rep.lipschitz_t}, {"spatial_lipschitz", rep.spatial_lipschitz}},
                       json{{"max", bound}});
            });
        }
        guarded("geodesic.second_difference_calibration", [&] {
            const auto g = disc(0.05);
            const auto p = scaled(g, 1.7);
            const auto rep = second_difference_report(linear_path(p.values(), p.values(), 3), 0.7);
            record("geodesic.second_difference_calibration", std::abs(rep.second_difference_sup - 3.4) <= 1e-9,
                   json{{"quotient", rep.second_difference_sup}}, json{{"expected", 3.4}, {"tolerance", 1e-9}});
        });
        guarded("geodesic.mobius_inverse", [&] {
            SeededUniform u(opt.seed + 1);
            double worst = 0.0;
            for (int trial = 0; trial < 100; ++trial) {
                auto sample = [&] {
                    BallPoint p{cplx(u(-0.6, 0.6), u(-0.6, 0.6)), cplx(u(-0.6, 0.6), u(-0.6, 0.6))};
                    const double r = std::sqrt(std::norm(p[0]) + std::norm(p[1]));
                    if (r > 0.9) p = {p[0] * (0.9 / r), p[1] * (0.9 / r)};
                    return p;
                };
                const BallPoint a = sample(), z = sample();
                const auto back = mobius(BallPoint{-a[0], -a[1]}, mobius(a, z, 2), 2);
                worst = std::max(worst, std::hypot(std::abs(back[0] - z[0]), std::abs(back[1] - z[1])));
            }
            record("geodesic.mobius_inverse", worst <= 1e-10, json{{"max_error", worst}}, json{{"max", 1e-10}});
        });
    }

    if (selected("functionals")) {
        guarded("functionals.energy_reference", [&] {
            const double e = energy(scaled(disc(0.04), 1.0));
            record("functionals.energy_reference", std::abs(e + 0.5) <= 0.01, json{{"E", e}},
                   json{{"expected", -0.5}, {"tolerance", 0.01}});
        });
        guarded("functionals.ding_reference", [&] {
            const double f = ding(scaled(disc(0.04), 1.0), 1.0);
            const double exact = -0.5 + std::log(std::exp(1.0) - 1.0);
            record("functionals.ding_reference", std::abs(f - exact) <= 0.02 * std::abs(exact), json{{"F1", f}},
                   json{{"expected", exact}, {"relative_tolerance", 0.02}});
        });
        guarded("functionals.ding_shift_invariance", [&] {
            const auto p = scaled(disc(0.04), 30.0);
            const double a = ding(p, 2.0), b = ding(p, 2.0, 0.0), c = ding(p, 2.0, 10.0);
            const double d = std::max(std::abs(a - b), std::abs(a - c));
            record("functionals.ding_shift_invariance", d <= 1e-9 * std::abs(a), json{{"difference", d}},
                   json{{"relative_max", 1e-9}});
        });
        guarded("functionals.coercivity_zero", [&] {
            const auto rep = coercivity_probe({scaled(disc(0.1), 0.0)}, 1.0, 0.0, 0.0);
            record("functionals.coercivity_zero", rep.pass, json{{"least_feasible_m", rep.least_feasible_m}}, json{{"M", 0.0}});
        });
        if (radial) {
            guarded("functionals.energy_affine", [&] {
                const auto geo = energy_along(*radial);
                const auto lin = energy_along(linear_path(radial->slice(0), radial->slices().back(), 5));
                record("functionals.energy_affine",
                       geo.chord_deviation <= 5e-2 && lin.chord_deviation >= 3 * geo.chord_deviation,
                       json{{"geodesic", geo.chord_deviation}, {"linear", lin.chord_deviation}},
                       json{{"geodesic_max", 5e-2}, {"linear_factor", 3.0}});
            });
            guarded("functionals.ding_concavity", [&] {
                const auto rep = ding_along(*radial, 1.0);
                record("functionals.ding_concavity", rep.concavity_defect <= 0.2, json{{"defect", rep.concavity_defect}},
                       json{{"max", 0.2}});
            });
        }
    }

    if (selected("ke_solver")) {
        const auto g = disc(0.04);
        const DiscLaplacian lap(g);
        std::optional<KESolveReport> ke;
        guarded("ke.converges_at_t1", [&] {
            ke = solve_ma_t(lap, 1.0);
            record("ke.converges_at_t1", ke->converged && ke->residual <= 1e-6,
                   json{{"residual", ke->residual}, {"iterations", ke->iterations}, {"mass", ke->mass}},
                   json{{"max_residual", 1e-6}});
        });
        guarded("ke.small_t_limit", [&] {
            const auto r = solve_ma_t(lap, 1e-8);
            const double err = max_radial_error(r.phi, [](double r2) { return 0.5 * (r2 - 1.0); });
            record("ke.small_t_limit", err <= 5.0 * 0.04 * 0.04, json{{"error", err}}, json{{"max", 5.0 * 0.04 * 0.04}});
        });
        if (ke) {
            guarded("ke.maximizer", [&] {
                std::vector<GridFunction> fam;
                for (double c : {0.25, 0.5, 1.0, 2.0, 4.0}) fam.push_back(scaled(g, c).values());
                fam.push_back(ke->phi);
                const auto m = maximizer_check(ke->phi, fam, 1.0);
                record("ke.maximizer", m.pass, json{{"worst_margin", m.worst}}, json{{"min", -1e-4}});
            });
            guarded("ke.stationarity", [&] {
                const auto bump = Potential::from_function(
                    g, [](const Z& z) { return (std::norm(z[0]) - 1.0) * (1.0 + z[0].real()); }, PshCheck::lenient);
                const GeodesicPath path({ke->phi, ke->phi + 1e-3 * bump.values(), ke->phi + 2e-3 * bump.values()});
                const double f = ding_derivative_check(path, 1.0).formula;
                record("ke.stationarity", std::abs(f) <= 1e-3, json{{"formula", f}}, json{{"max_abs", 1e-3}});
            });
        }
        guarded("ke.threshold_scan", [&] {
            const auto scan = threshold_scan(lap, {1.0, 2.0, 3.0, 4.2});
            json onset = scan.empirical_onset ? json(*scan.empirical_onset) : json(nullptr);
            record("ke.threshold_scan", scan.entries.front().converged,
                   json{{"analytic_threshold", scan.analytic_threshold}, {"empirical_onset", onset}},
                   json{{"recorded_only", true}});
        });
    }

    if (selected("io")) {
        guarded("io.round_trip", [&] {
            const auto g = disc(0.1, 5);
            SeededUniform u(opt.seed + 2);
            auto full = GridFunction::full_from(g, [&](const Z&, double) { return u(-1.0, 1.0) * 1e-3; });
            auto slice = random_field(g, u);
            const auto back_full = grid_function_from_json(json::parse(to_json(full).dump()));
            const auto back_slice = grid_function_from_json(json::parse(to_json(slice).dump()));
            const bool ok = bit_identical(full, back_full) && bit_identical(slice, back_slice);
            record("io.round_trip", ok, json{{"bit_identical", ok}}, json{{"bit_identical", true}});
        });
        guarded("io.truncated_rejected", [&] {
            const auto text = to_json(probes::scaled(disc(0.1), 1.0).values()).dump();
            bool rejected = false;
            try {
                grid_function_from_json(json::parse(text.substr(0, text.size() / 2)));
            } catch (const json::parse_error&) {
                rejected = true;
            } catch (const FormatError&) {
                rejected = true;
            }
            record("io.truncated_rejected", rejected, json{{"rejected", rejected}}, json{{"rejected", true}});
        });
    }

    std::size_t passed = 0;
    for (const auto& c : checks) passed += c["pass"].get<bool>() ? 1 : 0;
    return json{{"seed", opt.seed},
                {"checks", checks},
                {"passed", passed},
                {"failed", checks.size() - passed},
                {"all_pass", passed == checks.size()}};
}

}  // namespace mabuchi
