#pragma once

#include "mabuchi/geodesic.hpp"
#include "mabuchi/ma_kernels.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace mabuchi {

/// E(phi) = (1/(n+1)) int phi (dd^c phi)^n with the raw (unclamped) density.
inline double energy(const Potential& phi) {
    const auto dens = ma_density_report(phi).density;
    GridFunction prod(phi.grid_ptr(), SliceTag::spatial);
    for (std::size_t s = 0; s < prod.size(); ++s) prod[s] = phi.values()[s] * dens[s];
    return integrate(prod) / (phi.grid().n() + 1);
}

inline double energy(const GridFunction& slice) { return energy(Potential::from_slice(slice, PshCheck::lenient)); }

/// log of the mu-average of exp(-t phi), mu = Lebesgue normalized to mass 1.
/// Nodes are weighted by the fraction of their cell inside Omega; nodes outside
/// the open domain carry the boundary value 0. The exponent is shifted by its
/// maximum unless a shift is given.
inline double log_mean_exp(const GridFunction& phi, double t, std::optional<double> shift = std::nullopt) {
    const Grid& g = phi.grid();
    const auto w = cell_fractions(g);
    auto value = [&](std::size_t s) { return g.spatial_interior(s) ? phi[s] : 0.0; };
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (w[s] > 0.0) m = std::max(m, -t * value(s));
    const double c = shift.value_or(m);
    double sum = 0.0, mass = 0.0;
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (w[s] > 0.0) {
            sum += w[s] * std::exp(-t * value(s) - c);
            mass += w[s];
        }
    return c + std::log(sum / mass);
}

/// F_t(phi) = E(phi) + (1/t) log int e^{-t phi} d mu.
inline double ding(const Potential& phi, double t, std::optional<double> shift = std::nullopt) {
    if (!(t > 0.0)) throw UsageError("ding requires t > 0");
    return energy(phi) + log_mean_exp(phi.values(), t, shift) / t;
}

inline double ding(const GridFunction& slice, double t, std::optional<double> shift = std::nullopt) {
    return ding(Potential::from_slice(slice, PshCheck::lenient), t, shift);
}

struct EnergyReport {
    std::vector<double> s;
    std::vector<double> energy;
    double chord_deviation = 0.0;
    std::optional<double> t;
    std::vector<double> ding;
    double concavity_defect = 0.0;  // max(0, max_s F(s+d) + F(s-d) - 2F(s))
};

inline EnergyReport energy_along(const GeodesicPath& path) {
    EnergyReport rep;
    for (std::size_t j = 0; j < path.size(); ++j) {
        rep.s.push_back(path.t(j));
        rep.energy.push_back(energy(path.slice(j)));
    }
    const double e0 = rep.energy.front(), e1 = rep.energy.back();
    for (std::size_t j = 0; j < path.size(); ++j)
        rep.chord_deviation =
            std::max(rep.chord_deviation, std::abs(rep.energy[j] - ((1 - rep.s[j]) * e0 + rep.s[j] * e1)));
    return rep;
}

inline EnergyReport ding_along(const GeodesicPath& path, double t) {
    auto rep = energy_along(path);
    rep.t = t;
    for (std::size_t j = 0; j < path.size(); ++j)
        rep.ding.push_back(rep.energy[j] + log_mean_exp(path.slice(j), t) / t);
    for (std::size_t j = 1; j + 1 < path.size(); ++j)
        rep.concavity_defect = std::max(rep.concavity_defect, rep.ding[j + 1] + rep.ding[j - 1] - 2 * rep.ding[j]);
    return rep;
}

struct DerivativeCheck {
    double finite_difference = 0.0;  // (F(ds) - F(0)) / ds
    double formula = 0.0;            // int phi' [(dd^c phi)^n - e^{-t phi} mu / int e^{-t phi} mu]
    double difference = 0.0;
};

/// First variation of F_t at s = 0 along the path, by the integral formula
/// and by a forward difference.
inline DerivativeCheck ding_derivative_check(const GeodesicPath& path, double t) {
    const Grid& g = path.grid();
    const Potential phi = Potential::from_slice(path.slice(0), PshCheck::lenient);
    const auto dens = ma_density_report(phi).density;
    const auto vel = path.velocity(0);
    const double lme = log_mean_exp(phi.values(), t);
    const double vol = domain_volume(g);
    GridFunction integrand(path.grid_ptr(), SliceTag::spatial);
    for (std::size_t s = 0; s < g.spatial_count(); ++s) {
        if (!g.spatial_interior(s)) continue;
        const double gibbs = std::exp(-t * phi.values()[s] - lme) / vol;
        integrand[s] = vel[s] * (dens[s] - gibbs);
    }
    DerivativeCheck c;
    c.formula = integrate(integrand);
    c.finite_difference = (ding(path.slice(1), t) - ding(phi, t)) / path.dt();
    c.difference = std::abs(c.finite_difference - c.formula);
    return c;
}

struct CoercivityReport {
    std::vector<double> margins;  // eps E(psi) + M - F_t(psi)
    std::vector<double> ding_values;
    std::vector<double> energy_values;
    double least_feasible_m = -std::numeric_limits<double>::infinity();
    bool pass = true;
};

/// Checks F_t(psi) <= eps E(psi) + M over a family of test potentials.
inline CoercivityReport coercivity_probe(const std::vector<Potential>& family, double t, double eps, double m) {
    if (family.empty()) throw UsageError("coercivity_probe needs a nonempty family");
    if (eps < 0.0 || m < 0.0) throw UsageError("eps and M must be nonnegative");
    CoercivityReport rep;
    for (const auto& psi : family) {
        const double e = energy(psi);
        const double f = ding(psi, t);
        rep.energy_values.push_back(e);
        rep.ding_values.push_back(f);
        rep.margins.push_back(eps * e + m - f);
        rep.least_feasible_m = std::max(rep.least_feasible_m, f - eps * e);
        if (rep.margins.back() < 0.0) rep.pass = false;
    }
    return rep;
}

}  // namespace mabuchi
