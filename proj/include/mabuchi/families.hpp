#pragma once

// Named analytic endpoint families:
//   scaled_quadratic      c (|z|^2 - 1)
//   quartic_blend         a (|z|^2 - 1) + b (|z|^4 - 1)
//   angular_perturbation  (|z|^2 - 1)(1 + eps Re(z_1^k))
// All vanish on the unit sphere. Plurisubharmonicity is validated when a
// member is sampled onto a grid.

#include "mabuchi/errors.hpp"
#include "mabuchi/grid.hpp"
#include "mabuchi/ma_kernels.hpp"

#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <string>

namespace mabuchi {

enum class FamilyKind { scaled_quadratic, quartic_blend, angular_perturbation };

struct FamilySpec {
    FamilyKind kind = FamilyKind::scaled_quadratic;
    double c = 1.0;
    double a = 1.0;
    double b = 0.0;
    double eps = 0.1;
    int k = 2;
};

inline std::string to_string(FamilyKind k) {
    switch (k) {
        case FamilyKind::scaled_quadratic: return "scaled_quadratic";
        case FamilyKind::quartic_blend: return "quartic_blend";
        case FamilyKind::angular_perturbation: return "angular_perturbation";
    }
    return "unknown";
}

inline FamilyKind family_from_string(const std::string& s) {
    if (s == "scaled_quadratic") return FamilyKind::scaled_quadratic;
    if (s == "quartic_blend") return FamilyKind::quartic_blend;
    if (s == "angular_perturbation") return FamilyKind::angular_perturbation;
    throw ConfigError("unknown endpoint family '" + s + "'");
}

inline std::function<double(const std::array<cplx, 2>&)> family_function(const FamilySpec& f) {
    switch (f.kind) {
        case FamilyKind::scaled_quadratic:
            return [c = f.c](const std::array<cplx, 2>& z) { return c * (std::norm(z[0]) + std::norm(z[1]) - 1.0); };
        case FamilyKind::quartic_blend:
            return [a = f.a, b = f.b](const std::array<cplx, 2>& z) {
                const double r2 = std::norm(z[0]) + std::norm(z[1]);
                return a * (r2 - 1.0) + b * (r2 * r2 - 1.0);
            };
        case FamilyKind::angular_perturbation:
            return [eps = f.eps, k = f.k](const std::array<cplx, 2>& z) {
                const double r2 = std::norm(z[0]) + std::norm(z[1]);
                return (r2 - 1.0) * (1.0 + eps * std::pow(z[0], k).real());
            };
    }
    throw UsageError("unhandled family kind");
}

/// Radial profile g(s) = phi(e^s) for radial members, used by the toric oracle.
inline std::optional<std::function<double(double)>> radial_profile(const FamilySpec& f) {
    switch (f.kind) {
        case FamilyKind::scaled_quadratic:
            return [c = f.c](double s) { return c * (std::exp(2 * s) - 1.0); };
        case FamilyKind::quartic_blend:
            return [a = f.a, b = f.b](double s) { return a * (std::exp(2 * s) - 1.0) + b * (std::exp(4 * s) - 1.0); };
        case FamilyKind::angular_perturbation:
            return f.eps == 0.0 ? std::optional<std::function<double(double)>>(
                                      [](double s) { return std::exp(2 * s) - 1.0; })
                                : std::nullopt;
    }
    return std::nullopt;
}

inline Potential family_potential(GridPtr grid, const FamilySpec& f) {
    if (f.kind == FamilyKind::angular_perturbation && f.k < 1) throw ConfigError("angular_perturbation needs k >= 1");
    try {
        return Potential::from_function(std::move(grid), family_function(f), PshCheck::strict);
    } catch (const PshViolation& e) {
        throw ConfigError("endpoint " + to_string(f.kind) + " is not plurisubharmonic on this grid (" + e.what() + ")");
    }
}

}  // namespace mabuchi
