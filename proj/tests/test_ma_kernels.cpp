#include "mabuchi/ma_kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace mabuchi;

namespace {

using Z = std::array<cplx, 2>;

GridPtr disc(double h) {
    GridSpec s;
    s.h_z = h;
    s.n_t = 3;
    return build_grid(s);
}

GridPtr ball(double h) {
    GridSpec s;
    s.dimension = 2;
    s.domain = DomainKind::unit_ball;
    s.h_z = h;
    s.n_t = 3;
    return build_grid(s);
}

double quad(const Z& z) { return std::norm(z[0]) + std::norm(z[1]) - 1.0; }

GridFunction zero_trace(GridPtr g, auto f) {
    auto u = GridFunction::spatial_from(g, f);
    for (std::size_t s = 0; s < g->spatial_count(); ++s)
        if (!g->spatial_interior(s)) u[s] = 0.0;
    return u;
}

}  // namespace

TEST(ComplexHessian, ExactOnQuadratic) {
    auto g = disc(0.05);
    Potential phi = Potential::from_function(g, quad);
    const auto& hf = complex_hessian(phi);
    for (std::size_t s = 0; s < g->spatial_count(); ++s) {
        if (!g->spatial_interior(s)) continue;
        EXPECT_NEAR(hf.matrix[s](0, 0).real(), 1.0, 1e-9);
    }
    EXPECT_EQ(hf.degenerate_count, 0u);
    EXPECT_TRUE(phi.strictly_psh());
}

TEST(ComplexHessian, ExactOnComplexQuadraticInTwoVariables) {
    auto g = ball(0.2);
    auto f = [](const Z& z) {
        return std::norm(z[0]) + 2.0 * std::norm(z[1]) + 2.0 * std::real(cplx(0.3, 0.4) * z[0] * std::conj(z[1])) +
               std::real(z[0] * z[1]);
    };
    auto u = GridFunction::spatial_from(g, f);
    auto hf = complex_hessian(u);
    for (std::size_t s = 0; s < g->spatial_count(); ++s) {
        if (!g->spatial_interior(s)) continue;
        const auto& m = hf.matrix[s];
        EXPECT_NEAR(m(0, 0).real(), 1.0, 1e-9);
        EXPECT_NEAR(m(1, 1).real(), 2.0, 1e-9);
        EXPECT_NEAR(std::abs(m(0, 1) - cplx(0.3, 0.4)), 0.0, 1e-9);
        EXPECT_EQ(m(1, 0), std::conj(m(0, 1)));
        EXPECT_EQ(m(0, 0).imag(), 0.0);
    }
}

TEST(ComplexHessian, PluriharmonicIsZero) {
    auto g = disc(0.1);
    auto hf = complex_hessian(GridFunction::spatial_from(g, [](const Z& z) { return std::real(z[0] * z[0]); }));
    for (std::size_t s = 0; s < g->spatial_count(); ++s)
        if (g->spatial_interior(s)) {
            EXPECT_NEAR(std::abs(hf.matrix[s](0, 0)), 0.0, 1e-10);
        }
}

TEST(ComplexHessian, QuarticAtHalfRadius) {
    auto g = disc(0.02);
    auto hf = complex_hessian(GridFunction::spatial_from(g, [](const Z& z) { return std::pow(std::norm(z[0]), 2); }));
    int checked = 0;
    for (std::size_t s = 0; s < g->spatial_count(); ++s) {
        if (std::abs(g->norm_z(s) - 0.5) > 1e-12) continue;
        EXPECT_NEAR(hf.matrix[s](0, 0).real(), 1.0, 1e-3);
        ++checked;
    }
    EXPECT_GT(checked, 0);
}

TEST(Potential, RejectsNonzeroTraceAndNonPsh) {
    auto g = disc(0.1);
    EXPECT_THROW(Potential(GridFunction::spatial_from(g, quad)), UsageError);
    EXPECT_THROW(Potential::from_function(g, [](const Z& z) { return 1.0 - std::norm(z[0]); }), PshViolation);
    Potential zero = Potential::from_function(g, [](const Z&) { return 0.0; });
    EXPECT_FALSE(zero.strictly_psh());
    EXPECT_EQ(zero.hessian().degenerate_count, g->interior_spatial_count());
}

TEST(MaDensity, DiscMassIsTwo) {
    auto g = disc(0.02);
    Potential phi = Potential::from_function(g, quad);
    const double mass = integrate(ma_density(phi));
    EXPECT_NEAR(mass, 2.0, 0.04);
}

TEST(MaDensity, BallDensityIsConstant) {
    auto g = ball(0.2);
    Potential phi = Potential::from_function(g, quad);
    auto d = ma_density(phi);
    const double c2 = ma_constant(2);
    EXPECT_NEAR(c2, 8.0 / (std::numbers::pi * std::numbers::pi), 1e-15);
    for (std::size_t s = 0; s < g->spatial_count(); ++s)
        if (g->spatial_interior(s)) {
            EXPECT_NEAR(d[s], c2, 1e-9);
        }
}

TEST(MaDensity, PluriharmonicDensityVanishesAndViolationsReported) {
    auto g = disc(0.1);
    Potential zero = Potential::from_function(g, [](const Z&) { return 0.0; });
    EXPECT_EQ(ma_density(zero).sup_norm(), 0.0);
    Potential bad = Potential::from_slice(zero_trace(g, [](const Z& z) { return 1.0 - std::norm(z[0]); }), PshCheck::lenient);
    auto rep = ma_density_report(bad);
    EXPECT_EQ(rep.violations, g->interior_spatial_count());
    EXPECT_THROW(ma_density(bad), PshViolation);
    auto clamped = clamped_ma_density(bad);
    EXPECT_EQ(clamped.density.sup_norm(), 0.0);
    EXPECT_EQ(clamped.violations, g->interior_spatial_count());
}

TEST(InnerProduct, RadialOracleAndSymmetry) {
    auto g = disc(0.02);
    Potential phi = Potential::from_function(g, quad);
    auto psi = zero_trace(g, [](const Z& z) { return 1.0 - std::norm(z[0]); });
    auto theta = zero_trace(g, [](const Z& z) { return (1.0 - std::norm(z[0])) * z[0].real(); });
    EXPECT_NEAR(inner_product(psi, psi, phi), 2.0 / 3.0, 2.0 / 3.0 * 0.02);
    EXPECT_EQ(inner_product(psi, theta, phi), inner_product(theta, psi, phi));
    EXPECT_EQ(inner_product(psi, GridFunction(g, SliceTag::spatial), phi), 0.0);
}

TEST(Gradient, OracleAndScaling) {
    auto g = disc(0.02);
    Potential phi = Potential::from_function(g, quad);
    auto psi = zero_trace(g, [](const Z& z) { return 1.0 - std::norm(z[0]); });
    auto gn = gradient_norm_sq(psi, phi);
    for (std::size_t s = 0; s < g->spatial_count(); ++s) {
        if (!g->spatial_interior(s)) continue;
        EXPECT_NEAR(gn[s], std::norm(g->z(s)[0]), 1e-9);
    }
    EXPECT_EQ(gradient_norm_sq(GridFunction(g, SliceTag::spatial), phi).sup_norm(), 0.0);
    auto scaled = gradient_norm_sq(3.0 * psi, phi);
    for (std::size_t s = 0; s < g->spatial_count(); ++s) EXPECT_NEAR(scaled[s], 9.0 * gn[s], 1e-12 * (1 + gn[s]));
}

TEST(PoissonBracket, AlgebraicIdentities) {
    auto g = disc(0.05);
    Potential phi = Potential::from_function(g, [](const Z& z) { return std::norm(z[0]) - 1.0 + 0.1 * (std::pow(std::norm(z[0]), 2) - 1.0); });
    auto psi = zero_trace(g, [](const Z& z) { return (1.0 - std::norm(z[0])) * z[0].real(); });
    auto theta = zero_trace(g, [](const Z& z) { return (1.0 - std::norm(z[0])) * z[0].imag() * z[0].real(); });
    auto eta = zero_trace(g, [](const Z& z) { return (1.0 - std::norm(z[0])) * std::exp(z[0].imag()); });
    EXPECT_EQ(poisson_bracket(psi, psi, phi).sup_norm(), 0.0);
    auto a = poisson_bracket(psi, theta, phi);
    auto b = poisson_bracket(theta, psi, phi);
    for (std::size_t s = 0; s < g->spatial_count(); ++s) EXPECT_EQ(a[s], -b[s]);
    auto lin = poisson_bracket(psi, theta + eta, phi) - (a + poisson_bracket(psi, eta, phi));
    EXPECT_LT(lin.sup_norm(), 1e-12);
}

TEST(PoissonBracket, RadialPairVanishesAndAnalyticValue) {
    auto g = disc(0.02);
    Potential phi = Potential::from_function(g, quad);
    auto r1 = zero_trace(g, [](const Z& z) { return 1.0 - std::norm(z[0]); });
    auto r2 = zero_trace(g, [](const Z& z) { return 1.0 - std::pow(std::norm(z[0]), 2); });
    EXPECT_LT(poisson_bracket(r1, r2, phi).sup_norm(), 1e-2);
    // {x, y} with M = 1: -2 Im(conj(1/2) * (-i/2)) = 1/2
    auto x = GridFunction::spatial_from(g, [](const Z& z) { return z[0].real(); });
    auto y = GridFunction::spatial_from(g, [](const Z& z) { return z[0].imag(); });
    auto b = poisson_bracket(x, y, phi);
    for (std::size_t s = 0; s < g->spatial_count(); ++s)
        if (g->spatial_interior(s)) {
            EXPECT_NEAR(b[s], 0.5, 1e-12);
        }
}

TEST(PoissonBracket, AdjointnessImprovesUnderRefinement) {
    auto defect = [](double h) {
        auto g = disc(h);
        Potential phi = Potential::from_function(g, quad);
        auto bump = [](const Z& z, auto f) {
            const double r2 = std::norm(z[0]);
            return r2 < 0.64 ? std::pow(0.64 - r2, 3) * f(z[0]) : 0.0;
        };
        auto psi = GridFunction::spatial_from(g, [&](const Z& z) { return bump(z, [](cplx w) { return w.real(); }); });
        auto theta = GridFunction::spatial_from(g, [&](const Z& z) { return bump(z, [](cplx w) { return w.imag() + w.real() * w.real(); }); });
        auto eta = GridFunction::spatial_from(g, [&](const Z& z) { return bump(z, [](cplx w) { return 1.0 + w.imag(); }); });
        return std::abs(inner_product(poisson_bracket(psi, theta, phi), eta, phi) -
                        inner_product(psi, poisson_bracket(theta, eta, phi), phi));
    };
    const double coarse = defect(0.1), fine = defect(0.05);
    EXPECT_LT(fine, coarse);
    EXPECT_LT(fine, 1e-3);
}

namespace {

PathFamily polynomial_family(GridPtr g, double step, int params) {
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

}  // namespace

TEST(CovariantDerivative, ConstantPathGivesTimeDerivative) {
    auto g = disc(0.1);
    auto fam = PathFamily::sample(
        g, 1, {5, 1, 1}, {0.1, 0, 0}, [](const Z& z, const std::array<double, 3>&) { return quad(z); },
        [](const Z& z, const std::array<double, 3>& p) { return (1.0 - std::norm(z[0])) * p[0] * p[0]; });
    auto d = covariant_derivative(fam);
    ASSERT_EQ(d.size(), 3u);
    for (int k = 0; k < 3; ++k) {
        const double t = (k + 1) * 0.1;
        for (std::size_t s = 0; s < g->spatial_count(); ++s)
            if (g->spatial_interior(s)) {
                EXPECT_NEAR(d[k][s], 2.0 * t * (1.0 - std::norm(g->z(s)[0])), 1e-12);
            }
    }
}

TEST(CovariantDerivative, MetricCompatibilityConverges) {
    auto defect = [](double h, double dt) {
        auto g = disc(h);
        auto phi = [](const Z& z, const std::array<double, 3>& p) {
            const double r2 = std::norm(z[0]);
            return (r2 - 1.0) * (1.0 + 0.4 * p[0] * z[0].real() + 0.2 * p[0] * p[0]);
        };
        auto psi1 = [](const Z& z, const std::array<double, 3>& p) {
            return (1.0 - std::norm(z[0])) * (1.0 + p[0] * z[0].imag());
        };
        auto psi2 = [](const Z& z, const std::array<double, 3>& p) {
            return (1.0 - std::norm(z[0])) * (z[0].real() + p[0] * p[0]);
        };
        auto f1 = PathFamily::sample(g, 1, {3, 1, 1}, {dt, 0, 0}, phi, psi1);
        auto f2 = PathFamily::sample(g, 1, {3, 1, 1}, {dt, 0, 0}, phi, psi2);
        const double ddt = (inner_product(f1.psi({2, 0, 0}), f2.psi({2, 0, 0}), f1.phi({2, 0, 0})) -
                            inner_product(f1.psi({0, 0, 0}), f2.psi({0, 0, 0}), f1.phi({0, 0, 0}))) /
                           (2 * dt);
        const auto& c = f1.phi({1, 0, 0});
        const auto d1 = covariant_derivative(f1)[0];
        const auto d2 = covariant_derivative(f2)[0];
        return std::abs(ddt - inner_product(d1, f2.psi({1, 0, 0}), c) - inner_product(f1.psi({1, 0, 0}), d2, c));
    };
    const double coarse = defect(0.1, 0.1), fine = defect(0.05, 0.05);
    EXPECT_LT(fine, 0.6 * coarse);
    EXPECT_LT(fine, 0.02);
}

TEST(Curvature, ZeroFieldAndRadialVariations) {
    auto g = disc(0.05);
    auto fam0 = PathFamily::sample(
        g, 2, {3, 3, 1}, {0.1, 0.1, 0},
        [](const Z& z, const std::array<double, 3>& p) { return (std::norm(z[0]) - 1.0) * (1.0 + 0.2 * p[0] + 0.1 * p[1] * std::norm(z[0])); },
        [](const Z&, const std::array<double, 3>&) { return 0.0; });
    EXPECT_EQ(curvature_tensor(fam0).sup_norm(), 0.0);
    auto fam = PathFamily::sample(
        g, 2, {3, 3, 1}, {0.1, 0.1, 0},
        [](const Z& z, const std::array<double, 3>& p) { return (std::norm(z[0]) - 1.0) * (1.0 + 0.2 * p[0] + 0.1 * p[1] * std::norm(z[0])); },
        [](const Z& z, const std::array<double, 3>&) { return (1.0 - std::norm(z[0])) * z[0].real(); });
    EXPECT_LT(curvature_tensor(fam).sup_norm(), 1e-2);
}

TEST(Curvature, BracketMatchesCommutatorUnderRefinement) {
    auto gap = [](double h, double step) {
        auto g = disc(h);
        auto fam = polynomial_family(g, step, 2);
        auto b = curvature_tensor(fam, CurvatureMode::bracket);
        auto c = curvature_tensor(fam, CurvatureMode::commutator);
        return interior_sup(b - c, fam.phi(fam.center()).hessian(), 0.8);
    };
    const double coarse = gap(0.1, 0.1), fine = gap(0.05, 0.05);
    EXPECT_LT(fine, 0.6 * coarse);
}

TEST(SectionalCurvature, SignAndDegenerateCases) {
    auto g = disc(0.05);
    Potential phi = Potential::from_function(g, quad);
    auto r1 = zero_trace(g, [](const Z& z) { return 1.0 - std::norm(z[0]); });
    auto r2 = zero_trace(g, [](const Z& z) { return 1.0 - std::pow(std::norm(z[0]), 2); });
    auto a = zero_trace(g, [](const Z& z) { return (1.0 - std::norm(z[0])) * z[0].real(); });
    EXPECT_EQ(sectional_curvature(phi, a, a), 0.0);
    EXPECT_NEAR(sectional_curvature(phi, r1, r2), 0.0, 1e-4);
    EXPECT_LT(sectional_curvature(phi, r1, a), 0.0);
}

TEST(LocalSymmetry, ConstantFamilyAndRefinement) {
    auto g = disc(0.1);
    auto cst = PathFamily::sample(
        g, 3, {3, 3, 3}, {0.1, 0.1, 0.1}, [](const Z& z, const std::array<double, 3>&) { return quad(z); },
        [](const Z& z, const std::array<double, 3>&) { return (1.0 - std::norm(z[0])) * z[0].real(); });
    EXPECT_EQ(local_symmetry_residual(cst), 0.0);
    auto res = [](double h, double step) { return local_symmetry_residual(polynomial_family(disc(h), step, 3), 0.8); };
    const double coarse = res(0.1, 0.1), fine = res(0.05, 0.05);
    EXPECT_LT(fine, 0.5 * coarse);
}
