#include "mabuchi/functionals.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mabuchi;

namespace {

using Z = std::array<cplx, 2>;

GridPtr disc(double h, int nt = 3) {
    GridSpec s;
    s.h_z = h;
    s.n_t = nt;
    return build_grid(s);
}

Potential scaled(GridPtr g, double c) {
    return Potential::from_function(g, [c](const Z& z) { return c * (std::norm(z[0]) - 1.0); });
}

GeodesicPath linear_path(const GridFunction& a, const GridFunction& b, int slices) {
    std::vector<GridFunction> out;
    for (int j = 0; j < slices; ++j) {
        const double t = static_cast<double>(j) / (slices - 1);
        out.push_back((1 - t) * a + t * b);
    }
    return GeodesicPath(std::move(out));
}

}  // namespace

TEST(Energy, ZeroAndQuadratic) {
    const auto g = disc(0.02);
    EXPECT_EQ(energy(scaled(g, 0.0)), 0.0);
    EXPECT_NEAR(energy(scaled(g, 1.0)), -0.5, 0.01);
    EXPECT_NEAR(energy(scaled(g, 2.0)), 4 * energy(scaled(g, 1.0)), 1e-9);
}

TEST(Energy, ConvergesUnderRefinement) {
    const double e1 = std::abs(energy(scaled(disc(0.08), 1.0)) + 0.5);
    const double e2 = std::abs(energy(scaled(disc(0.04), 1.0)) + 0.5);
    EXPECT_LT(e2, e1);
}

TEST(Ding, ReferenceValues) {
    const auto g = disc(0.02);
    EXPECT_NEAR(ding(scaled(g, 0.0), 1.0), 0.0, 1e-14);
    EXPECT_NEAR(ding(scaled(g, 0.0), 3.0), 0.0, 1e-14);
    const double exact = -0.5 + std::log(std::exp(1.0) - 1.0);
    EXPECT_NEAR(ding(scaled(g, 1.0), 1.0), exact, 0.02 * std::abs(exact));
    EXPECT_THROW(ding(scaled(g, 1.0), 0.0), UsageError);
}

TEST(Ding, DominatesEnergyForNonpositivePotentials) {
    const auto g = disc(0.04);
    for (double c : {0.3, 1.0, 2.5})
        for (double t : {0.5, 1.0, 4.0}) EXPECT_GE(ding(scaled(g, c), t), energy(scaled(g, c)));
}

TEST(Ding, ShiftInvariance) {
    const auto g = disc(0.04);
    const auto p = scaled(g, 30.0);
    const double ref = ding(p, 2.0);
    EXPECT_TRUE(std::isfinite(ref));
    EXPECT_NEAR(ding(p, 2.0, 0.0), ref, 1e-9 * std::abs(ref));
    EXPECT_NEAR(ding(p, 2.0, 10.0), ref, 1e-9 * std::abs(ref));
}

TEST(LogMeanExp, ConstantsAndMonotonicity) {
    const auto g = disc(0.05);
    EXPECT_NEAR(log_mean_exp(scaled(g, 0.0).values(), 1.0), 0.0, 1e-15);
    EXPECT_LT(log_mean_exp(scaled(g, 1.0).values(), 1.0), log_mean_exp(scaled(g, 2.0).values(), 1.0));
}

TEST(CellFractions, SumToDiscArea) {
    const auto g = disc(0.05);
    const auto w = cell_fractions(*g);
    double area = 0.0;
    for (double x : w) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
        area += x;
    }
    EXPECT_NEAR(area * 0.05 * 0.05, std::numbers::pi, 2e-3);
}

TEST(EnergyAlong, ConstantAndLinearPaths) {
    const auto g = disc(0.04);
    const auto a = scaled(g, 1.0), b = scaled(g, 2.0);
    const auto flat = energy_along(linear_path(a.values(), a.values(), 5));
    EXPECT_LT(flat.chord_deviation, 1e-14);
    ASSERT_EQ(flat.s.size(), 5u);
    const auto lin = energy_along(linear_path(a.values(), b.values(), 5));
    // E((1+s)q) = (1+s)^2 E(q) deviates from its chord by s(1-s)|E(q)|.
    EXPECT_NEAR(lin.chord_deviation, 0.25 * std::abs(energy(a)), 1e-9);

    const auto d = ding_along(linear_path(a.values(), a.values(), 5), 1.0);
    EXPECT_LT(d.concavity_defect, 1e-14);
    ASSERT_TRUE(d.t.has_value());
    for (double v : d.ding) EXPECT_NEAR(v, ding(a, 1.0), 1e-14);
}

TEST(DingDerivative, MatchesFiniteDifference) {
    const auto g = disc(0.02);
    const auto base = scaled(g, 3.0).values();
    const auto bump = Potential::from_function(
        g, [](const Z& z) { return (std::norm(z[0]) - 1.0) * (1.0 + z[0].real()); }, PshCheck::lenient);
    const double ds = 1e-4;
    const GeodesicPath path({base, base + ds * bump.values(), base + (2 * ds) * bump.values()});
    const auto c = ding_derivative_check(path, 1.0);
    // The path parameter runs over [0, 1] in two steps, so d/ds picks up a factor 2 ds.
    EXPECT_GT(std::abs(c.formula) / (2 * ds), 1.0);
    EXPECT_LT(c.difference, 1e-2 * std::abs(c.formula));

    const auto flat = ding_derivative_check(linear_path(base, base, 3), 1.0);
    EXPECT_NEAR(flat.formula, 0.0, 1e-15);
    EXPECT_EQ(flat.finite_difference, 0.0);
}

TEST(Coercivity, ScaledFamily) {
    const auto g = disc(0.04);
    std::vector<Potential> fam;
    fam.push_back(scaled(g, 0.0));
    const auto zero = coercivity_probe(fam, 1.0, 0.1, 0.0);
    EXPECT_TRUE(zero.pass);
    EXPECT_NEAR(zero.least_feasible_m, 0.0, 1e-14);

    for (double c : {0.5, 1.0, 2.0, 4.0, 8.0}) fam.push_back(scaled(g, c));
    const auto rep = coercivity_probe(fam, 1.0, 0.1, 1.0);
    EXPECT_TRUE(rep.pass);
    EXPECT_EQ(rep.margins.size(), fam.size());
    const auto tight = coercivity_probe(fam, 1.0, 0.1, rep.least_feasible_m - 1e-3);
    EXPECT_FALSE(tight.pass);
    EXPECT_THROW(coercivity_probe({}, 1.0, 0.1, 1.0), UsageError);
    EXPECT_THROW(coercivity_probe(fam, 1.0, -0.1, 1.0), UsageError);
}
