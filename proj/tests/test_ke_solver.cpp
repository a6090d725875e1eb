#include "mabuchi/ke_solver.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mabuchi;

namespace {

using Z = std::array<cplx, 2>;

GridPtr disc(double h) {
    GridSpec s;
    s.h_z = h;
    s.n_t = 3;
    return build_grid(s);
}

double max_interior_error(const GridFunction& u, const std::function<double(double)>& radial) {
    const Grid& g = u.grid();
    double e = 0.0;
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (g.spatial_interior(s)) e = std::max(e, std::abs(u[s] - radial(std::norm(g.z(s)[0]))));
    return e;
}

}  // namespace

TEST(DirichletPoisson, ReproducesQuadratic) {
    const auto g = disc(0.03);
    const auto f = GridFunction::spatial_from(g, [](const Z&) { return 2.0 / std::numbers::pi; });
    const auto phi = dirichlet_poisson(f);
    EXPECT_LT(max_interior_error(phi, [](double r2) { return r2 - 1.0; }), 1e-11);
}

TEST(DirichletPoisson, RejectsNegativeDensityAndOtherDomains) {
    const auto g = disc(0.1);
    const auto f = GridFunction::spatial_from(g, [](const Z&) { return -1.0; });
    EXPECT_THROW(dirichlet_poisson(f), UsageError);
    GridSpec s;
    s.dimension = 2;
    s.domain = DomainKind::unit_ball;
    s.h_z = 0.25;
    s.n_t = 3;
    EXPECT_THROW(DiscLaplacian(build_grid(s)), ConfigError);
}

TEST(SolveMaT, SmallTLimit) {
    std::vector<double> errs;
    for (double h : {0.04, 0.02}) {
        const auto r = solve_ma_t(disc(h), 1e-8);
        EXPECT_TRUE(r.converged);
        errs.push_back(max_interior_error(r.phi, [](double r2) { return 0.5 * (r2 - 1.0); }));
    }
    EXPECT_LT(errs[1], 0.005);
    EXPECT_LT(errs[1], errs[0]);
}

TEST(SolveMaT, ConvergesAtTOne) {
    const DiscLaplacian lap(disc(0.02));
    const auto r = solve_ma_t(lap, 1.0);
    ASSERT_TRUE(r.converged);
    EXPECT_LE(r.residual, 1e-6);
    EXPECT_LE(r.iterations, 200);
    EXPECT_NEAR(r.mass, 1.0, 1e-9);
    EXPECT_LT(r.symmetry_defect, 1e-10);
    EXPECT_EQ(r.trace.size(), static_cast<std::size_t>(r.iterations) + 1);
    EXPECT_NEAR(ke_residual(lap, r.phi, 1.0), r.residual, 1e-15);
    for (std::size_t s = 0; s < r.phi.size(); ++s) EXPECT_LE(r.phi[s], 0.0);
}

TEST(SolveMaT, SolutionMaximizesDing) {
    const auto g = disc(0.02);
    const DiscLaplacian lap(g);
    const auto r = solve_ma_t(lap, 1.0);
    std::vector<GridFunction> family;
    for (double c : {0.25, 0.5, 0.75, 1.0, 2.0})
        family.push_back(Potential::from_function(g, [c](const Z& z) { return c * (std::norm(z[0]) - 1.0); }).values());
    family.push_back((1.0 + 1e-2) * r.phi);
    const auto m = maximizer_check(r.phi, family, 1.0);
    EXPECT_TRUE(m.pass);
    EXPECT_EQ(m.margins.size(), family.size());

    const auto bump = Potential::from_function(
        g, [](const Z& z) { return (std::norm(z[0]) - 1.0) * std::norm(z[0]); }, PshCheck::lenient);
    const GeodesicPath path({r.phi, r.phi + 1e-3 * bump.values(), r.phi + 2e-3 * bump.values()});
    EXPECT_LT(std::abs(ding_derivative_check(path, 1.0).formula), 1e-3);
}

TEST(SolveMaT, DetectsDivergenceAndValidates) {
    const DiscLaplacian lap(disc(0.04));
    const auto r = solve_ma_t(lap, 4.2);
    EXPECT_FALSE(r.converged);
    EXPECT_TRUE(r.diverged);
    EXPECT_THROW(solve_ma_t(lap, 0.0), UsageError);
    KEConfig bad;
    bad.damping = 0.0;
    EXPECT_THROW(solve_ma_t(lap, 1.0, bad), ConfigError);
}

TEST(ThresholdScan, RecordsOnset) {
    const DiscLaplacian lap(disc(0.04));
    const auto rep = threshold_scan(lap, {0.5, 1.0, 2.0, 4.2, 6.0});
    ASSERT_EQ(rep.entries.size(), 5u);
    EXPECT_TRUE(rep.entries[0].converged);
    EXPECT_TRUE(rep.entries[2].converged);
    ASSERT_TRUE(rep.empirical_onset.has_value());
    EXPECT_DOUBLE_EQ(*rep.empirical_onset, 4.2);
    EXPECT_DOUBLE_EQ(rep.analytic_threshold, 16.0);
    EXPECT_THROW(threshold_scan(lap, {2.0, 1.0}), UsageError);
}
