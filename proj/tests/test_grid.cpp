#include "mabuchi/grid.hpp"

#include <gtest/gtest.h>

using namespace mabuchi;

namespace {

GridSpec disc(double h, int nt) {
    GridSpec s;
    s.h_z = h;
    s.n_t = nt;
    return s;
}

}  // namespace

TEST(Grid, CoarseDiscHasThreeTimeLevels) {
    auto g = build_grid(disc(0.5, 3));
    ASSERT_EQ(g->nt(), 3);
    EXPECT_DOUBLE_EQ(g->t_values()[0], 0.0);
    EXPECT_DOUBLE_EQ(g->t_values()[1], 0.5);
    EXPECT_DOUBLE_EQ(g->t_values()[2], 1.0);
    for (std::size_t s = 0; s < g->spatial_count(); ++s)
        if (g->spatial_interior(s)) {
            EXPECT_LT(g->norm_z(s), 1.0);
        }
    EXPECT_GT(g->interior_spatial_count(), 0u);
}

TEST(Grid, NodeCountsAndCapClasses) {
    auto g = build_grid(disc(0.1, 11));
    EXPECT_EQ(g->node_count(), g->spatial_count() * 11);
    std::size_t caps = 0, side = 0, interior = 0;
    for (std::size_t f = 0; f < g->node_count(); ++f) {
        switch (classify_node(*g, f)) {
        case NodeClass::boundary_cap0:
        case NodeClass::boundary_cap1: ++caps; break;
        case NodeClass::boundary_side: ++side; break;
        case NodeClass::interior: ++interior; break;
        }
    }
    EXPECT_EQ(caps, 2 * g->interior_spatial_count());
    EXPECT_EQ(caps + side + interior, g->node_count());
    EXPECT_EQ(interior, 9 * g->interior_spatial_count());
}

TEST(Grid, BallOutsideNodesAreSide) {
    GridSpec s;
    s.dimension = 2;
    s.domain = DomainKind::unit_ball;
    s.h_z = 0.2;
    s.n_t = 5;
    auto g = build_grid(s);
    for (std::size_t f = 0; f < g->node_count(); ++f)
        if (g->norm_z(g->spatial_of(f)) >= 1.0 - 1e-12) {
            EXPECT_EQ(g->node_class(f), NodeClass::boundary_side);
        }
}

TEST(Grid, CornerConventionAndCaps) {
    auto g = build_grid(disc(0.25, 5));
    std::size_t origin = 0, rim = 0;
    for (std::size_t s = 0; s < g->spatial_count(); ++s) {
        if (g->norm_z(s) == 0.0) origin = s;
        const auto z = g->z(s)[0];
        if (std::abs(z.real() - 1.0) < 1e-14 && std::abs(z.imag()) < 1e-14) rim = s;
    }
    EXPECT_EQ(g->node_class(g->full_index(0, origin)), NodeClass::boundary_cap0);
    EXPECT_EQ(g->node_class(g->full_index(4, origin)), NodeClass::boundary_cap1);
    EXPECT_EQ(g->node_class(g->full_index(2, origin)), NodeClass::interior);
    EXPECT_EQ(g->node_class(g->full_index(2, rim)), NodeClass::boundary_side);
    EXPECT_EQ(g->node_class(g->full_index(0, rim)), NodeClass::boundary_side);
    EXPECT_THROW(g->node_class(g->node_count()), UsageError);
}

TEST(Grid, TooCoarseIsConfigError) {
    EXPECT_THROW(build_grid(disc(1.0, 5)), ConfigError);
    EXPECT_THROW(build_grid(disc(0.1, 2)), ConfigError);
    GridSpec bad = disc(0.1, 5);
    bad.dimension = 2;
    EXPECT_THROW(build_grid(bad), ConfigError);
}

TEST(Grid, DeterministicClassificationAndDirections) {
    auto a = build_grid(disc(0.1, 7));
    auto b = build_grid(disc(0.1, 7));
    ASSERT_EQ(a->node_count(), b->node_count());
    for (std::size_t f = 0; f < a->node_count(); ++f) ASSERT_EQ(a->node_class(f), b->node_class(f));
    ASSERT_EQ(a->directions().size(), b->directions().size());
    for (std::size_t k = 0; k < a->directions().size(); ++k)
        for (int c = 0; c < 3; ++c) EXPECT_EQ(a->directions()[k].w[c], b->directions()[k].w[c]);
}

TEST(Grid, DirectionSetContainsZetaAxisAndMixes) {
    for (int n : {1, 2}) {
        GridSpec s;
        s.dimension = n;
        s.domain = n == 1 ? DomainKind::unit_disc : DomainKind::unit_ball;
        s.h_z = 0.25;
        s.n_t = 5;
        auto g = build_grid(s);
        const auto dirs = g->directions();
        EXPECT_EQ(static_cast<int>(dirs.size()), s.directions());
        bool has_zeta = false;
        int mixed = 0;
        for (const auto& d : dirs) {
            if (std::abs(d.w[n] - cplx(1.0, 0.0)) < 1e-15) has_zeta = true;
            int nonzero = 0;
            for (int c = 0; c <= n; ++c) nonzero += std::abs(d.w[c]) > 0 ? 1 : 0;
            if (nonzero > 1) ++mixed;
        }
        EXPECT_TRUE(has_zeta);
        EXPECT_GE(mixed, s.directions() - (n + 1));
    }
}

TEST(Grid, RefinementTriplesInteriorCount) {
    auto coarse = build_grid(disc(0.1, 3));
    auto fine = build_grid(disc(0.05, 3));
    EXPECT_GE(fine->interior_spatial_count(), 3 * coarse->interior_spatial_count());
}

TEST(GridFunction, RestrictSlice) {
    auto g = build_grid(disc(0.2, 5));
    auto f = [](const std::array<cplx, 2>& z) { return std::norm(z[0]) - 0.3 * z[0].real(); };
    auto u = GridFunction::full_from(g, [&](const std::array<cplx, 2>& z, double) { return f(z); });
    for (int j = 0; j < 5; ++j) {
        auto sl = restrict_slice(u, j);
        for (std::size_t s = 0; s < g->spatial_count(); ++s) EXPECT_EQ(sl[s], f(g->z(s)));
    }
    auto tt = GridFunction::full_from(g, [](const std::array<cplx, 2>&, double t) { return t; });
    EXPECT_EQ(restrict_slice(tt, 0).sup_norm(), 0.0);
    EXPECT_THROW(restrict_slice(restrict_slice(tt, 0), 0), UsageError);
    EXPECT_THROW(restrict_slice(tt, 5), UsageError);
}

TEST(GridFunction, RejectsNonFiniteAndWrongSize) {
    auto g = build_grid(disc(0.5, 3));
    std::vector<double> v(g->spatial_count(), 0.0);
    v[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(GridFunction(g, SliceTag::spatial, v), UsageError);
    EXPECT_THROW(GridFunction(g, SliceTag::full, std::vector<double>(3, 0.0)), UsageError);
}
