#pragma once

#include "mabuchi/grid.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mabuchi::detail {

inline constexpr int max_fd_dims = Grid::max_real_dims + 1;
using FdIndex = std::array<int, max_fd_dims>;

/// Finite differences on a Cartesian lattice with a validity mask. Centered
/// stencils are used where both neighbours are valid, otherwise second-order
/// one-sided stencils toward the valid side.
class FdView {
public:
    FdView(std::span<const double> u, std::span<const std::uint8_t> valid, int dims,
           FdIndex extent, std::array<std::size_t, max_fd_dims> stride,
           std::array<double, max_fd_dims> spacing)
        : u_(u), valid_(valid), dims_(dims), extent_(extent), stride_(stride), spacing_(spacing) {}

    int dims() const { return dims_; }
    double spacing(int d) const { return spacing_[d]; }

    bool in_range(const FdIndex& idx) const {
        for (int d = 0; d < dims_; ++d)
            if (idx[d] < 0 || idx[d] >= extent_[d]) return false;
        return true;
    }
    std::size_t offset(const FdIndex& idx) const {
        std::size_t o = 0;
        for (int d = 0; d < dims_; ++d) o += static_cast<std::size_t>(idx[d]) * stride_[d];
        return o;
    }
    bool ok(const FdIndex& idx) const { return in_range(idx) && valid_[offset(idx)] != 0; }
    double at(const FdIndex& idx) const { return u_[offset(idx)]; }

    static FdIndex shifted(FdIndex idx, const FdIndex& v, int k) {
        for (int d = 0; d < max_fd_dims; ++d) idx[d] += k * v[d];
        return idx;
    }

    /// Physical first derivative along axis d.
    double d1(const FdIndex& idx, int d) const {
        FdIndex v{};
        v[d] = 1;
        const double h = spacing_[d];
        const auto p1 = shifted(idx, v, 1), m1 = shifted(idx, v, -1);
        const bool okp = ok(p1), okm = ok(m1);
        if (okp && okm) return (at(p1) - at(m1)) / (2.0 * h);
        const int s = okp ? 1 : -1;
        const auto a1 = shifted(idx, v, s), a2 = shifted(idx, v, 2 * s);
        if (ok(a1) && ok(a2)) return s * (-3.0 * at(idx) + 4.0 * at(a1) - at(a2)) / (2.0 * h);
        if (ok(a1)) return s * (at(a1) - at(idx)) / h;
        return 0.0;
    }

    /// Second difference along the lattice vector v, approximating v^T D^2u v
    /// in physical units (v scaled by the per-axis spacing). Empty when no
    /// valid stencil exists along v.
    std::optional<double> try_d2(const FdIndex& idx, const FdIndex& v) const {
        const auto p1 = shifted(idx, v, 1), m1 = shifted(idx, v, -1);
        const bool okp = ok(p1), okm = ok(m1);
        if (okp && okm) return at(p1) - 2.0 * at(idx) + at(m1);
        for (int s : {1, -1}) {
            const auto a1 = shifted(idx, v, s), a2 = shifted(idx, v, 2 * s), a3 = shifted(idx, v, 3 * s);
            if (ok(a1) && ok(a2) && ok(a3))
                return 2.0 * at(idx) - 5.0 * at(a1) + 4.0 * at(a2) - at(a3);
        }
        for (int s : {1, -1}) {
            const auto a1 = shifted(idx, v, s), a2 = shifted(idx, v, 2 * s);
            if (ok(a1) && ok(a2)) return at(idx) - 2.0 * at(a1) + at(a2);
        }
        return std::nullopt;
    }

    double d2(const FdIndex& idx, const FdIndex& v) const { return try_d2(idx, v).value_or(0.0); }

    /// Physical second partial derivative d^2u / dx_a dx_b. Mixed partials use
    /// both diagonals when available, otherwise one diagonal and the two axes.
    double d2_partial(const FdIndex& idx, int a, int b) const {
        FdIndex ea{}, eb{};
        ea[a] = 1;
        eb[b] = 1;
        if (a == b) return d2(idx, ea) / (spacing_[a] * spacing_[a]);
        FdIndex vp = ea, vm = ea;
        vp[b] = 1;
        vm[b] = -1;
        const auto dp = try_d2(idx, vp), dm = try_d2(idx, vm);
        const double hab = spacing_[a] * spacing_[b];
        if (dp && dm) return (*dp - *dm) / (4.0 * hab);
        const double axes = d2(idx, ea) + d2(idx, eb);
        if (dp) return (*dp - axes) / (2.0 * hab);
        if (dm) return (axes - *dm) / (2.0 * hab);
        return 0.0;
    }

private:
    std::span<const double> u_;
    std::span<const std::uint8_t> valid_;
    int dims_;
    FdIndex extent_;
    std::array<std::size_t, max_fd_dims> stride_;
    std::array<double, max_fd_dims> spacing_;
};

/// Nodes of the closed spatial domain (values there are meaningful samples).
inline std::vector<std::uint8_t> closed_domain_mask(const Grid& g) {
    std::vector<std::uint8_t> m(g.spatial_count());
    for (std::size_t s = 0; s < g.spatial_count(); ++s) m[s] = g.inside_closed(g.coords(s)) ? 1 : 0;
    return m;
}

inline FdView spatial_view(const Grid& g, std::span<const double> u, std::span<const std::uint8_t> mask) {
    FdIndex ext{};
    std::array<std::size_t, max_fd_dims> str{};
    std::array<double, max_fd_dims> sp{};
    for (int d = 0; d < g.real_dims(); ++d) {
        ext[d] = g.per_axis();
        str[d] = g.stride(d);
        sp[d] = g.h();
    }
    return FdView(u, mask, g.real_dims(), ext, str, sp);
}

/// View over the full grid: spatial axes first, t last. The mask has one
/// entry per full node.
inline FdView full_view(const Grid& g, std::span<const double> u, std::span<const std::uint8_t> mask) {
    FdIndex ext{};
    std::array<std::size_t, max_fd_dims> str{};
    std::array<double, max_fd_dims> sp{};
    const int D = g.real_dims();
    for (int d = 0; d < D; ++d) {
        ext[d] = g.per_axis();
        str[d] = g.stride(d);
        sp[d] = g.h();
    }
    ext[D] = g.nt();
    str[D] = g.spatial_count();
    sp[D] = g.dt();
    return FdView(u, mask, D + 1, ext, str, sp);
}

inline FdIndex to_fd_index(const Grid& g, std::size_t s, int t_index = -1) {
    const auto mi = g.multi_index(s);
    FdIndex idx{};
    for (int d = 0; d < g.real_dims(); ++d) idx[d] = mi[d];
    if (t_index >= 0) idx[g.real_dims()] = t_index;
    return idx;
}

}  // namespace mabuchi::detail
