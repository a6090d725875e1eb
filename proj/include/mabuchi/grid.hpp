#pragma once

#include "mabuchi/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mabuchi {

using cplx = std::complex<double>;

enum class DomainKind { unit_disc, unit_ball, unit_polydisc };

inline std::string to_string(DomainKind k) {
    switch (k) {
    case DomainKind::unit_disc: return "unit_disc";
    case DomainKind::unit_ball: return "unit_ball";
    case DomainKind::unit_polydisc: return "unit_polydisc";
    }
    return "unknown";
}

inline DomainKind domain_from_string(const std::string& s) {
    if (s == "unit_disc" || s == "disc") return DomainKind::unit_disc;
    if (s == "unit_ball" || s == "ball") return DomainKind::unit_ball;
    if (s == "unit_polydisc" || s == "polydisc") return DomainKind::unit_polydisc;
    throw ConfigError("unknown domain kind '" + s + "'");
}

/// Stencil radius multiplier balancing the O(r^2) truncation error of circle
/// means against the O(h^2/r^2) error of multilinear interpolation.
inline int default_stencil_k(double h_z) {
    return std::max(2, static_cast<int>(std::lround(0.6 * std::sqrt(h_z) / h_z)));
}

/// Discretization of Omega x A in reduced coordinates (z, t = log|zeta|).
struct GridSpec {
    int dimension = 1;                       // complex dimension n of Omega
    DomainKind domain = DomainKind::unit_disc;
    double h_z = 0.1;                        // spatial step
    int n_t = 11;                            // time nodes on [0, 1]
    int m_dir = 0;                           // total direction count; 0 selects the default
    int m_circ = 16;                         // samples per circle
    int stencil_k = 0;                       // circle radius r = k * h_z; 0 selects the default

    int directions() const { return m_dir > 0 ? m_dir : (dimension + 1) + 2 * (dimension + 1) + 4; }
    int stencil_multiplier() const { return stencil_k > 0 ? stencil_k : default_stencil_k(h_z); }

    void validate() const {
        if (dimension != 1 && dimension != 2)
            throw ConfigError("dimension must be 1 or 2");
        if (domain == DomainKind::unit_disc && dimension != 1)
            throw ConfigError("unit_disc requires dimension 1");
        if (!(h_z > 0.0) || !std::isfinite(h_z)) throw ConfigError("h_z must be > 0");
        if (n_t < 3) throw ConfigError("n_t must be >= 3");
        if (directions() < 4) throw ConfigError("m_dir must be >= 4");
        if (directions() < dimension + 2)
            throw ConfigError("m_dir must leave room for at least one mixed direction");
        if (m_circ < 8) throw ConfigError("m_circ must be >= 8");
        if (stencil_k < 0) throw ConfigError("stencil_k must be >= 0");
    }

    bool operator==(const GridSpec&) const = default;
};

enum class NodeClass : std::uint8_t { interior, boundary_side, boundary_cap0, boundary_cap1 };

inline const char* to_string(NodeClass c) {
    switch (c) {
    case NodeClass::interior: return "interior";
    case NodeClass::boundary_side: return "boundary_side";
    case NodeClass::boundary_cap0: return "boundary_cap0";
    case NodeClass::boundary_cap1: return "boundary_cap1";
    }
    return "unknown";
}

/// Complex unit direction in C^{n+1}; the last component is the zeta direction.
struct Direction {
    std::array<cplx, 3> w{};
};

class Grid;
using GridPtr = std::shared_ptr<const Grid>;

/// Immutable product grid. Spatial nodes form a Cartesian lattice over a box
/// slightly larger than the closed domain; nodes outside Omega carry the side
/// boundary value. Full nodes are stored t-major: index = t_index * S + s.
class Grid {
public:
    static constexpr int max_real_dims = 4;

    explicit Grid(GridSpec spec) : spec_(spec) {
        spec_.validate();
        n_ = spec_.dimension;
        real_dims_ = 2 * n_;
        const double h = spec_.h_z;
        half_ = static_cast<int>(std::ceil(1.0 / h - 1e-9)) + 2;
        axis_.resize(2 * half_ + 1);
        for (int i = -half_; i <= half_; ++i) axis_[i + half_] = i * h;

        int interior_on_axis = 0;
        for (double x : axis_)
            if (std::abs(x) < 1.0 - 1e-12) ++interior_on_axis;
        if (interior_on_axis < 3)
            throw ConfigError("h_z too coarse: fewer than 3 interior spatial nodes along an axis");

        per_axis_ = static_cast<int>(axis_.size());
        spatial_count_ = 1;
        for (int d = 0; d < real_dims_; ++d) spatial_count_ *= static_cast<std::size_t>(per_axis_);
        stride_[real_dims_ - 1] = 1;
        for (int d = real_dims_ - 2; d >= 0; --d) stride_[d] = stride_[d + 1] * per_axis_;

        spatial_interior_.assign(spatial_count_, 0);
        for (std::size_t s = 0; s < spatial_count_; ++s) {
            const auto x = coords(s);
            spatial_interior_[s] = inside_open(x) ? 1 : 0;
            if (spatial_interior_[s]) ++interior_spatial_;
        }

        const int nt = spec_.n_t;
        dt_ = 1.0 / (nt - 1);
        t_.resize(nt);
        for (int j = 0; j < nt; ++j) t_[j] = j * dt_;
        t_.back() = 1.0;

        classes_.resize(node_count());
        for (std::size_t f = 0; f < node_count(); ++f) {
            const std::size_t j = f / spatial_count_;
            const std::size_t s = f % spatial_count_;
            if (!spatial_interior_[s]) classes_[f] = NodeClass::boundary_side;
            else if (j == 0) classes_[f] = NodeClass::boundary_cap0;
            else if (j + 1 == static_cast<std::size_t>(nt)) classes_[f] = NodeClass::boundary_cap1;
            else classes_[f] = NodeClass::interior;
        }

        build_directions();
        const int m = spec_.m_circ;
        circle_.resize(m);
        for (int k = 0; k < m; ++k) {
            const double th = 2.0 * std::numbers::pi * k / m;
            circle_[k] = {std::cos(th), std::sin(th)};
        }
    }

    const GridSpec& spec() const { return spec_; }
    int n() const { return n_; }
    int real_dims() const { return real_dims_; }
    int per_axis() const { return per_axis_; }
    int half_width() const { return half_; }
    double h() const { return spec_.h_z; }
    double dt() const { return dt_; }
    int nt() const { return spec_.n_t; }
    std::span<const double> t_values() const { return t_; }
    std::span<const double> axis() const { return axis_; }
    std::size_t spatial_count() const { return spatial_count_; }
    std::size_t node_count() const { return spatial_count_ * static_cast<std::size_t>(spec_.n_t); }
    std::size_t interior_spatial_count() const { return interior_spatial_; }
    std::size_t stride(int d) const { return stride_[d]; }

    /// Circle radius in z units.
    double radius() const { return spec_.stencil_multiplier() * spec_.h_z; }
    /// Scale of the zeta coordinate: zeta offsets are multiplied by this so a
    /// unit step in t indices matches a unit step in z indices near |zeta| = 1.
    double zeta_scale() const { return dt_ / spec_.h_z; }

    std::span<const Direction> directions() const { return directions_; }
    std::span<const cplx> circle() const { return circle_; }

    bool spatial_interior(std::size_t s) const { return spatial_interior_[s] != 0; }

    std::size_t full_index(std::size_t t_index, std::size_t s) const { return t_index * spatial_count_ + s; }
    std::size_t t_index_of(std::size_t f) const { return f / spatial_count_; }
    std::size_t spatial_of(std::size_t f) const { return f % spatial_count_; }

    NodeClass node_class(std::size_t f) const {
        if (f >= classes_.size()) throw UsageError("node index out of range");
        return classes_[f];
    }
    std::span<const NodeClass> classes() const { return classes_; }

    /// Multi-index (axis positions in [0, per_axis)) of a spatial node.
    std::array<int, max_real_dims> multi_index(std::size_t s) const {
        std::array<int, max_real_dims> idx{};
        for (int d = 0; d < real_dims_; ++d) {
            idx[d] = static_cast<int>(s / stride_[d]);
            s %= stride_[d];
        }
        return idx;
    }
    std::size_t spatial_index(const std::array<int, max_real_dims>& idx) const {
        std::size_t s = 0;
        for (int d = 0; d < real_dims_; ++d) s += static_cast<std::size_t>(idx[d]) * stride_[d];
        return s;
    }

    /// Real coordinates (Re z1, Im z1, Re z2, Im z2) of a spatial node.
    std::array<double, max_real_dims> coords(std::size_t s) const {
        const auto idx = multi_index(s);
        std::array<double, max_real_dims> x{};
        for (int d = 0; d < real_dims_; ++d) x[d] = axis_[idx[d]];
        return x;
    }

    std::array<cplx, 2> z(std::size_t s) const {
        const auto x = coords(s);
        return {cplx(x[0], x[1]), n_ == 2 ? cplx(x[2], x[3]) : cplx(0.0, 0.0)};
    }

    double norm_z(std::size_t s) const {
        const auto x = coords(s);
        double r2 = 0.0;
        for (int d = 0; d < real_dims_; ++d) r2 += x[d] * x[d];
        return std::sqrt(r2);
    }

    /// rho(z) <= 0 with rho = |z|^2 - 1 (ball) or max|z_j|^2 - 1 (polydisc).
    bool inside_closed(const std::array<double, max_real_dims>& x, double tol = 1e-12) const {
        return defining(x) <= tol;
    }
    bool inside_open(const std::array<double, max_real_dims>& x, double tol = 1e-12) const {
        return defining(x) < -tol;
    }

    double defining(const std::array<double, max_real_dims>& x) const {
        if (spec_.domain == DomainKind::unit_polydisc) {
            double m = 0.0;
            for (int j = 0; j < n_; ++j) m = std::max(m, x[2 * j] * x[2 * j] + x[2 * j + 1] * x[2 * j + 1]);
            return m - 1.0;
        }
        double r2 = 0.0;
        for (int d = 0; d < real_dims_; ++d) r2 += x[d] * x[d];
        return r2 - 1.0;
    }

    /// Distance from an interior point to the spatial boundary, measured so
    /// that x + rho*e^{i theta} a stays in the closed domain when
    /// rho * |a| <= margin (ball) or rho * |a_j| <= margin_j (polydisc).
    double boundary_margin(const std::array<double, max_real_dims>& x, const Direction& dir) const {
        if (spec_.domain == DomainKind::unit_polydisc) {
            double lim = std::numeric_limits<double>::infinity();
            for (int j = 0; j < n_; ++j) {
                const double aj = std::abs(dir.w[j]);
                if (aj < 1e-14) continue;
                const double rj = std::hypot(x[2 * j], x[2 * j + 1]);
                lim = std::min(lim, std::max(0.0, 1.0 - rj) / aj);
            }
            return lim;
        }
        double a2 = 0.0;
        for (int j = 0; j < n_; ++j) a2 += std::norm(dir.w[j]);
        if (a2 < 1e-28) return std::numeric_limits<double>::infinity();
        double r2 = 0.0;
        for (int d = 0; d < real_dims_; ++d) r2 += x[d] * x[d];
        return std::max(0.0, 1.0 - std::sqrt(r2)) / std::sqrt(a2);
    }

    std::string describe() const {
        return to_string(spec_.domain) + " n=" + std::to_string(n_) + " h=" + std::to_string(spec_.h_z) +
               " nt=" + std::to_string(spec_.n_t);
    }

private:
    void build_directions() {
        const int total = spec_.directions();
        const int comps = n_ + 1;
        auto push = [&](std::array<cplx, 3> w) {
            double nrm = 0.0;
            for (int c = 0; c < comps; ++c) nrm += std::norm(w[c]);
            nrm = std::sqrt(nrm);
            for (int c = 0; c < comps; ++c) w[c] /= nrm;
            directions_.push_back(Direction{w});
        };
        for (int c = 0; c < comps; ++c) {
            std::array<cplx, 3> w{};
            w[c] = 1.0;
            push(w);
        }
        // z_alpha / zeta couplings first, then z_alpha / z_beta, then seeded fill.
        std::vector<std::array<cplx, 3>> mixed;
        const std::array<cplx, 4> phases{cplx(1, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1)};
        for (int a = 0; a < n_; ++a)
            for (const auto& ph : phases) {
                std::array<cplx, 3> w{};
                w[a] = 1.0;
                w[n_] = ph;
                mixed.push_back(w);
            }
        for (int a = 0; a < n_; ++a)
            for (int b = a + 1; b < n_; ++b)
                for (const auto& ph : phases) {
                    std::array<cplx, 3> w{};
                    w[a] = 1.0;
                    w[b] = ph;
                    mixed.push_back(w);
                }
        std::mt19937_64 rng(0x5eedULL);
        std::normal_distribution<double> gauss;
        while (static_cast<int>(mixed.size()) < total - comps) {
            std::array<cplx, 3> w{};
            for (int c = 0; c < comps; ++c) w[c] = cplx(gauss(rng), gauss(rng));
            mixed.push_back(w);
        }
        for (int i = 0; i < total - comps; ++i) push(mixed[i]);
    }

    GridSpec spec_;
    int n_ = 1;
    int real_dims_ = 2;
    int half_ = 0;
    int per_axis_ = 0;
    std::vector<double> axis_;
    std::size_t spatial_count_ = 0;
    std::size_t interior_spatial_ = 0;
    std::array<std::size_t, max_real_dims> stride_{};
    std::vector<std::uint8_t> spatial_interior_;
    double dt_ = 0.0;
    std::vector<double> t_;
    std::vector<NodeClass> classes_;
    std::vector<Direction> directions_;
    std::vector<cplx> circle_;
};

inline GridPtr build_grid(const GridSpec& spec) { return std::make_shared<const Grid>(spec); }

inline NodeClass classify_node(const Grid& grid, std::size_t index) { return grid.node_class(index); }

enum class SliceTag { full, spatial };

inline const char* to_string(SliceTag t) { return t == SliceTag::full ? "full" : "spatial"; }

/// Real samples on every node of either the full (z, t) grid or one spatial slice.
class GridFunction {
public:
    GridFunction() = default;

    GridFunction(GridPtr grid, SliceTag tag)
        : grid_(std::move(grid)), tag_(tag), values_(expected_size(*grid_, tag), 0.0) {}

    GridFunction(GridPtr grid, SliceTag tag, std::vector<double> values)
        : grid_(std::move(grid)), tag_(tag), values_(std::move(values)) {
        if (values_.size() != expected_size(*grid_, tag_))
            throw UsageError("value count does not match grid");
        for (double v : values_)
            if (!std::isfinite(v)) throw UsageError("grid function values must be finite");
    }

    template <class F>
    static GridFunction spatial_from(GridPtr grid, F&& f) {
        GridFunction u(grid, SliceTag::spatial);
        for (std::size_t s = 0; s < grid->spatial_count(); ++s) u.values_[s] = f(grid->z(s));
        return u;
    }

    /// f(z, t) sampled on the full grid.
    template <class F>
    static GridFunction full_from(GridPtr grid, F&& f) {
        GridFunction u(grid, SliceTag::full);
        const auto S = grid->spatial_count();
        for (int j = 0; j < grid->nt(); ++j)
            for (std::size_t s = 0; s < S; ++s) u.values_[j * S + s] = f(grid->z(s), grid->t_values()[j]);
        return u;
    }

    static std::size_t expected_size(const Grid& g, SliceTag tag) {
        return tag == SliceTag::full ? g.node_count() : g.spatial_count();
    }

    const Grid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }
    SliceTag tag() const { return tag_; }
    bool is_spatial() const { return tag_ == SliceTag::spatial; }
    std::size_t size() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    double sup_norm() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    GridFunction& operator+=(const GridFunction& o) {
        check_compatible(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    GridFunction& operator-=(const GridFunction& o) {
        check_compatible(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    GridFunction& operator*=(double c) {
        for (double& v : values_) v *= c;
        return *this;
    }
    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(double c, GridFunction a) { return a *= c; }

    void check_compatible(const GridFunction& o) const {
        if (grid_ != o.grid_ && !(grid_ && o.grid_ && grid_->spec() == o.grid_->spec()))
            throw UsageError("grid functions live on different grids");
        if (tag_ != o.tag_) throw UsageError("grid functions have different slice tags");
    }

private:
    GridPtr grid_;
    SliceTag tag_ = SliceTag::spatial;
    std::vector<double> values_;
};

inline GridFunction restrict_slice(const GridFunction& u, std::size_t t_index) {
    if (u.is_spatial()) throw UsageError("cannot slice a spatial grid function");
    const Grid& g = u.grid();
    if (t_index >= static_cast<std::size_t>(g.nt())) throw UsageError("t index out of range");
    const auto S = g.spatial_count();
    std::vector<double> vals(u.values().begin() + t_index * S, u.values().begin() + (t_index + 1) * S);
    return GridFunction(u.grid_ptr(), SliceTag::spatial, std::move(vals));
}

/// Max over shared spatial nodes of |a - b|.
inline double sup_distance(const GridFunction& a, const GridFunction& b) {
    a.check_compatible(b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace mabuchi
