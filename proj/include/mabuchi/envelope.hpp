#pragma once

#include "mabuchi/errors.hpp"
#include "mabuchi/grid.hpp"
#include "mabuchi/lattice.hpp"
#include "mabuchi/ma_kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

namespace mabuchi {

/// Dirichlet data on the boundary of Omega x A in reduced coordinates, plus
/// the smooth interpolating extension
///   Psi(z, zeta) = (phi1 (|zeta|^2 - 1) - phi0 (|zeta|^2 - e^2)) / (e^2 - 1).
struct BoundaryData {
    GridPtr grid;
    GridFunction phi0;       // spatial
    GridFunction phi1;       // spatial
    GridFunction values;     // full grid; boundary nodes carry Psi, interior nodes the extension
    GridFunction extension;  // full grid

    double sup_norm() const { return std::max(phi0.sup_norm(), phi1.sup_norm()); }
    bool is_boundary(std::size_t f) const { return grid->node_class(f) != NodeClass::interior; }
};

inline BoundaryData boundary_data(const Potential& p0, const Potential& p1) {
    p0.values().check_compatible(p1.values());
    const GridPtr& g = p0.grid_ptr();
    const double e2 = std::exp(2.0);
    BoundaryData bd{g, p0.values(), p1.values(), GridFunction(g, SliceTag::full), GridFunction(g, SliceTag::full)};
    const auto S = g->spatial_count();
    for (int j = 0; j < g->nt(); ++j) {
        const double t = g->t_values()[j];
        const double r2 = std::exp(2.0 * t);
        for (std::size_t s = 0; s < S; ++s) {
            const std::size_t f = g->full_index(j, s);
            double ext = (bd.phi1[s] * (r2 - 1.0) - bd.phi0[s] * (r2 - e2)) / (e2 - 1.0);
            if (j == 0) ext = bd.phi0[s];
            if (j + 1 == g->nt()) ext = bd.phi1[s];
            bd.extension[f] = ext;
            const NodeClass c = g->node_class(f);
            bd.values[f] = c == NodeClass::boundary_side ? 0.0 : ext;
        }
    }
    return bd;
}

/// chi = max(phi0 - A t, phi1 + A (t - 1)); A defaults to ||phi0 - phi1||_inf.
inline GridFunction lower_barrier(const Potential& p0, const Potential& p1, std::optional<double> A = std::nullopt) {
    p0.values().check_compatible(p1.values());
    const double amin = sup_distance(p0.values(), p1.values());
    const double a = A.value_or(amin);
    if (a < amin * (1.0 - 1e-12)) throw ConfigError("barrier constant below ||phi0 - phi1||: caps would not match");
    const Grid& g = p0.grid();
    GridFunction chi(p0.grid_ptr(), SliceTag::full);
    for (int j = 0; j < g.nt(); ++j) {
        const double t = g.t_values()[j];
        for (std::size_t s = 0; s < g.spatial_count(); ++s)
            chi[g.full_index(j, s)] = std::max(p0.values()[s] - a * t, p1.values()[s] + a * (t - 1.0));
    }
    return chi;
}

enum class SweepMode { gauss_seidel, jacobi };

struct EnvelopeConfig {
    int max_iterations = 5000;
    /// Stopping threshold on the sup update of a full sweep; <= 0 selects 1e-6 ||Psi||_inf.
    double tolerance = 0.0;
    SweepMode mode = SweepMode::gauss_seidel;
    /// Adds the least-eigenvector direction of the lifted Hessian to W at each node.
    bool adaptive_direction = true;
    /// Pattern-search refinement of the adaptive directions on the discrete
    /// operator, applied between converged passes.
    bool refine_direction = true;
    int refine_passes = 2;
    /// Sweeps between full passes over W; intermediate sweeps only revisit
    /// each node's last minimizing direction.
    int full_sweep_every = 6;
    bool check_barrier = true;
    /// Allowed dip below the lower barrier, relative to ||Psi||_inf, on top of the stopping tolerance.
    double barrier_slack = 1e-6;
    int majorant_max_iterations = 20000;
    double majorant_tolerance = 1e-11;
    std::ostream* trace = nullptr;  // CSV rows: iteration,full,sup_update
};

struct EnvelopeDiagnostics {
    int iterations = 0;
    double last_update = 0.0;
    double tolerance = 0.0;
    bool converged = false;
    double lambda_min_sup = 0.0;
    double lambda_min_mean = 0.0;
    double det_sup = 0.0;
    double det_mean = 0.0;
    double boundary_mismatch = 0.0;
    std::size_t barrier_violations = 0;
    int majorant_iterations = 0;
    double seconds = 0.0;
};

namespace detail {

/// Circle means over x + rho e^{i theta} w in the lifted coordinates
/// (z, zeta / sigma) with zeta = e^t, sampled by multilinear interpolation
/// in (x, y, ..., t). Stencils of nodes whose radius is not clamped by the
/// spatial boundary are cached per (t level, direction).
class CircleStencils {
public:
    struct Entry {
        std::int64_t offset;
        double weight;
    };

    explicit CircleStencils(const Grid& g) : g_(g) {
        n_ = g.n();
        D_ = 2 * n_ + 1;
        h_ = g.h();
        dt_ = g.dt();
        sigma_ = g.zeta_scale();
        r_ = g.radius();
        S_ = g.spatial_count();
        const auto dirs = g.directions();
        K_ = static_cast<int>(dirs.size());
        const int nt = g.nt();

        rho_t_.assign(static_cast<std::size_t>(nt) * K_, r_);
        for (int j = 0; j < nt; ++j)
            for (int k = 0; k < K_; ++k) rho_t_[j * K_ + k] = t_radius(j, std::abs(dirs[k].w[n_]));

        ordinal_.assign(S_, -1);
        for (std::size_t s = 0; s < S_; ++s)
            if (g.spatial_interior(s)) {
                ordinal_[s] = static_cast<std::int32_t>(interior_.size());
                interior_.push_back(static_cast<std::uint32_t>(s));
            }
        closed_ = closed_domain_mask(g);
        const double cell_diag = std::sqrt(2.0 * n_) * h_;
        safe_pad_ = cell_diag * (1.0 + 1e-9);
        for (int d = 0; d < 2 * n_; ++d) stride_[d] = g.stride(d);
        stride_[2 * n_] = S_;
        rho_s_.assign(interior_.size() * K_, 0.0);
        rho_safe_.assign(interior_.size() * K_, 0.0);
        for (std::size_t i = 0; i < interior_.size(); ++i)
            for (int k = 0; k < K_; ++k) {
                rho_s_[i * K_ + k] = (space_radius(interior_[i], dirs[k].w));
                rho_safe_[i * K_ + k] = (space_radius(interior_[i], dirs[k].w, cell_diag));
            }

        // template origin: centre of the box
        std::array<int, Grid::max_real_dims> mid{};
        for (int d = 0; d < 2 * n_; ++d) mid[d] = g.half_width();
        const std::size_t s0 = g.spatial_index(mid);
        templates_.resize(static_cast<std::size_t>(nt) * K_);
        center_w_.assign(static_cast<std::size_t>(nt) * K_, 0.0);
        for (int j = 1; j + 1 < nt; ++j)
            for (int k = 0; k < K_; ++k) {
                const std::int64_t node = static_cast<std::int64_t>(g.full_index(j, s0));
                std::vector<Entry> raw;
                visit(s0, j, dirs[k].w, rho_t_[j * K_ + k], [&](std::size_t f, double w) {
                    raw.push_back({static_cast<std::int64_t>(f) - node, w});
                });
                center_w_[j * K_ + k] = merge(raw, templates_[j * K_ + k]);
            }
        cache_clamped();
    }

    /// Entry budget for the precomputed stencils of radius-clamped nodes;
    /// beyond it those means are evaluated directly.
    static constexpr std::size_t clamped_entry_budget = std::size_t{1} << 25;

    /// Sorts raw entries by offset, sums duplicates into out and returns the
    /// weight at offset 0, which is left out of `out`.
    static double merge(std::vector<Entry>& raw, std::vector<Entry>& out) {
        std::sort(raw.begin(), raw.end(), [](const Entry& a, const Entry& b) { return a.offset < b.offset; });
        out.clear();
        double center = 0.0;
        for (const auto& e : raw) {
            if (e.offset == 0) center += e.weight;
            else if (!out.empty() && out.back().offset == e.offset) out.back().weight += e.weight;
            else out.push_back(e);
        }
        return center;
    }

    /// Stencil of mean_any at (s, j) along w in visiting order: offsets
    /// relative to the node, centre weight returned separately.
    double collect_any(std::size_t s, int j, const std::array<cplx, 3>& w, std::vector<Entry>& out) const {
        const double rho = std::min(t_radius(j, std::abs(w[n_])), space_radius(s, w));
        const auto node = static_cast<std::int64_t>(g_.full_index(j, s));
        out.clear();
        double center = 0.0;
        visit(s, j, w, rho, [&](std::size_t f, double wt) {
            const std::int64_t off = static_cast<std::int64_t>(f) - node;
            if (off == 0) center += wt;
            else out.push_back({off, wt});
        });
        return center;
    }

    int directions() const { return K_; }
    const std::vector<std::uint32_t>& interior() const { return interior_; }
    std::int32_t ordinal(std::size_t s) const { return ordinal_[s]; }
    double sigma() const { return sigma_; }

    /// Largest radius keeping t = log|e^t + rho sigma b e^{i theta}| inside [0, 1].
    double t_radius(int j, double bnorm) const {
        if (bnorm < 1e-14) return r_;
        const double et = std::exp(g_.t_values()[j]);
        const double cap = std::max(0.0, std::min(et - 1.0, std::numbers::e - et));
        return std::min(r_, cap / (sigma_ * bnorm));
    }

    /// Largest radius keeping the z-circle at distance >= pad inside the closed domain.
    double space_radius(std::size_t s, const std::array<cplx, 3>& w, double pad = 0.0) const {
        const auto x = g_.coords(s);
        if (g_.spec().domain == DomainKind::unit_polydisc) {
            double lim = std::numeric_limits<double>::infinity();
            for (int a = 0; a < n_; ++a) {
                const double aj = std::abs(w[a]);
                if (aj < 1e-14) continue;
                const double rj = std::hypot(x[2 * a], x[2 * a + 1]);
                lim = std::min(lim, std::max(0.0, 1.0 - rj - pad) / aj);
            }
            return lim;
        }
        double a2 = 0.0;
        for (int a = 0; a < n_; ++a) a2 += std::norm(w[a]);
        if (a2 < 1e-28) return std::numeric_limits<double>::infinity();
        double r2 = 0.0;
        for (int d = 0; d < 2 * n_; ++d) r2 += x[d] * x[d];
        return std::max(0.0, 1.0 - std::sqrt(r2) - pad) / std::sqrt(a2);
    }

    /// Distance from x along the real unit vector u (2n components) to the
    /// sphere |z| = R (ball) or the torus boundary max|z_j| = R (polydisc);
    /// zero when x is already outside.
    double ray_to_radius(const std::array<double, Grid::max_real_dims>& x, const std::array<double, 4>& u,
                         double R) const {
        auto root = [](double b, double c) {
            // largest root of s^2 + 2 b s + c = 0 when c <= 0
            return c > 0.0 ? 0.0 : -b + std::sqrt(std::max(0.0, b * b - c));
        };
        if (g_.spec().domain == DomainKind::unit_polydisc) {
            double lim = std::numeric_limits<double>::infinity();
            for (int a = 0; a < n_; ++a) {
                const double ux = u[2 * a], uy = u[2 * a + 1];
                const double q = ux * ux + uy * uy;
                const double c = x[2 * a] * x[2 * a] + x[2 * a + 1] * x[2 * a + 1] - R * R;
                if (q < 1e-28) {
                    if (c > 0.0) return 0.0;
                    continue;
                }
                const double b = (x[2 * a] * ux + x[2 * a + 1] * uy) / q;
                lim = std::min(lim, root(b, c / q));
            }
            return lim;
        }
        double b = 0.0, c = -R * R;
        for (int d = 0; d < 2 * n_; ++d) {
            b += x[d] * u[d];
            c += x[d] * x[d];
        }
        return root(b, c);
    }

    /// Calls visit(full index, weight) for every interpolation corner of every
    /// circle sample. Samples whose spatial cell leaves the closed domain are
    /// valued on the chord from the node's own column to the boundary point
    /// on the same ray, where the data vanish; the weights sum to 1 minus the
    /// total weight given to the boundary.
    template <class Visit>
    void visit(std::size_t s, int j, const std::array<cplx, 3>& w, double rho, Visit&& out) const {
        const auto mi = g_.multi_index(s);
        const auto xs = g_.coords(s);
        const int pa = g_.per_axis();
        const int nt = g_.nt();
        const int SD = 2 * n_;
        const double et = std::exp(g_.t_values()[j]);
        const auto circ = g_.circle();
        const double wm = 1.0 / static_cast<double>(circ.size());
        std::array<int, 5> base{};
        std::array<double, 5> frac{};
        std::array<std::size_t, 5> stride{};
        std::array<double, 4> delta{};
        for (int d = 0; d < SD; ++d) stride[d] = g_.stride(d);
        stride[SD] = S_;
        for (const cplx& e : circ) {
            for (int a = 0; a < n_; ++a) {
                const cplx dz = rho * e * w[a];
                delta[2 * a] = dz.real();
                delta[2 * a + 1] = dz.imag();
                split(mi[2 * a] + dz.real() / h_, pa - 1, base[2 * a], frac[2 * a]);
                split(mi[2 * a + 1] + dz.imag() / h_, pa - 1, base[2 * a + 1], frac[2 * a + 1]);
            }
            const cplx zeta = et + rho * sigma_ * w[n_] * e;
            const double pt = std::clamp(0.5 * std::log(std::norm(zeta)) / dt_, 0.0, static_cast<double>(nt - 1));
            split(pt, nt - 1, base[SD], frac[SD]);

            std::size_t spatial_origin = 0;
            for (int d = 0; d < SD; ++d) spatial_origin += static_cast<std::size_t>(base[d]) * stride[d];
            bool inside = true;
            for (int c = 0; c < (1 << SD) && inside; ++c) {
                std::size_t q = spatial_origin;
                for (int d = 0; d < SD; ++d)
                    if (c & (1 << d)) q += stride[d];
                inside = closed_[q] != 0;
            }
            if (!inside) {
                double len = 0.0;
                for (int d = 0; d < SD; ++d) len += delta[d] * delta[d];
                len = std::sqrt(len);
                std::array<double, 4> unit{};
                for (int d = 0; d < SD; ++d) unit[d] = delta[d] / len;
                const double db = ray_to_radius(xs, unit, 1.0);
                const double dq = std::min(len, ray_to_radius(xs, unit, 1.0 - safe_pad_));
                const double lam = db > dq ? std::clamp((len - dq) / (db - dq), 0.0, 1.0) : 1.0;
                const double w0 = wm * (1.0 - lam);
                if (w0 == 0.0) continue;
                // anchor q = x + dq u, interpolated at the sample's t
                for (int d = 0; d < SD; ++d) split(mi[d] + dq * unit[d] / h_, pa - 1, base[d], frac[d]);
                emit(base, frac, w0, out);
                continue;
            }
            emit(base, frac, wm, out);
        }
    }

    /// Sum of weighted values excluding the node itself, and the node's own weight.
    struct Mean {
        double rest;
        double center;
    };

    Mean mean(std::span<const double> u, std::size_t s, std::size_t ord, int j, int k,
              const std::array<cplx, 3>& w) const {
        const double rt = rho_t_[j * K_ + k];
        const std::size_t node = g_.full_index(j, s);
        const double* base = u.data() + node;
        if (rho_safe_[ord * K_ + k] >= rt) {
            const auto& tpl = templates_[j * K_ + k];
            double acc = 0.0;
            for (const auto& e : tpl) acc += e.weight * base[e.offset];
            return {acc, center_w_[j * K_ + k]};
        }
        if (!clamped_start_.empty()) {
            const std::size_t row = (static_cast<std::size_t>(j) * interior_.size() + ord) * K_ + k;
            double acc = 0.0;
            for (std::uint32_t q = clamped_start_[row]; q < clamped_start_[row + 1]; ++q)
                acc += clamped_weight_[q] * base[clamped_offset_[q]];
            return {acc, clamped_center_[row]};
        }
        return mean_direct(u, s, j, w, std::min(rt, rho_s_[ord * K_ + k]));
    }

    Mean mean_direct(std::span<const double> u, std::size_t s, int j, const std::array<cplx, 3>& w,
                     double rho) const {
        const std::size_t node = g_.full_index(j, s);
        Mean m{0.0, 0.0};
        visit(s, j, w, rho, [&](std::size_t f, double wt) {
            if (f == node) m.center += wt;
            else m.rest += wt * u[f];
        });
        return m;
    }

    /// Mean along an arbitrary unit direction with the radius clamped as for W.
    Mean mean_any(std::span<const double> u, std::size_t s, int j, const std::array<cplx, 3>& w) const {
        const double rho = std::min(t_radius(j, std::abs(w[n_])), space_radius(s, w));
        return mean_direct(u, s, j, w, rho);
    }

private:
    void cache_clamped() {
        const int nt = g_.nt();
        const std::size_t I = interior_.size();
        std::size_t clamped = 0;
        for (int j = 1; j + 1 < nt; ++j)
            for (std::size_t i = 0; i < I; ++i)
                for (int k = 0; k < K_; ++k) clamped += rho_safe_[i * K_ + k] < rho_t_[j * K_ + k] ? 1 : 0;
        const std::size_t estimate = clamped * g_.circle().size() * (std::size_t{1} << D_) / 2;
        if (clamped == 0 || estimate > clamped_entry_budget) return;

        const auto dirs = g_.directions();
        std::vector<Entry> raw, merged;
        clamped_start_.assign(1, 0);
        clamped_center_.assign(static_cast<std::size_t>(nt) * I * K_, 0.0);
        for (int j = 0; j < nt; ++j)
            for (std::size_t i = 0; i < I; ++i)
                for (int k = 0; k < K_; ++k) {
                    const double rt = rho_t_[j * K_ + k];
                    if (j > 0 && j + 1 < nt && rho_safe_[i * K_ + k] < rt) {
                        const auto node = static_cast<std::int64_t>(g_.full_index(j, interior_[i]));
                        raw.clear();
                        visit(interior_[i], j, dirs[k].w, std::min(rt, rho_s_[i * K_ + k]), [&](std::size_t f, double w) {
                            raw.push_back({static_cast<std::int64_t>(f) - node, w});
                        });
                        clamped_center_[clamped_start_.size() - 1] = merge(raw, merged);
                        for (const auto& e : merged) {
                            clamped_offset_.push_back(static_cast<std::int32_t>(e.offset));
                            clamped_weight_.push_back(e.weight);
                        }
                    }
                    if (clamped_offset_.size() > std::numeric_limits<std::uint32_t>::max())
                        throw NumericalError("clamped stencil cache overflow");
                    clamped_start_.push_back(static_cast<std::uint32_t>(clamped_offset_.size()));
                }
    }

    template <class Visit>
    void emit(const std::array<int, 5>& base, const std::array<double, 5>& frac, double wm, Visit&& out) const {
        std::array<double, 32> wt;
        std::array<std::size_t, 32> at;
        at[0] = 0;
        for (int d = 0; d < D_; ++d) at[0] += static_cast<std::size_t>(base[d]) * stride_[d];
        wt[0] = wm;
        int count = 1;
        for (int d = 0; d < D_; ++d) {
            const double f = frac[d];
            for (int c = 0; c < count; ++c) {
                wt[c + count] = wt[c] * f;
                at[c + count] = at[c] + stride_[d];
                wt[c] *= 1.0 - f;
            }
            count *= 2;
        }
        for (int c = 0; c < count; ++c)
            if (wt[c] != 0.0) out(at[c], wt[c]);
    }

    static void split(double p, int top, int& i, double& f) {
        int b = static_cast<int>(std::floor(p));
        b = std::clamp(b, 0, top - 1);
        i = b;
        f = std::clamp(p - b, 0.0, 1.0);
    }

    const Grid& g_;
    int n_ = 1, D_ = 3, K_ = 0;
    double h_ = 0, dt_ = 0, sigma_ = 0, r_ = 0;
    std::size_t S_ = 0;
    std::vector<double> rho_t_;
    std::vector<double> rho_s_;
    std::vector<double> rho_safe_;
    std::vector<std::uint8_t> closed_;
    std::array<std::size_t, 5> stride_{};
    double safe_pad_ = 0.0;
    std::vector<std::int32_t> ordinal_;
    std::vector<std::uint32_t> interior_;
    std::vector<std::vector<Entry>> templates_;
    std::vector<double> center_w_;
    std::vector<std::uint32_t> clamped_start_;
    std::vector<std::int32_t> clamped_offset_;
    std::vector<double> clamped_weight_;
    std::vector<double> clamped_center_;
};

inline std::vector<std::uint8_t> full_closed_mask(const Grid& g) {
    const auto sm = closed_domain_mask(g);
    std::vector<std::uint8_t> m(g.node_count());
    for (int j = 0; j < g.nt(); ++j)
        std::copy(sm.begin(), sm.end(), m.begin() + static_cast<std::ptrdiff_t>(j) * g.spatial_count());
    return m;
}

/// Lifted (n+1) x (n+1) complex Hessian of u(z, log|zeta|) at zeta = e^t,
/// with the zeta coordinate divided by sigma.
inline CMat lifted_hessian(const Grid& g, const FdView& v, std::size_t s, int j, double sigma) {
    const int n = g.n();
    const int T = 2 * n;
    const auto idx = to_fd_index(g, s, j);
    const double et = std::exp(g.t_values()[j]);
    CMat L(n + 1, n + 1);
    for (int a = 0; a < n; ++a) {
        const int xa = 2 * a, ya = 2 * a + 1;
        L(a, a) = 0.25 * (v.d2_partial(idx, xa, xa) + v.d2_partial(idx, ya, ya));
        for (int b = a + 1; b < n; ++b) {
            const int xb = 2 * b, yb = 2 * b + 1;
            const cplx m = 0.25 * cplx(v.d2_partial(idx, xa, xb) + v.d2_partial(idx, ya, yb),
                                       v.d2_partial(idx, xa, yb) - v.d2_partial(idx, ya, xb));
            L(a, b) = m;
            L(b, a) = std::conj(m);
        }
        const cplx uzt = 0.5 * cplx(v.d2_partial(idx, xa, T), -v.d2_partial(idx, ya, T));
        L(a, n) = sigma * uzt / (2.0 * et);
        L(n, a) = std::conj(L(a, n));
    }
    L(n, n) = sigma * sigma * v.d2_partial(idx, T, T) / (4.0 * et * et);
    return L;
}

/// Unit direction w with w^T L conj(w) = lambda_min(L).
inline std::array<cplx, 3> least_direction(const CMat& L) {
    Eigen::SelfAdjointEigenSolver<CMat> es(L);
    std::array<cplx, 3> w{};
    const auto v = es.eigenvectors().col(0);
    for (int c = 0; c < L.rows(); ++c) w[c] = std::conj(v(c));
    return w;
}

/// Pattern search on the unit sphere of C^{n+1} lowering the centre-solved
/// circle mean, started from w.
inline std::array<cplx, 3> refine_direction(const CircleStencils& st, std::span<const double> u, std::size_t s, int j,
                                            int comps, std::array<cplx, 3> w, std::span<const double> steps,
                                            int rounds) {
    auto value = [&](const std::array<cplx, 3>& d) {
        const auto m = st.mean_any(u, s, j, d);
        if (1.0 - m.center < 1e-9) return std::numeric_limits<double>::infinity();
        return m.rest / (1.0 - m.center);
    };
    double best = value(w);
    for (double eps : steps) {
        bool improved = true;
        for (int round = 0; improved && round < rounds; ++round) {
            improved = false;
            for (int c = 0; c < comps; ++c)
                for (cplx e : {cplx(eps, 0), cplx(-eps, 0), cplx(0, eps), cplx(0, -eps)}) {
                    auto d = w;
                    d[c] += e;
                    double nrm = 0.0;
                    for (int q = 0; q < comps; ++q) nrm += std::norm(d[q]);
                    nrm = std::sqrt(nrm);
                    for (int q = 0; q < comps; ++q) d[q] /= nrm;
                    const double v = value(d);
                    if (v < best) {
                        best = v;
                        w = d;
                        improved = true;
                    }
                }
        }
    }
    return w;
}

}  // namespace detail

/// Discrete harmonic function for the coordinate-axis circle-mean Laplacian
/// sum_axes (mean - centre) = 0 with the boundary values of Psi. It dominates
/// every discrete subsolution of the envelope scheme.
inline GridFunction harmonic_majorant(const BoundaryData& bd, int* iterations = nullptr, int max_iterations = 20000,
                                      double tolerance = 1e-11) {
    const Grid& g = *bd.grid;
    const detail::CircleStencils st(g);
    const auto dirs = g.directions();
    const int axes = g.n() + 1;
    GridFunction h = bd.values;
    double top = 0.0;
    for (std::size_t f = 0; f < g.node_count(); ++f)
        if (bd.is_boundary(f)) top = std::max(top, h[f]);
    for (std::size_t f = 0; f < g.node_count(); ++f)
        if (!bd.is_boundary(f)) h[f] = top;
    const double scale = std::max(bd.sup_norm(), 1e-300);
    auto vals = h.values();
    int it = 0;
    for (; it < max_iterations; ++it) {
        double upd = 0.0;
        for (int j = 1; j + 1 < g.nt(); ++j)
            for (std::size_t i = 0; i < st.interior().size(); ++i) {
                const std::size_t s = st.interior()[i];
                double rest = 0.0, cw = 0.0;
                for (int k = 0; k < axes; ++k) {
                    const auto m = st.mean(vals, s, i, j, k, dirs[k].w);
                    rest += m.rest;
                    cw += m.center;
                }
                const std::size_t f = g.full_index(j, s);
                const double target = rest / (axes - cw);
                upd = std::max(upd, std::abs(target - vals[f]));
                vals[f] = target;
            }
        if (upd <= tolerance * scale) {
            ++it;
            break;
        }
    }
    if (it >= max_iterations) throw NumericalError("harmonic majorant did not converge");
    if (iterations) *iterations = it;
    return h;
}

/// Least eigenvalue and determinant of the lifted complex Hessian over
/// interior nodes (unscaled zeta coordinate).
inline EnvelopeDiagnostics envelope_residual(const GridFunction& phi) {
    if (phi.is_spatial()) throw UsageError("envelope_residual expects a full-grid function");
    const Grid& g = phi.grid();
    const auto mask = detail::full_closed_mask(g);
    const auto view = detail::full_view(g, phi.values(), mask);
    EnvelopeDiagnostics d;
    std::size_t count = 0;
    for (int j = 1; j + 1 < g.nt(); ++j)
        for (std::size_t s = 0; s < g.spatial_count(); ++s) {
            if (!g.spatial_interior(s)) continue;
            const CMat L = detail::lifted_hessian(g, view, s, j, 1.0);
            const double lmin = least_eigenvalue(L);
            const double det = L.determinant().real();
            d.lambda_min_sup = std::max(d.lambda_min_sup, std::abs(lmin));
            d.det_sup = std::max(d.det_sup, std::abs(det));
            d.lambda_min_mean += std::abs(lmin);
            d.det_mean += std::abs(det);
            ++count;
        }
    if (count) {
        d.lambda_min_mean /= static_cast<double>(count);
        d.det_mean /= static_cast<double>(count);
    }
    return d;
}

struct EnvelopeResult {
    GridFunction phi;
    EnvelopeDiagnostics diagnostics;
};

/// Largest discrete subsolution of the min-circle-mean scheme with boundary
/// values Psi, reached by monotone decrease from the harmonic majorant.
inline EnvelopeResult psh_envelope(const BoundaryData& bd, const EnvelopeConfig& cfg = {}) {
    const auto start = std::chrono::steady_clock::now();
    const Grid& g = *bd.grid;
    if (cfg.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (cfg.full_sweep_every < 1) throw ConfigError("full_sweep_every must be >= 1");
    if (!(cfg.barrier_slack >= 0.0)) throw ConfigError("barrier_slack must be >= 0");

    EnvelopeDiagnostics diag;
    diag.tolerance = cfg.tolerance > 0.0 ? cfg.tolerance : 1e-6 * bd.sup_norm();
    GridFunction u = harmonic_majorant(bd, &diag.majorant_iterations, cfg.majorant_max_iterations, cfg.majorant_tolerance);

    const detail::CircleStencils st(g);
    const auto dirs = g.directions();
    const int K = st.directions();
    const auto& interior = st.interior();
    const std::size_t I = interior.size();
    const int nt = g.nt();
    const auto mask = detail::full_closed_mask(g);

    std::vector<std::uint8_t> best_dir(I * nt, 0);
    std::vector<std::array<cplx, 3>> adaptive(cfg.adaptive_direction ? I * nt : 0);
    std::vector<double> scratch;
    if (cfg.mode == SweepMode::jacobi) scratch.assign(g.node_count(), 0.0);

    auto vals = u.values();
    bool seeded = false;

    // Interpolation stencils of the adaptive directions, slot = j * I + i, in
    // compressed rows; rebuilt whenever the directions change.
    struct StencilRows {
        std::vector<std::size_t> start{0};
        std::vector<std::int32_t> offset;
        std::vector<double> weight;
        std::vector<double> center;
        void clear() {
            start.assign(1, 0);
            offset.clear();
            weight.clear();
            center.clear();
        }
        void append(const std::vector<detail::CircleStencils::Entry>& e, double c) {
            for (const auto& x : e) {
                offset.push_back(static_cast<std::int32_t>(x.offset));
                weight.push_back(x.weight);
            }
            start.push_back(offset.size());
            center.push_back(c);
        }
        detail::CircleStencils::Mean mean(std::span<const double> src, std::size_t slot, std::size_t node) const {
            const double* base = src.data() + node;
            double acc = 0.0;
            for (std::size_t q = start[slot]; q < start[slot + 1]; ++q) acc += weight[q] * base[offset[q]];
            return {acc, center[slot]};
        }
    };
    StencilRows rows, next_rows;
    std::vector<detail::CircleStencils::Entry> stencil;
    auto centre_solved = [](const detail::CircleStencils::Mean& m) {
        return 1.0 - m.center < 1e-9 ? std::numeric_limits<double>::infinity() : m.rest / (1.0 - m.center);
    };
    auto refresh_adaptive = [&] {
        const auto view = detail::full_view(g, vals, mask);
        next_rows.clear();
        for (int j = 0; j < nt; ++j)
            for (std::size_t i = 0; i < I; ++i) {
                const std::size_t slot = j * I + i;
                if (j == 0 || j + 1 == nt) {
                    next_rows.append({}, 0.0);
                    continue;
                }
                const std::size_t node = g.full_index(j, interior[i]);
                auto& w = adaptive[slot];
                const auto e = detail::least_direction(detail::lifted_hessian(g, view, interior[i], j, st.sigma()));
                if (!seeded || centre_solved(st.mean_any(vals, interior[i], j, e)) < centre_solved(rows.mean(vals, slot, node))) {
                    w = e;
                    next_rows.append(stencil, st.collect_any(interior[i], j, e, stencil));
                } else {
                    next_rows.offset.insert(next_rows.offset.end(), rows.offset.begin() + rows.start[slot],
                                            rows.offset.begin() + rows.start[slot + 1]);
                    next_rows.weight.insert(next_rows.weight.end(), rows.weight.begin() + rows.start[slot],
                                            rows.weight.begin() + rows.start[slot + 1]);
                    next_rows.start.push_back(next_rows.offset.size());
                    next_rows.center.push_back(rows.center[slot]);
                }
            }
        std::swap(rows, next_rows);
        seeded = true;
    };
    auto refine_adaptive = [&] {
        static constexpr std::array<double, 3> steps{0.25, 0.08, 0.025};
        rows.clear();
        for (int j = 0; j < nt; ++j)
            for (std::size_t i = 0; i < I; ++i) {
                if (j == 0 || j + 1 == nt) {
                    rows.append({}, 0.0);
                    continue;
                }
                auto& w = adaptive[j * I + i];
                w = detail::refine_direction(st, vals, interior[i], j, g.n() + 1, w, steps, 4);
                const double c = st.collect_any(interior[i], j, w, stencil);
                rows.append(stencil, c);
            }
    };

    // new value at a node from the current buffer; returns candidate
    auto relax = [&](std::span<const double> src, std::size_t i, int j, bool full) {
        const std::size_t s = interior[i];
        const std::size_t slot = j * I + i;
        double best = std::numeric_limits<double>::infinity();
        auto consider = [&](const detail::CircleStencils::Mean& m, int k) {
            if (1.0 - m.center < 1e-9) return;
            const double c = m.rest / (1.0 - m.center);
            if (c < best) {
                best = c;
                if (k >= 0) best_dir[slot] = static_cast<std::uint8_t>(k);
            }
        };
        if (full) {
            for (int k = 0; k < K; ++k) consider(st.mean(src, s, i, j, k, dirs[k].w), k);
        } else {
            const int k = best_dir[slot];
            consider(st.mean(src, s, i, j, k, dirs[k].w), k);
        }
        if (!adaptive.empty()) consider(rows.mean(src, slot, g.full_index(j, s)), -1);
        return best;
    };

    auto sweep = [&](int it, bool full) {
        double upd = 0.0;
        if (cfg.mode == SweepMode::gauss_seidel) {
            const bool forward = it % 2 == 0;
            for (int jj = 1; jj + 1 < nt; ++jj) {
                const int j = forward ? jj : nt - 1 - jj;
                for (std::size_t ii = 0; ii < I; ++ii) {
                    const std::size_t i = forward ? ii : I - 1 - ii;
                    const std::size_t f = g.full_index(j, interior[i]);
                    const double c = relax(vals, i, j, full);
                    if (c < vals[f]) {
                        upd = std::max(upd, vals[f] - c);
                        vals[f] = c;
                    }
                }
            }
        } else {
            std::copy(vals.begin(), vals.end(), scratch.begin());
            for (int j = 1; j + 1 < nt; ++j)
                for (std::size_t i = 0; i < I; ++i) {
                    const std::size_t f = g.full_index(j, interior[i]);
                    const double c = relax(scratch, i, j, full);
                    if (c < vals[f]) {
                        upd = std::max(upd, vals[f] - c);
                        vals[f] = c;
                    }
                }
        }
        return upd;
    };

    int it = 0;
    bool converged = false;
    const int passes = adaptive.empty() || !cfg.refine_direction ? 1 : 1 + cfg.refine_passes;
    std::vector<double> before;
    for (int pass = 0; pass < passes; ++pass) {
        if (pass > 0) {
            before.assign(vals.begin(), vals.end());
            refine_adaptive();
        }
        converged = false;
        for (int local = 0; it < cfg.max_iterations; ++it, ++local) {
            const bool full = (local % cfg.full_sweep_every) == 0;
            if (full && !adaptive.empty()) refresh_adaptive();
            const double upd = sweep(it, full);
            if (cfg.trace) *cfg.trace << it + 1 << ',' << (full ? 1 : 0) << ',' << upd << '\n';
            diag.last_update = upd;
            if (full && upd <= diag.tolerance) {
                converged = true;
                ++it;
                break;
            }
        }
        if (!converged) break;
        if (pass > 0) {
            double drop = 0.0;
            for (std::size_t f = 0; f < vals.size(); ++f) drop = std::max(drop, before[f] - vals[f]);
            if (drop <= 10.0 * diag.tolerance) break;
        }
    }
    diag.iterations = it;
    diag.converged = converged;

    for (std::size_t f = 0; f < g.node_count(); ++f)
        if (bd.is_boundary(f)) diag.boundary_mismatch = std::max(diag.boundary_mismatch, std::abs(u[f] - bd.values[f]));

    const auto res = envelope_residual(u);
    diag.lambda_min_sup = res.lambda_min_sup;
    diag.lambda_min_mean = res.lambda_min_mean;
    diag.det_sup = res.det_sup;
    diag.det_mean = res.det_mean;

    if (cfg.check_barrier) {
        const Potential p0 = Potential::from_slice(bd.phi0, PshCheck::lenient);
        const Potential p1 = Potential::from_slice(bd.phi1, PshCheck::lenient);
        const auto chi = lower_barrier(p0, p1);
        const double allowance = diag.tolerance + cfg.barrier_slack * bd.sup_norm();
        for (std::size_t f = 0; f < g.node_count(); ++f)
            if (u[f] < chi[f] - allowance) ++diag.barrier_violations;
    }
    diag.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (diag.barrier_violations > 0)
        throw NumericalError("envelope fell below the lower barrier at " + std::to_string(diag.barrier_violations) +
                             " nodes");
    return {std::move(u), diag};
}

}  // namespace mabuchi
