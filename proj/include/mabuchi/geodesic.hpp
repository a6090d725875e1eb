#pragma once

#include "mabuchi/envelope.hpp"
#include "mabuchi/grid.hpp"
#include "mabuchi/hash.hpp"
#include "mabuchi/ma_kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mabuchi {

/// FNV-1a over a canonical text rendering of the grid and solver settings.
inline std::string config_hash(const GridSpec& g, const EnvelopeConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << g.dimension << '|' << to_string(g.domain) << '|' << g.h_z << '|' << g.n_t << '|' << g.directions() << '|'
       << g.m_circ << '|' << g.stencil_multiplier() << '|' << c.max_iterations << '|' << c.tolerance << '|'
       << static_cast<int>(c.mode) << '|' << c.adaptive_direction << '|' << c.refine_direction << '|'
       << c.refine_passes << '|' << c.full_sweep_every << '|' << c.check_barrier << '|' << c.barrier_slack;
    return fnv1a_hex(os.str());
}

/// Time slices phi_t of a solution on a uniform t lattice over [0, 1].
class GeodesicPath {
public:
    GeodesicPath(std::vector<GridFunction> slices, std::string provenance = {},
                 std::optional<EnvelopeDiagnostics> diagnostics = std::nullopt)
        : slices_(std::move(slices)), provenance_(std::move(provenance)), diagnostics_(diagnostics) {
        if (slices_.size() < 2) throw UsageError("a path needs at least two slices");
        for (const auto& s : slices_) {
            if (!s.is_spatial()) throw UsageError("path slices must be spatial");
            s.check_compatible(slices_.front());
        }
        const Grid& g = grid();
        for (const auto& sl : slices_)
            for (std::size_t s = 0; s < g.spatial_count(); ++s)
                if (!g.spatial_interior(s) && sl[s] != 0.0) throw UsageError("path slices must vanish on the boundary");
    }

    static GeodesicPath from_full(const GridFunction& phi, std::string provenance = {},
                                  std::optional<EnvelopeDiagnostics> diagnostics = std::nullopt) {
        std::vector<GridFunction> slices;
        for (int j = 0; j < phi.grid().nt(); ++j) slices.push_back(restrict_slice(phi, j));
        return GeodesicPath(std::move(slices), std::move(provenance), diagnostics);
    }

    std::size_t size() const { return slices_.size(); }
    const GridFunction& slice(std::size_t j) const { return slices_.at(j); }
    const std::vector<GridFunction>& slices() const { return slices_; }
    const Grid& grid() const { return slices_.front().grid(); }
    const GridPtr& grid_ptr() const { return slices_.front().grid_ptr(); }
    double dt() const { return 1.0 / static_cast<double>(slices_.size() - 1); }
    double t(std::size_t j) const { return static_cast<double>(j) * dt(); }
    const std::string& provenance() const { return provenance_; }
    const std::optional<EnvelopeDiagnostics>& diagnostics() const { return diagnostics_; }

    /// d/dt by central differences inside, second-order one-sided at the ends.
    GridFunction velocity(std::size_t j) const {
        const std::size_t N = size();
        if (j >= N) throw UsageError("slice index out of range");
        const double k = 1.0 / dt();
        if (N == 2) return k * (slices_[1] - slices_[0]);
        if (j == 0) return k * (-1.5 * slices_[0] + 2.0 * slices_[1] - 0.5 * slices_[2]);
        if (j + 1 == N) return k * (1.5 * slices_[N - 1] - 2.0 * slices_[N - 2] + 0.5 * slices_[N - 3]);
        return (0.5 * k) * (slices_[j + 1] - slices_[j - 1]);
    }

    GridFunction acceleration(std::size_t j) const {
        if (j == 0 || j + 1 >= size()) throw UsageError("acceleration needs an interior slice");
        return (1.0 / (dt() * dt())) * (slices_[j + 1] - 2.0 * slices_[j] + slices_[j - 1]);
    }

    /// The same path traversed from phi1 to phi0.
    GeodesicPath reversed() const {
        std::vector<GridFunction> r(slices_.rbegin(), slices_.rend());
        return GeodesicPath(std::move(r), provenance_, diagnostics_);
    }

private:
    std::vector<GridFunction> slices_;
    std::string provenance_;
    std::optional<EnvelopeDiagnostics> diagnostics_;
};

inline GeodesicPath solve_geodesic(const Potential& p0, const Potential& p1, const EnvelopeConfig& cfg = {}) {
    const auto bd = boundary_data(p0, p1);
    auto res = psh_envelope(bd, cfg);
    return GeodesicPath::from_full(res.phi, config_hash(p0.grid().spec(), cfg), res.diagnostics);
}

struct ResidualReport {
    double sup = 0.0;
    double mean = 0.0;
    std::size_t evaluated = 0;
    std::size_t degenerate = 0;
    double degenerate_fraction = 0.0;
    std::vector<double> per_slice_sup;  // one entry per slice; the two end slices stay NaN
};

/// Residual phi'' - |grad phi'|^2_{phi_t} of the geodesic equation on interior
/// slices, restricted to |z| < radius and to nodes with
/// det(phi_{a bbar}) >= 1e-6 (trace / n)^n.
inline ResidualReport geodesic_residual(const GeodesicPath& path, double radius = 1.0) {
    if (path.size() < 3) throw UsageError("geodesic_residual needs at least three slices");
    const Grid& g = path.grid();
    const int n = g.n();
    ResidualReport rep;
    rep.per_slice_sup.assign(path.size(), std::numeric_limits<double>::quiet_NaN());
    double total = 0.0;
    for (std::size_t j = 1; j + 1 < path.size(); ++j) {
        double slice_sup = 0.0;
        const Potential phi(path.slice(j), PshCheck::lenient);
        const auto acc = path.acceleration(j);
        const auto grad = gradient_norm_sq(path.velocity(j), phi);
        for (std::size_t s = 0; s < g.spatial_count(); ++s) {
            if (!g.spatial_interior(s) || g.norm_z(s) >= radius) continue;
            const CMat& m = phi.hessian().matrix[s];
            const double tr = m.trace().real();
            const double det = m.determinant().real();
            if (!(tr > 0.0) || det < 1e-6 * std::pow(tr / n, n) || !phi.hessian().usable(s)) {
                ++rep.degenerate;
                continue;
            }
            const double r = std::abs(acc[s] - grad[s]);
            rep.sup = std::max(rep.sup, r);
            slice_sup = std::max(slice_sup, r);
            total += r;
            ++rep.evaluated;
        }
        rep.per_slice_sup[j] = slice_sup;
    }
    if (rep.evaluated) rep.mean = total / static_cast<double>(rep.evaluated);
    const std::size_t all = rep.evaluated + rep.degenerate;
    if (all) rep.degenerate_fraction = static_cast<double>(rep.degenerate) / static_cast<double>(all);
    return rep;
}

struct RegularityReport {
    // time part
    double lipschitz_t = 0.0;
    double lipschitz_bound = 0.0;  // ||phi0 - phi1||_inf
    double spatial_lipschitz = 0.0;
    // space part
    double rho_k = 0.0;
    double second_difference_sup = -std::numeric_limits<double>::infinity();
    std::vector<double> second_difference_per_t;
    double reference_factor = 0.0;  // 1 / (1 - rho_K^2)^2
    double degenerate_fraction = 0.0;
};

/// Observed Lipschitz constants in t (forward differences) and in space
/// (nearest-neighbour differences over interior nodes).
inline RegularityReport lipschitz_report(const GeodesicPath& path) {
    const Grid& g = path.grid();
    RegularityReport rep;
    rep.lipschitz_bound = sup_distance(path.slice(0), path.slice(path.size() - 1));
    for (std::size_t j = 0; j + 1 < path.size(); ++j)
        rep.lipschitz_t = std::max(rep.lipschitz_t, sup_distance(path.slice(j + 1), path.slice(j)) / path.dt());
    for (const auto& sl : path.slices())
        for (std::size_t s = 0; s < g.spatial_count(); ++s) {
            if (!g.spatial_interior(s)) continue;
            const auto idx = g.multi_index(s);
            for (int d = 0; d < g.real_dims(); ++d) {
                if (idx[d] + 1 >= g.per_axis()) continue;
                auto nb = idx;
                ++nb[d];
                const std::size_t q = g.spatial_index(nb);
                rep.spatial_lipschitz = std::max(rep.spatial_lipschitz, std::abs(sl[q] - sl[s]) / g.h());
            }
        }
    std::size_t degenerate = 0, total = 0;
    for (std::size_t j = 1; j + 1 < path.size(); ++j) {
        const auto hf = complex_hessian(path.slice(j));
        degenerate += hf.degenerate_count;
        total += g.interior_spatial_count();
    }
    if (total) rep.degenerate_fraction = static_cast<double>(degenerate) / static_cast<double>(total);
    return rep;
}

/// sup over |z| <= rho_K, every slice and axis shifts of length h and 2h of
/// (u(z+e) + u(z-e) - 2u(z)) / |e|^2.
inline RegularityReport second_difference_report(const GeodesicPath& path, double rho_k) {
    const Grid& g = path.grid();
    if (!(rho_k > 0.0) || rho_k + 2.0 * g.h() >= 1.0)
        throw UsageError("compact set must stay two grid steps away from the boundary");
    RegularityReport rep;
    rep.rho_k = rho_k;
    rep.reference_factor = 1.0 / std::pow(1.0 - rho_k * rho_k, 2);
    for (const auto& sl : path.slices()) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < g.spatial_count(); ++s) {
            if (g.norm_z(s) > rho_k + 1e-12) continue;
            const auto idx = g.multi_index(s);
            for (int d = 0; d < g.real_dims(); ++d)
                for (int k : {1, 2}) {
                    auto p = idx, m = idx;
                    p[d] += k;
                    m[d] -= k;
                    const double len = k * g.h();
                    const double q = (sl[g.spatial_index(p)] + sl[g.spatial_index(m)] - 2.0 * sl[s]) / (len * len);
                    best = std::max(best, q);
                }
        }
        rep.second_difference_per_t.push_back(best);
        rep.second_difference_sup = std::max(rep.second_difference_sup, best);
    }
    return rep;
}

using BallPoint = std::array<cplx, 2>;

/// <z, a> = sum z_i conj(a_i).
inline cplx ball_inner(const BallPoint& z, const BallPoint& a, int n) {
    cplx s{};
    for (int i = 0; i < n; ++i) s += z[i] * std::conj(a[i]);
    return s;
}

/// Ball automorphism T_a(z) = (P_a z - a + sqrt(1 - |a|^2)(z - P_a z)) / (1 - <z, a>),
/// P_a z = <z, a> a / |a|^2; T_0 is the identity. T_a(a) = 0, T_a(0) = -a and
/// the inverse map is T_{-a}; z -> -T_a(z) is an involution.
inline BallPoint mobius(const BallPoint& a, const BallPoint& z, int n) {
    if (n < 1 || n > 2) throw UsageError("mobius supports n = 1 or 2");
    const double a2 = std::real(ball_inner(a, a, n));
    if (a2 >= 1.0) throw DomainError("mobius parameter must lie in the open ball");
    if (a2 == 0.0) return z;
    const cplx za = ball_inner(z, a, n);
    const cplx den = 1.0 - za;
    if (std::abs(den) < 1e-12) throw DomainError("mobius denominator vanishes");
    const double s = std::sqrt(1.0 - a2);
    BallPoint out{};
    for (int i = 0; i < n; ++i) {
        const cplx pa = za * a[i] / a2;
        out[i] = (pa - a[i] + s * (z[i] - pa)) / den;
    }
    return out;
}

/// h(a, z) = a - <z, a> z, the first-order term of T_a(z) in a.
inline BallPoint mobius_first_order(const BallPoint& a, const BallPoint& z, int n) {
    const cplx za = ball_inner(z, a, n);
    BallPoint out{};
    for (int i = 0; i < n; ++i) out[i] = a[i] - za * z[i];
    return out;
}

struct ToricOracleSpec {
    double s_min = -4.0;
    int n_s = 401;
    int n_t = 101;
    int max_slope = 8;  // lattice directions (a, b) with |a|, |b| <= max_slope
    int max_passes = 500;
    double tolerance = 1e-13;
};

/// Largest function on [s_min, 0] x [0, 1] that is convex along every lattice
/// direction of the fine grid and matches v(s, 0) = g0, v(s, 1) = g1,
/// v(0, t) = 0 and linear data at s = s_min. Computed from the linear
/// interpolation in t by repeated 1D lower convex hulls along lattice lines.
class ToricOracle {
public:
    using Profile = std::function<double(double)>;

    ToricOracle(const Profile& g0, const Profile& g1, ToricOracleSpec spec = {}) : spec_(spec) {
        if (spec_.s_min > -1.0 || spec_.n_s < 3 || spec_.n_t < 3 || spec_.max_slope < 1)
            throw UsageError("invalid toric oracle grid");
        ds_ = -spec_.s_min / (spec_.n_s - 1);
        dt_ = 1.0 / (spec_.n_t - 1);
        std::vector<double> a(spec_.n_s), b(spec_.n_s);
        for (int i = 0; i < spec_.n_s; ++i) {
            a[i] = g0(s_at(i));
            b[i] = g1(s_at(i));
        }
        check_profile(a, "g0");
        check_profile(b, "g1");
        v_.assign(static_cast<std::size_t>(spec_.n_s) * spec_.n_t, 0.0);
        for (int j = 0; j < spec_.n_t; ++j) {
            const double t = j * dt_;
            for (int i = 0; i < spec_.n_s; ++i) at(i, j) = (1.0 - t) * a[i] + t * b[i];
        }
        for (int i = 0; i < spec_.n_s; ++i) {
            at(i, 0) = a[i];
            at(i, spec_.n_t - 1) = b[i];
        }
        for (int j = 0; j < spec_.n_t; ++j) at(spec_.n_s - 1, j) = 0.0;
        convexify();
    }

    double s_min() const { return spec_.s_min; }
    int passes() const { return passes_; }
    double last_change() const { return last_change_; }

    /// Bilinear interpolation; s is clamped to [s_min, 0].
    double value(double s, double t) const {
        s = std::clamp(s, spec_.s_min, 0.0);
        t = std::clamp(t, 0.0, 1.0);
        const double fs = (s - spec_.s_min) / ds_, ft = t / dt_;
        const int i = std::min(static_cast<int>(fs), spec_.n_s - 2);
        const int j = std::min(static_cast<int>(ft), spec_.n_t - 2);
        const double u = fs - i, w = ft - j;
        return (1 - u) * (1 - w) * cat(i, j) + u * (1 - w) * cat(i + 1, j) + (1 - u) * w * cat(i, j + 1) +
               u * w * cat(i + 1, j + 1);
    }

    /// Value for the radial potential at |z| = r (r = 0 maps to s_min).
    double at_radius(double r, double t) const {
        return value(r > 0.0 ? std::log(r) : spec_.s_min, t);
    }

private:
    double s_at(int i) const { return spec_.s_min + i * ds_; }
    double& at(int i, int j) { return v_[static_cast<std::size_t>(j) * spec_.n_s + i]; }
    double cat(int i, int j) const { return v_[static_cast<std::size_t>(j) * spec_.n_s + i]; }

    void check_profile(const std::vector<double>& p, const char* name) const {
        const double scale = 1.0 + *std::max_element(p.begin(), p.end(), [](double x, double y) {
            return std::abs(x) < std::abs(y);
        });
        if (std::abs(p.back()) > 1e-12) throw UsageError(std::string(name) + " must vanish at s = 0");
        for (std::size_t i = 1; i + 1 < p.size(); ++i)
            if (p[i + 1] - 2.0 * p[i] + p[i - 1] < -1e-12 * std::abs(scale))
                throw UsageError(std::string(name) + " is not convex");
    }

    // lower convex hull of (x_k, y_k) evaluated back at x_k; endpoints fixed
    static double hull_line(std::vector<double>& y, std::vector<int>& stack) {
        const int m = static_cast<int>(y.size());
        if (m < 3) return 0.0;
        stack.clear();
        for (int k = 0; k < m; ++k) {
            while (stack.size() >= 2) {
                const int p = stack[stack.size() - 2], q = stack.back();
                // q lies on or above the chord p-k
                if ((y[q] - y[p]) * (k - p) < (y[k] - y[p]) * (q - p)) break;
                stack.pop_back();
            }
            stack.push_back(k);
        }
        double change = 0.0;
        for (std::size_t c = 0; c + 1 < stack.size(); ++c) {
            const int p = stack[c], q = stack[c + 1];
            for (int k = p + 1; k < q; ++k) {
                const double lin = y[p] + (y[q] - y[p]) * (k - p) / static_cast<double>(q - p);
                if (lin < y[k]) {
                    change = std::max(change, y[k] - lin);
                    y[k] = lin;
                }
            }
        }
        return change;
    }

    void convexify() {
        std::vector<std::array<int, 2>> dirs;
        const int M = spec_.max_slope;
        for (int a = 0; a <= M; ++a)
            for (int b = -M; b <= M; ++b) {
                if (a == 0 && b <= 0) continue;
                if (std::gcd(a, std::abs(b)) != 1) continue;
                dirs.push_back({a, b});
            }
        const int NS = spec_.n_s, NT = spec_.n_t;
        std::vector<double> y;
        std::vector<std::size_t> idx;
        std::vector<int> stack;
        for (passes_ = 0; passes_ < spec_.max_passes; ++passes_) {
            double change = 0.0;
            for (const auto& d : dirs) {
                // every lattice line in direction d starts at a node whose predecessor is outside
                for (int j0 = 0; j0 < NT; ++j0)
                    for (int i0 = 0; i0 < NS; ++i0) {
                        const int pi = i0 - d[0], pj = j0 - d[1];
                        if (pi >= 0 && pi < NS && pj >= 0 && pj < NT) continue;
                        y.clear();
                        idx.clear();
                        for (int i = i0, j = j0; i >= 0 && i < NS && j >= 0 && j < NT; i += d[0], j += d[1]) {
                            idx.push_back(static_cast<std::size_t>(j) * NS + i);
                            y.push_back(v_[idx.back()]);
                        }
                        const double c = hull_line(y, stack);
                        if (c > 0.0) {
                            change = std::max(change, c);
                            for (std::size_t k = 0; k < idx.size(); ++k) v_[idx[k]] = y[k];
                        }
                    }
            }
            last_change_ = change;
            if (change <= spec_.tolerance) {
                ++passes_;
                break;
            }
        }
    }

    ToricOracleSpec spec_;
    double ds_ = 0.0, dt_ = 0.0;
    std::vector<double> v_;
    int passes_ = 0;
    double last_change_ = 0.0;
};

inline ToricOracle toric_oracle(const ToricOracle::Profile& g0, const ToricOracle::Profile& g1,
                                ToricOracleSpec spec = {}) {
    return ToricOracle(g0, g1, spec);
}

/// Sup and mean of |path - oracle| over interior nodes with |z| >= e^{s_min}
/// (the origin is compared with the oracle's s_min column).
struct OracleComparison {
    double sup = 0.0;
    double mean = 0.0;
};

inline OracleComparison compare_with_oracle(const GeodesicPath& path, const ToricOracle& oracle) {
    const Grid& g = path.grid();
    if (g.n() != 1) throw UsageError("the toric oracle applies to n = 1");
    OracleComparison c;
    std::size_t count = 0;
    for (std::size_t j = 0; j < path.size(); ++j)
        for (std::size_t s = 0; s < g.spatial_count(); ++s) {
            if (!g.spatial_interior(s)) continue;
            const double r = g.norm_z(s);
            if (r > 0.0 && std::log(r) < oracle.s_min()) continue;
            const double e = std::abs(path.slice(j)[s] - oracle.at_radius(r, path.t(j)));
            c.sup = std::max(c.sup, e);
            c.mean += e;
            ++count;
        }
    if (count) c.mean /= static_cast<double>(count);
    return c;
}

}  // namespace mabuchi
