#pragma once

// Discrete complex differential operators on a spatial slice: complex Hessian,
// Monge-Ampere density (normalization dd^c u = (i/pi) d dbar u), Mabuchi
// inner product, gradients, Poisson bracket, covariant derivative and
// curvature along finite-difference path families.

#include "mabuchi/grid.hpp"
#include "mabuchi/lattice.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

namespace mabuchi {

using CMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;
using CVec = Eigen::Matrix<cplx, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;

/// c_n with (dd^c u)^n = c_n det(u_{a bbar}) d(lambda): c_n = n! (2/pi)^n.
inline double ma_constant(int n) {
    double c = 1.0;
    for (int k = 1; k <= n; ++k) c *= k * (2.0 / std::numbers::pi);
    return c;
}

/// Per interior spatial node: the Hermitian matrix (u_{a bbar}), its inverse
/// and least eigenvalue. Non-interior nodes hold zero matrices.
struct HessianField {
    /// Nodes with lambda_min <= ratio * trace are treated as degenerate.
    static constexpr double degeneracy_ratio = 1e-8;

    GridPtr grid;
    std::vector<CMat> matrix;
    std::vector<CMat> inverse;
    std::vector<double> lambda_min;
    std::vector<std::uint8_t> degenerate;
    std::size_t degenerate_count = 0;

    bool usable(std::size_t s) const { return grid->spatial_interior(s) && !degenerate[s]; }
};

inline double least_eigenvalue(const CMat& m) {
    if (m.rows() == 1) return m(0, 0).real();
    Eigen::SelfAdjointEigenSolver<CMat> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline HessianField complex_hessian(const GridFunction& u) {
    if (!u.is_spatial()) throw UsageError("complex_hessian expects a spatial grid function");
    const Grid& g = u.grid();
    const int n = g.n();
    const auto mask = detail::closed_domain_mask(g);
    const auto view = detail::spatial_view(g, u.values(), mask);

    HessianField hf;
    hf.grid = u.grid_ptr();
    const auto S = g.spatial_count();
    hf.matrix.assign(S, CMat::Zero(n, n));
    hf.inverse.assign(S, CMat::Zero(n, n));
    hf.lambda_min.assign(S, 0.0);
    hf.degenerate.assign(S, 0);

    for (std::size_t s = 0; s < S; ++s) {
        if (!g.spatial_interior(s)) continue;
        const auto idx = detail::to_fd_index(g, s);
        CMat m(n, n);
        for (int a = 0; a < n; ++a) {
            const int xa = 2 * a, ya = 2 * a + 1;
            m(a, a) = cplx(0.25 * (view.d2_partial(idx, xa, xa) + view.d2_partial(idx, ya, ya)), 0.0);
            for (int b = a + 1; b < n; ++b) {
                const int xb = 2 * b, yb = 2 * b + 1;
                const double re = view.d2_partial(idx, xa, xb) + view.d2_partial(idx, ya, yb);
                const double im = view.d2_partial(idx, xa, yb) - view.d2_partial(idx, ya, xb);
                m(a, b) = 0.25 * cplx(re, im);
                m(b, a) = std::conj(m(a, b));
            }
        }
        hf.matrix[s] = m;
        const double lmin = least_eigenvalue(m);
        hf.lambda_min[s] = lmin;
        const double tr = m.trace().real();
        if (!(lmin > HessianField::degeneracy_ratio * std::abs(tr)) || tr <= 0.0) {
            hf.degenerate[s] = 1;
            ++hf.degenerate_count;
        } else {
            CMat inv = m.inverse();
            // exact Hermitian symmetry of the inverse
            for (int a = 0; a < n; ++a) {
                inv(a, a) = cplx(inv(a, a).real(), 0.0);
                for (int b = a + 1; b < n; ++b) inv(b, a) = std::conj(inv(a, b));
            }
            hf.inverse[s] = inv;
        }
    }
    return hf;
}

enum class PshCheck { strict, lenient };

/// Spatial function with zero boundary trace and its complex Hessian. In
/// strict mode the Hessian must be positive semidefinite up to tolerance.
class Potential {
public:
    static constexpr double boundary_tolerance = 1e-12;
    static constexpr double psh_tolerance = 1e-7;

    explicit Potential(GridFunction phi, PshCheck check = PshCheck::strict) : phi_(std::move(phi)) {
        if (!phi_.is_spatial()) throw UsageError("a potential lives on a spatial slice");
        const Grid& g = phi_.grid();
        for (std::size_t s = 0; s < g.spatial_count(); ++s)
            if (!g.spatial_interior(s) && std::abs(phi_[s]) > boundary_tolerance)
                throw UsageError("potential must vanish on the spatial boundary");
        hessian_ = complex_hessian(phi_);
        double lmin = std::numeric_limits<double>::infinity();
        double scale = 0.0;
        for (std::size_t s = 0; s < g.spatial_count(); ++s) {
            if (!g.spatial_interior(s)) continue;
            lmin = std::min(lmin, hessian_.lambda_min[s]);
            scale = std::max(scale, std::abs(hessian_.matrix[s].trace().real()));
        }
        lambda_min_ = lmin;
        if (check == PshCheck::strict && lmin < -psh_tolerance * std::max(1.0, scale))
            throw PshViolation("potential is not plurisubharmonic: least Hessian eigenvalue " +
                               std::to_string(lmin));
    }

    /// Boundary values are forced to zero before validation.
    static Potential from_slice(GridFunction phi, PshCheck check = PshCheck::lenient) {
        const Grid& g = phi.grid();
        for (std::size_t s = 0; s < g.spatial_count(); ++s)
            if (!g.spatial_interior(s)) phi[s] = 0.0;
        return Potential(std::move(phi), check);
    }

    template <class F>
    static Potential from_function(GridPtr grid, F&& f, PshCheck check = PshCheck::strict) {
        auto u = GridFunction::spatial_from(grid, std::forward<F>(f));
        return from_slice(std::move(u), check);
    }

    const GridFunction& values() const { return phi_; }
    const HessianField& hessian() const { return hessian_; }
    const Grid& grid() const { return phi_.grid(); }
    const GridPtr& grid_ptr() const { return phi_.grid_ptr(); }
    /// Least eigenvalue over interior nodes; > 0 certifies strict membership.
    double lambda_min() const { return lambda_min_; }
    bool strictly_psh() const { return lambda_min_ > 0.0; }

private:
    GridFunction phi_;
    HessianField hessian_;
    double lambda_min_ = 0.0;
};

inline const HessianField& complex_hessian(const Potential& phi) { return phi.hessian(); }

/// Trapezoidal quadrature over interior nodes; boundary values count as zero.
inline double integrate(const GridFunction& f) {
    if (!f.is_spatial()) throw UsageError("integrate expects a spatial grid function");
    const Grid& g = f.grid();
    const double cell = std::pow(g.h(), g.real_dims());
    double sum = 0.0;
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (g.spatial_interior(s)) sum += f[s];
    return sum * cell;
}

/// Fraction of each node's cell [x - h/2, x + h/2]^d lying in Omega, estimated
/// by midpoint subsampling on cells that straddle the boundary.
inline std::vector<double> cell_fractions(const Grid& g) {
    const int dims = g.real_dims();
    const int m = dims == 2 ? 16 : 4;
    const double h = g.h();
    std::vector<double> w(g.spatial_count(), 0.0);
    std::size_t total = 1;
    for (int d = 0; d < dims; ++d) total *= static_cast<std::size_t>(m);
    for (std::size_t s = 0; s < g.spatial_count(); ++s) {
        const auto x = g.coords(s);
        int corners_in = 0;
        for (int c = 0; c < (1 << dims); ++c) {
            auto y = x;
            for (int d = 0; d < dims; ++d) y[d] += ((c >> d) & 1 ? 0.5 : -0.5) * h;
            corners_in += g.inside_closed(y, 0.0) ? 1 : 0;
        }
        if (corners_in == (1 << dims)) {
            w[s] = 1.0;
            continue;
        }
        if (corners_in == 0 && g.defining(x) > 2.0 * h) continue;
        std::size_t hits = 0;
        for (std::size_t k = 0; k < total; ++k) {
            auto y = x;
            std::size_t r = k;
            for (int d = 0; d < dims; ++d) {
                y[d] += ((static_cast<double>(r % m) + 0.5) / m - 0.5) * h;
                r /= m;
            }
            hits += g.inside_open(y, 0.0) ? 1 : 0;
        }
        w[s] = static_cast<double>(hits) / static_cast<double>(total);
    }
    return w;
}

/// Discrete volume of Omega.
inline double domain_volume(const Grid& g) {
    return static_cast<double>(g.interior_spatial_count()) * std::pow(g.h(), g.real_dims());
}

struct DensityReport {
    GridFunction density;
    std::size_t violations = 0;  // nodes with det below -tolerance * scale
    double most_negative = 0.0;
};

/// Raw density c_n det(u_{a bbar}); never clamped.
inline DensityReport ma_density_report(const Potential& phi, double tolerance = 1e-6) {
    const Grid& g = phi.grid();
    const int n = g.n();
    const double cn = ma_constant(n);
    DensityReport rep{GridFunction(phi.grid_ptr(), SliceTag::spatial), 0, 0.0};
    for (std::size_t s = 0; s < g.spatial_count(); ++s) {
        if (!g.spatial_interior(s)) continue;
        const CMat& m = phi.hessian().matrix[s];
        const double det = m.determinant().real();
        const double scale = std::pow(std::abs(m.trace().real()) / n, n);
        rep.density[s] = cn * det;
        if (det < -tolerance * std::max(scale, 1e-12)) {
            ++rep.violations;
            rep.most_negative = std::min(rep.most_negative, det);
        }
    }
    return rep;
}

inline GridFunction ma_density(const Potential& phi) {
    auto rep = ma_density_report(phi);
    if (rep.violations > 0)
        throw PshViolation("negative Monge-Ampere density at " + std::to_string(rep.violations) + " nodes");
    return std::move(rep.density);
}

/// Density after clamping negative eigenvalues to zero, with the clamped-node count.
inline DensityReport clamped_ma_density(const Potential& phi) {
    const Grid& g = phi.grid();
    const int n = g.n();
    const double cn = ma_constant(n);
    DensityReport rep{GridFunction(phi.grid_ptr(), SliceTag::spatial), 0, 0.0};
    for (std::size_t s = 0; s < g.spatial_count(); ++s) {
        if (!g.spatial_interior(s)) continue;
        Eigen::SelfAdjointEigenSolver<CMat> es(phi.hessian().matrix[s], Eigen::EigenvaluesOnly);
        double det = 1.0;
        bool clamped = false;
        for (int k = 0; k < n; ++k) {
            const double ev = es.eigenvalues()(k);
            if (ev < 0.0) clamped = true;
            det *= std::max(ev, 0.0);
        }
        if (clamped) ++rep.violations;
        rep.density[s] = cn * det;
    }
    return rep;
}

/// <<psi1, psi2>>_phi = int psi1 psi2 (dd^c phi)^n.
inline double inner_product(const GridFunction& psi1, const GridFunction& psi2, const Potential& phi) {
    psi1.check_compatible(psi2);
    const auto dens = ma_density_report(phi).density;
    const Grid& g = phi.grid();
    GridFunction prod(phi.grid_ptr(), SliceTag::spatial);
    for (std::size_t s = 0; s < g.spatial_count(); ++s) prod[s] = psi1[s] * psi2[s] * dens[s];
    return integrate(prod);
}

/// (d psi / d z_a) at every interior node.
inline std::vector<std::array<cplx, 2>> complex_gradient(const GridFunction& psi) {
    if (!psi.is_spatial()) throw UsageError("complex_gradient expects a spatial grid function");
    const Grid& g = psi.grid();
    const auto mask = detail::closed_domain_mask(g);
    const auto view = detail::spatial_view(g, psi.values(), mask);
    std::vector<std::array<cplx, 2>> out(g.spatial_count(), {cplx{}, cplx{}});
    for (std::size_t s = 0; s < g.spatial_count(); ++s) {
        if (!g.spatial_interior(s)) continue;
        const auto idx = detail::to_fd_index(g, s);
        for (int a = 0; a < g.n(); ++a)
            out[s][a] = 0.5 * cplx(view.d1(idx, 2 * a), -view.d1(idx, 2 * a + 1));
    }
    return out;
}

namespace detail {

/// p^* M q for n <= 2.
inline cplx hermitian_pair(const std::array<cplx, 2>& p, const CMat& m, const std::array<cplx, 2>& q, int n) {
    cplx acc{};
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) acc += std::conj(p[a]) * m(a, b) * q[b];
    return acc;
}

}  // namespace detail

/// <grad psi, grad theta>_phi = Re(psi_z^* (phi_{a bbar})^{-1} theta_z); zero at degenerate nodes.
inline GridFunction gradient_inner(const GridFunction& psi, const GridFunction& theta, const Potential& phi) {
    const auto gp = complex_gradient(psi);
    const auto gt = complex_gradient(theta);
    const Grid& g = phi.grid();
    const auto& hf = phi.hessian();
    GridFunction out(phi.grid_ptr(), SliceTag::spatial);
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (hf.usable(s)) out[s] = detail::hermitian_pair(gp[s], hf.inverse[s], gt[s], g.n()).real();
    return out;
}

/// |grad psi|^2_phi.
inline GridFunction gradient_norm_sq(const GridFunction& psi, const Potential& phi) {
    const auto gp = complex_gradient(psi);
    const Grid& g = phi.grid();
    const auto& hf = phi.hessian();
    GridFunction out(phi.grid_ptr(), SliceTag::spatial);
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (hf.usable(s)) out[s] = std::max(0.0, detail::hermitian_pair(gp[s], hf.inverse[s], gp[s], g.n()).real());
    return out;
}

/// {psi, theta}_phi = i phi^{a bbar}(psi_bbar theta_a - psi_a theta_bbar)
///                  = -2 Im(psi_z^* M theta_z), antisymmetrized so that
/// {psi, theta} = -{theta, psi} holds bit-exactly.
inline GridFunction poisson_bracket(const GridFunction& psi, const GridFunction& theta, const Potential& phi) {
    const auto gp = complex_gradient(psi);
    const auto gt = complex_gradient(theta);
    const Grid& g = phi.grid();
    const auto& hf = phi.hessian();
    GridFunction out(phi.grid_ptr(), SliceTag::spatial);
    for (std::size_t s = 0; s < g.spatial_count(); ++s) {
        if (!hf.usable(s)) continue;
        const double f1 = -2.0 * detail::hermitian_pair(gp[s], hf.inverse[s], gt[s], g.n()).imag();
        const double f2 = -2.0 * detail::hermitian_pair(gt[s], hf.inverse[s], gp[s], g.n()).imag();
        out[s] = 0.5 * (f1 - f2);
    }
    return out;
}

/// Multiplier in R(phi_t, phi_s) psi = c {{phi_t, phi_s}, psi} for the
/// commutator D_t D_s - D_s D_t of the connection D psi = psi' - <grad psi, grad phi'>.
inline constexpr double curvature_bracket_factor = 0.25;

/// Bracket form of the curvature tensor at phi.
inline GridFunction curvature_bracket(const GridFunction& a, const GridFunction& b, const GridFunction& psi,
                                      const Potential& phi) {
    auto r = poisson_bracket(poisson_bracket(a, b, phi), psi, phi);
    r *= curvature_bracket_factor;
    return r;
}

/// K(psi1, psi2) = <<R(psi1, psi2) psi2, psi1>> = -c ||{psi1, psi2}||^2 <= 0.
inline double sectional_curvature(const Potential& phi, const GridFunction& psi1, const GridFunction& psi2) {
    const auto b = poisson_bracket(psi1, psi2, phi);
    const double nb = inner_product(b, b, phi);
    return -curvature_bracket_factor * std::max(0.0, nb);
}

/// Up to three-parameter family of potentials on a uniform parameter lattice,
/// with optional vector fields psi sampled on the same index set. Members
/// are stored row-major in (p0, p1, p2).
class PathFamily {
public:
    using Index = std::array<int, 3>;

    PathFamily(std::vector<Potential> members, std::vector<GridFunction> fields, std::array<int, 3> extent,
               std::array<double, 3> step, int params)
        : members_(std::move(members)), fields_(std::move(fields)), extent_(extent), step_(step), params_(params) {
        if (params_ < 1 || params_ > 3) throw UsageError("path family needs 1 to 3 parameters");
        std::size_t total = 1;
        for (int p = 0; p < params_; ++p) {
            if (extent_[p] < 3) throw UsageError("path family needs at least 3 samples per parameter");
            total *= static_cast<std::size_t>(extent_[p]);
        }
        for (int p = params_; p < 3; ++p) extent_[p] = 1;
        if (members_.size() != total) throw UsageError("path family member count mismatch");
        if (!fields_.empty() && fields_.size() != total) throw UsageError("path family field count mismatch");
        for (const auto& m : members_)
            if (m.grid().spec() != members_.front().grid().spec()) throw UsageError("family members on different grids");
    }

    /// Samples f(p0, p1, p2) -> potential / field at parameters k * step.
    template <class PhiFn, class PsiFn>
    static PathFamily sample(GridPtr grid, int params, std::array<int, 3> extent, std::array<double, 3> step,
                             PhiFn&& phi_fn, PsiFn&& psi_fn, PshCheck check = PshCheck::strict) {
        std::vector<Potential> members;
        std::vector<GridFunction> fields;
        for (int p = params; p < 3; ++p) extent[p] = 1;
        for (int i = 0; i < extent[0]; ++i)
            for (int j = 0; j < extent[1]; ++j)
                for (int k = 0; k < extent[2]; ++k) {
                    const std::array<double, 3> par{i * step[0], j * step[1], k * step[2]};
                    members.push_back(Potential::from_function(
                        grid, [&](const std::array<cplx, 2>& z) { return phi_fn(z, par); }, check));
                    auto f = GridFunction::spatial_from(grid, [&](const std::array<cplx, 2>& z) { return psi_fn(z, par); });
                    for (std::size_t s = 0; s < grid->spatial_count(); ++s)
                        if (!grid->spatial_interior(s)) f[s] = 0.0;
                    fields.push_back(std::move(f));
                }
        return PathFamily(std::move(members), std::move(fields), extent, step, params);
    }

    int params() const { return params_; }
    const std::array<int, 3>& extent() const { return extent_; }
    double step(int p) const { return step_[p]; }
    bool has_fields() const { return !fields_.empty(); }
    std::size_t flat(const Index& i) const {
        for (int p = 0; p < 3; ++p)
            if (i[p] < 0 || i[p] >= extent_[p]) throw UsageError("path family index out of range");
        return (static_cast<std::size_t>(i[0]) * extent_[1] + i[1]) * extent_[2] + i[2];
    }
    const Potential& phi(const Index& i) const { return members_[flat(i)]; }
    const GridFunction& psi(const Index& i) const {
        if (fields_.empty()) throw UsageError("path family has no vector fields");
        return fields_[flat(i)];
    }
    Index center() const { return {extent_[0] / 2, extent_[1] / 2, extent_[2] / 2}; }

    static Index shift(Index i, int axis, int k) {
        i[axis] += k;
        return i;
    }

    /// Centered derivative of the potentials along one parameter.
    GridFunction phi_dot(const Index& i, int axis) const {
        auto d = phi(shift(i, axis, 1)).values() - phi(shift(i, axis, -1)).values();
        d *= 1.0 / (2.0 * step_[axis]);
        return d;
    }

    /// Mixed centered derivative d^2 phi / dp_a dp_b.
    GridFunction phi_mixed(const Index& i, int a, int b) const {
        auto d = phi(shift(shift(i, a, 1), b, 1)).values() - phi(shift(shift(i, a, 1), b, -1)).values() -
                 phi(shift(shift(i, a, -1), b, 1)).values() + phi(shift(shift(i, a, -1), b, -1)).values();
        d *= 1.0 / (4.0 * step_[a] * step_[b]);
        return d;
    }

private:
    std::vector<Potential> members_;
    std::vector<GridFunction> fields_;
    std::array<int, 3> extent_;
    std::array<double, 3> step_;
    int params_;
};

using FieldAt = std::function<GridFunction(const PathFamily::Index&)>;

/// D_axis X at index i for a field X sampled at i and i +- e_axis:
/// dX/dp - <grad X, grad dphi/dp>_phi.
inline GridFunction covariant_derivative_at(const PathFamily& fam, int axis, const PathFamily::Index& i,
                                            const FieldAt& field) {
    auto dx = field(PathFamily::shift(i, axis, 1)) - field(PathFamily::shift(i, axis, -1));
    dx *= 1.0 / (2.0 * fam.step(axis));
    const auto& phi = fam.phi(i);
    dx -= gradient_inner(field(i), fam.phi_dot(i, axis), phi);
    const Grid& g = phi.grid();
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (!g.spatial_interior(s)) dx[s] = 0.0;
    return dx;
}

/// D psi along a one-parameter family at every interior parameter index.
inline std::vector<GridFunction> covariant_derivative(const PathFamily& fam) {
    if (!fam.has_fields()) throw UsageError("covariant_derivative needs attached vector fields");
    std::vector<GridFunction> out;
    const FieldAt psi = [&](const PathFamily::Index& i) { return fam.psi(i); };
    for (int k = 1; k + 1 < fam.extent()[0]; ++k) out.push_back(covariant_derivative_at(fam, 0, {k, 0, 0}, psi));
    return out;
}

enum class CurvatureMode { bracket, commutator };

/// R(phi_t, phi_s) psi at the centre of a two-parameter family (t = p0, s = p1).
inline GridFunction curvature_tensor(const PathFamily& fam, CurvatureMode mode = CurvatureMode::bracket) {
    if (fam.params() < 2) throw UsageError("curvature_tensor needs a two-parameter family");
    const auto c = fam.center();
    if (mode == CurvatureMode::bracket)
        return curvature_bracket(fam.phi_dot(c, 0), fam.phi_dot(c, 1), fam.psi(c), fam.phi(c));
    const FieldAt psi = [&](const PathFamily::Index& i) { return fam.psi(i); };
    const FieldAt ds_psi = [&](const PathFamily::Index& i) { return covariant_derivative_at(fam, 1, i, psi); };
    const FieldAt dt_psi = [&](const PathFamily::Index& i) { return covariant_derivative_at(fam, 0, i, psi); };
    return covariant_derivative_at(fam, 0, c, ds_psi) - covariant_derivative_at(fam, 1, c, dt_psi);
}

/// Sup-norm over usable interior nodes, optionally restricted to |z| <= radius.
inline double interior_sup(const GridFunction& f, const HessianField& hf, double radius = 1.0) {
    const Grid& g = f.grid();
    double m = 0.0;
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (hf.usable(s) && g.norm_z(s) <= radius) m = std::max(m, std::abs(f[s]));
    return m;
}

/// Sup-norm of (D_r R)(phi_t, phi_s) psi at the centre of a three-parameter
/// family (t, s, r) = (p0, p1, p2), evaluated with the bracket form of R and
/// restricted to |z| <= radius.
inline double local_symmetry_residual(const PathFamily& fam, double radius = 1.0) {
    if (fam.params() < 3) throw UsageError("local_symmetry_residual needs a three-parameter family");
    const auto c = fam.center();
    const FieldAt r_psi = [&](const PathFamily::Index& i) {
        return curvature_bracket(fam.phi_dot(i, 0), fam.phi_dot(i, 1), fam.psi(i), fam.phi(i));
    };
    const FieldAt psi = [&](const PathFamily::Index& i) { return fam.psi(i); };
    const auto& phi = fam.phi(c);
    const auto phi_t = fam.phi_dot(c, 0);
    const auto phi_s = fam.phi_dot(c, 1);
    const auto phi_r = fam.phi_dot(c, 2);

    const auto d_r_rpsi = covariant_derivative_at(fam, 2, c, r_psi);
    auto dr_phi_t = fam.phi_mixed(c, 0, 2) - gradient_inner(phi_t, phi_r, phi);
    auto dr_phi_s = fam.phi_mixed(c, 1, 2) - gradient_inner(phi_s, phi_r, phi);
    const auto dr_psi = covariant_derivative_at(fam, 2, c, psi);

    auto res = d_r_rpsi;
    res -= curvature_bracket(dr_phi_t, phi_s, fam.psi(c), phi);
    res -= curvature_bracket(phi_t, dr_phi_s, fam.psi(c), phi);
    res -= curvature_bracket(phi_t, phi_s, dr_psi, phi);
    return interior_sup(res, phi.hessian(), radius);
}

}  // namespace mabuchi
