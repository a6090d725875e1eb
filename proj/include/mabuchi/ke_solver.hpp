#pragma once

#include "mabuchi/functionals.hpp"
#include "mabuchi/grid.hpp"
#include "mabuchi/ma_kernels.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <numbers>
#include <vector>

namespace mabuchi {

/// Shortley-Weller five-point Laplacian on the unit disc with homogeneous
/// Dirichlet data on the circle. Near-boundary arms are shortened to the
/// exact crossing point, so quadratics are reproduced exactly.
class DiscLaplacian {
public:
    explicit DiscLaplacian(GridPtr grid) : grid_(std::move(grid)) {
        const Grid& g = *grid_;
        if (g.n() != 1 || g.spec().domain != DomainKind::unit_disc)
            throw ConfigError("the Dirichlet Poisson solver supports the unit disc only");
        const auto S = g.spatial_count();
        unknown_.assign(S, -1);
        for (std::size_t s = 0; s < S; ++s)
            if (g.spatial_interior(s)) {
                unknown_[s] = static_cast<int>(nodes_.size());
                nodes_.push_back(s);
            }
        const int N = static_cast<int>(nodes_.size());
        const double h = g.h();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(N) * 5);
        for (int r = 0; r < N; ++r) {
            const std::size_t s = nodes_[r];
            const auto idx = g.multi_index(s);
            const auto x = g.coords(s);
            double diag = 0.0;
            for (int d = 0; d < 2; ++d) {
                const double other = x[1 - d];
                const double reach = std::sqrt(std::max(0.0, 1.0 - other * other));
                double arm[2];
                int col[2];
                for (int side = 0; side < 2; ++side) {
                    const int sg = side == 0 ? 1 : -1;
                    auto nb = idx;
                    nb[d] += sg;
                    const std::size_t q = g.spatial_index(nb);
                    if (unknown_[q] >= 0) {
                        arm[side] = h;
                        col[side] = unknown_[q];
                    } else {
                        arm[side] = std::max(reach - sg * x[d], 1e-3 * h);
                        col[side] = -1;
                    }
                }
                const double a = arm[0], b = arm[1];
                const double ce = 2.0 / (a * (a + b)), cw = 2.0 / (b * (a + b));
                diag -= 2.0 / (a * b);
                if (col[0] >= 0) trip.emplace_back(r, col[0], ce);
                if (col[1] >= 0) trip.emplace_back(r, col[1], cw);
            }
            trip.emplace_back(r, r, diag);
        }
        A_.resize(N, N);
        A_.setFromTriplets(trip.begin(), trip.end());
        A_.makeCompressed();
        lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
        lu_->analyzePattern(A_);
        lu_->factorize(A_);
        if (lu_->info() != Eigen::Success) throw NumericalError("Laplacian factorization failed");
    }

    const Grid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }

    /// Solves Delta phi = rhs (interior nodes), phi = 0 on the boundary.
    GridFunction solve(const GridFunction& rhs, double* relative_residual = nullptr) const {
        const int N = static_cast<int>(nodes_.size());
        Eigen::VectorXd b(N);
        for (int r = 0; r < N; ++r) b[r] = rhs[nodes_[r]];
        Eigen::VectorXd x = lu_->solve(b);
        if (lu_->info() != Eigen::Success || !x.allFinite()) throw NumericalError("Laplacian solve failed");
        const double rel = (A_ * x - b).norm() / std::max(b.norm(), 1e-300);
        if (relative_residual) *relative_residual = rel;
        GridFunction phi(grid_, SliceTag::spatial);
        for (int r = 0; r < N; ++r) phi[nodes_[r]] = x[r];
        return phi;
    }

    /// Discrete Laplacian at interior nodes (zero elsewhere).
    GridFunction apply(const GridFunction& phi) const {
        const int N = static_cast<int>(nodes_.size());
        Eigen::VectorXd x(N);
        for (int r = 0; r < N; ++r) x[r] = phi[nodes_[r]];
        const Eigen::VectorXd y = A_ * x;
        GridFunction out(grid_, SliceTag::spatial);
        for (int r = 0; r < N; ++r) out[nodes_[r]] = y[r];
        return out;
    }

private:
    GridPtr grid_;
    std::vector<int> unknown_;
    std::vector<std::size_t> nodes_;
    Eigen::SparseMatrix<double> A_;
    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

/// Solves dd^c phi = f d(lambda), i.e. Delta phi = 2 pi f, with zero boundary values.
inline GridFunction dirichlet_poisson(const DiscLaplacian& lap, const GridFunction& f) {
    const Grid& g = lap.grid();
    double fmax = 0.0;
    for (std::size_t s = 0; s < g.spatial_count(); ++s) {
        if (!g.spatial_interior(s)) continue;
        if (f[s] < 0.0) throw UsageError("dirichlet_poisson expects a nonnegative density");
        fmax = std::max(fmax, f[s]);
    }
    double rel = 0.0;
    auto phi = lap.solve((2.0 * std::numbers::pi) * f, &rel);
    if (rel > 1e-10 && fmax > 0.0) throw NumericalError("Poisson solve residual " + std::to_string(rel));
    return phi;
}

inline GridFunction dirichlet_poisson(const GridFunction& f) { return dirichlet_poisson(DiscLaplacian(f.grid_ptr()), f); }

struct KEConfig {
    double tolerance = 1e-6;  // sup-norm of the density residual
    int max_iterations = 500;
    double damping = 0.5;
    double damping_growth = 1.25;  // applied after each residual decrease, capped at 1
    int patience = 25;             // consecutive increases before declaring divergence
    double blowup = 1e6;
};

struct KESolveReport {
    double t = 0.0;
    std::vector<double> trace;  // residual before each update
    bool converged = false;
    bool diverged = false;
    int iterations = 0;
    GridFunction phi;
    double residual = 0.0;
    double ding = 0.0;
    double mass = 0.0;              // int Delta phi / (2 pi)
    double symmetry_defect = 0.0;   // sup |phi(x, y) - phi(-y, x)|
    double final_damping = 0.0;
};

namespace detail {

/// Gibbs density e^{-t phi} mu / int e^{-t phi} mu with respect to Lebesgue
/// measure, normalized so that its interior quadrature is exactly 1.
inline GridFunction gibbs_density(const GridFunction& phi, double t) {
    const Grid& g = phi.grid();
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (g.spatial_interior(s)) m = std::max(m, -t * phi[s]);
    GridFunction rho(phi.grid_ptr(), SliceTag::spatial);
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (g.spatial_interior(s)) rho[s] = std::exp(-t * phi[s] - m);
    const double z = integrate(rho);
    for (std::size_t s = 0; s < g.spatial_count(); ++s) rho[s] /= z;
    return rho;
}

inline double quarter_turn_defect(const GridFunction& phi) {
    const Grid& g = phi.grid();
    double d = 0.0;
    const int P = g.per_axis();
    for (std::size_t s = 0; s < g.spatial_count(); ++s) {
        const auto idx = g.multi_index(s);
        auto rot = idx;
        rot[0] = P - 1 - idx[1];
        rot[1] = idx[0];
        d = std::max(d, std::abs(phi[s] - phi[g.spatial_index(rot)]));
    }
    return d;
}

}  // namespace detail

/// sup over interior nodes of |Delta phi / (2 pi) - e^{-t phi} mu / int e^{-t phi} mu|.
inline double ke_residual(const DiscLaplacian& lap, const GridFunction& phi, double t) {
    const Grid& g = lap.grid();
    const auto L = lap.apply(phi);
    const auto rho = detail::gibbs_density(phi, t);
    double r = 0.0;
    for (std::size_t s = 0; s < g.spatial_count(); ++s)
        if (g.spatial_interior(s)) r = std::max(r, std::abs(L[s] / (2.0 * std::numbers::pi) - rho[s]));
    return r;
}

/// Damped fixed point phi <- (1 - theta) phi + theta P(e^{-t phi} mu / int e^{-t phi} mu) for (MA)_t at n = 1.
inline KESolveReport solve_ma_t(const DiscLaplacian& lap, double t, const KEConfig& cfg = {}) {
    if (!(t > 0.0)) throw UsageError("solve_ma_t requires t > 0");
    if (!(cfg.tolerance > 0.0) || cfg.max_iterations < 1 || !(cfg.damping > 0.0 && cfg.damping <= 1.0))
        throw ConfigError("invalid KE solver configuration");
    KESolveReport rep;
    rep.t = t;
    GridFunction phi(lap.grid_ptr(), SliceTag::spatial);
    double theta = cfg.damping;
    double prev = std::numeric_limits<double>::infinity();
    int rising = 0;
    for (int k = 0; k < cfg.max_iterations; ++k) {
        const double res = ke_residual(lap, phi, t);
        rep.trace.push_back(res);
        if (!std::isfinite(res) || res > cfg.blowup) {
            rep.diverged = true;
            break;
        }
        if (res <= cfg.tolerance) {
            rep.converged = true;
            break;
        }
        if (res < prev) {
            rising = 0;
            theta = std::min(1.0, theta * cfg.damping_growth);
        } else if (++rising >= cfg.patience) {
            rep.diverged = true;
            break;
        }
        prev = res;
        const auto target = dirichlet_poisson(lap, detail::gibbs_density(phi, t));
        phi = (1.0 - theta) * phi + theta * target;
        ++rep.iterations;
    }
    rep.residual = rep.trace.back();
    rep.final_damping = theta;
    rep.phi = phi;
    rep.ding = ding(phi, t);
    rep.mass = integrate(lap.apply(phi)) / (2.0 * std::numbers::pi);
    rep.symmetry_defect = detail::quarter_turn_defect(phi);
    return rep;
}

inline KESolveReport solve_ma_t(GridPtr grid, double t, const KEConfig& cfg = {}) {
    return solve_ma_t(DiscLaplacian(std::move(grid)), t, cfg);
}

struct MaximizerReport {
    double reference = 0.0;          // F_t(phi_t)
    std::vector<double> margins;     // F_t(phi_t) - F_t(psi)
    double worst = 0.0;
    bool pass = true;
};

inline MaximizerReport maximizer_check(const GridFunction& phi_t, const std::vector<GridFunction>& family, double t,
                                       double tolerance = 1e-4) {
    if (family.empty()) throw UsageError("maximizer_check needs a nonempty family");
    MaximizerReport rep;
    rep.reference = ding(phi_t, t);
    rep.worst = std::numeric_limits<double>::infinity();
    for (const auto& psi : family) {
        psi.check_compatible(phi_t);
        const double m = rep.reference - ding(psi, t);
        rep.margins.push_back(m);
        rep.worst = std::min(rep.worst, m);
    }
    rep.pass = rep.worst >= -tolerance;
    return rep;
}

struct ThresholdEntry {
    double t = 0.0;
    bool converged = false;
    bool diverged = false;
    int iterations = 0;
    double residual = 0.0;
};

struct ThresholdReport {
    std::vector<ThresholdEntry> entries;
    std::optional<double> empirical_onset;  // first t in the scan that failed to converge
    double analytic_threshold = 16.0;       // (2n)^{1+1/n} (1+1/n)^{1+1/n} at n = 1
};

inline ThresholdReport threshold_scan(const DiscLaplacian& lap, const std::vector<double>& ts, const KEConfig& cfg = {}) {
    if (!std::is_sorted(ts.begin(), ts.end())) throw UsageError("threshold_scan expects ascending t values");
    ThresholdReport rep;
    for (double t : ts) {
        const auto r = solve_ma_t(lap, t, cfg);
        rep.entries.push_back({t, r.converged, r.diverged, r.iterations, r.residual});
        if (!r.converged && !rep.empirical_onset) rep.empirical_onset = t;
    }
    return rep;
}

}  // namespace mabuchi
