// SPDX-License-Identifier: MIT
/**
 * @file solver.hpp
 * @brief Discrete operator and damped Jacobi fixed-point solver.
 *
 * The equation solved at every equation-enforced node is
 *
 *     w = (1/2) * max_v D2_h w(x, v) + g(x),   v over binary directions,
 *
 * where D2_h is the centered second difference along v (with the sector
 * fold-back correction where the stencil leaves the stored sector). The
 * iteration is the damped synchronous sweep
 *
 *     w_{k+1} = (1 - dt) w_k + dt (F(w_k) + g),
 *
 * stopped when the sup-norm residual over equation-enforced nodes drops to
 * the tolerance. With dt <= h^2/(1+h^2) every update coefficient is
 * nonnegative, making the sweep monotone and a (1-dt) sup-norm contraction.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "expertpde/field.hpp"
#include "expertpde/grid.hpp"
#include "expertpde/parallel.hpp"
#include "expertpde/payoff.hpp"
#include "expertpde/stencil.hpp"

namespace expertpde {

/// Largest relaxation step keeping the sweep monotone for this operator.
inline double monotone_dt_bound(double h) { return h * h / (1.0 + h * h); }

struct SolveOptions {
    std::optional<double> dt;                    ///< default: h^2/(1+h^2)
    std::optional<double> residual_tolerance;    ///< default: h^2/100
    std::optional<std::uint64_t> max_iterations; ///< default: contraction estimate, capped at 1e8
    std::uint64_t residual_check_interval = 100;
    std::uint64_t checkpoint_interval = 0;       ///< 0 disables checkpoints
    bool allow_non_monotone = false;             ///< permit dt above the monotone bound
    int workers = 1;                             ///< <= 0: EXPERTPDE_WORKERS env, then hardware
    std::uint64_t stencil_memory_budget = std::uint64_t{8} << 30;
    double boundary_offset = 0.0;                ///< added to Dirichlet data (localization studies)
    const Field* warm_start = nullptr;           ///< resume from a previous iterate
    std::uint64_t iteration_offset = 0;          ///< iterations already spent on the warm start
    std::function<void(const Field&, const struct SolveStats&)> checkpoint_sink;
};

struct SolveStats {
    std::uint64_t iterations = 0;  ///< cumulative, including iteration_offset
    double final_residual = 0.0;
    double dt = 0.0;
    double tolerance = 0.0;
    bool precomputed_stencils = true;
    int workers = 1;
    std::uint64_t allocated_bytes = 0;  ///< solver working-set size (values + buffers + stencils)
};

struct SolveResult {
    Field field;
    SolveStats stats;
};

class SolveFailure : public std::runtime_error {
public:
    SolveFailure(const std::string& msg, double last_residual, std::uint64_t iterations)
        : std::runtime_error(msg), last_residual_(last_residual), iterations_(iterations) {}
    double last_residual() const { return last_residual_; }
    std::uint64_t iterations() const { return iterations_; }

private:
    double last_residual_;
    std::uint64_t iterations_;
};

namespace detail {

// The three expressions below are the single source of the scheme's
// floating-point arithmetic. Every code path (precomputed or on-the-fly
// stencils, sector or full grid, solver or standalone residual) must go
// through them so results stay bit-identical across modes.

inline double second_difference_unscaled(double w_plus, double w_minus, std::uint8_t correction,
                                         double w_center, double h) {
    return w_plus + w_minus - h * static_cast<double>(correction) - 2.0 * w_center;
}

inline double operator_value(double best_unscaled, double half_inv_h2) {
    return best_unscaled * half_inv_h2;  // = (1/2) max(0, best) / h^2
}

inline double jacobi_update(double w_center, double op, double g, double dt) {
    return (1.0 - dt) * w_center + dt * (op + g);
}

inline double equation_residual(double w_center, double op, double g) {
    return std::fabs(w_center - (op + g));
}

// --- sector kernels ------------------------------------------------------

struct SectorKernels {
    const SectorGrid& grid;
    const StencilTable* table;  // nullptr -> resolve on the fly
    double h;
    double half_inv_h2;
    int n_dirs;

    double best_difference_table(std::span<const double> w, std::uint64_t r) const {
        const std::uint32_t* P = table->plus_data();
        const std::uint32_t* Q = table->minus_data();
        const std::uint8_t* C = table->corr_data();
        const double wr = w[r];
        const std::uint64_t base = r * static_cast<std::uint64_t>(n_dirs);
        double best = 0.0;
        for (int j = 0; j < n_dirs; ++j) {
            const double s =
                second_difference_unscaled(w[P[base + j]], w[Q[base + j]], C[base + j], wr, h);
            if (s > best) best = s;
        }
        return best;
    }

    double best_difference_fly(std::span<const double> w, std::uint64_t r,
                               const Coords& node) const {
        const double wr = w[r];
        double best = 0.0;
        for (std::uint32_t mask = 1; mask <= static_cast<std::uint32_t>(n_dirs); ++mask) {
            const StencilEntry e = resolve_neighbors(grid, node, mask);
            const double s =
                second_difference_unscaled(w[e.plus_rank], w[e.minus_rank], e.correction, wr, h);
            if (s > best) best = s;
        }
        return best;
    }

    void sweep(std::span<const double> w, std::span<double> wn, std::span<const double> g,
               double dt, std::uint64_t b, std::uint64_t e) const {
        if (table) {
            for (std::uint64_t r = b; r < e; ++r) {
                const double op = operator_value(best_difference_table(w, r), half_inv_h2);
                wn[r] = jacobi_update(w[r], op, g[r], dt);
            }
        } else {
            Coords node = grid.unrank(b);
            for (std::uint64_t r = b; r < e; ++r) {
                const double op = operator_value(best_difference_fly(w, r, node), half_inv_h2);
                wn[r] = jacobi_update(w[r], op, g[r], dt);
                grid.next_node(node);
            }
        }
    }

    double residual_range(std::span<const double> w, std::span<const double> g, std::uint64_t b,
                          std::uint64_t e) const {
        double res = 0.0;
        if (table) {
            for (std::uint64_t r = b; r < e; ++r) {
                const double op = operator_value(best_difference_table(w, r), half_inv_h2);
                const double t = equation_residual(w[r], op, g[r]);
                if (!(t <= res)) res = t;  // picks up NaN
            }
        } else {
            Coords node = grid.unrank(b);
            for (std::uint64_t r = b; r < e; ++r) {
                const double op = operator_value(best_difference_fly(w, r, node), half_inv_h2);
                const double t = equation_residual(w[r], op, g[r]);
                if (!(t <= res)) res = t;
                grid.next_node(node);
            }
        }
        return res;
    }
};

// --- full-grid kernels ---------------------------------------------------

struct FullKernels {
    const FullGrid& grid;
    const std::vector<std::uint8_t>& interior;  // 1 per rank
    const std::vector<std::uint64_t>& offsets;  // rank offset per direction mask
    double h;
    double half_inv_h2;
    int n_dirs;

    double best_difference(std::span<const double> w, std::uint64_t r) const {
        const double wr = w[r];
        double best = 0.0;
        for (int j = 0; j < n_dirs; ++j) {
            const std::uint64_t off = offsets[j];
            const double s = second_difference_unscaled(w[r + off], w[r - off], 0, wr, h);
            if (s > best) best = s;
        }
        return best;
    }

    void sweep(std::span<const double> w, std::span<double> wn, std::span<const double> g,
               double dt, std::uint64_t b, std::uint64_t e) const {
        for (std::uint64_t r = b; r < e; ++r) {
            if (!interior[r]) continue;
            const double op = operator_value(best_difference(w, r), half_inv_h2);
            wn[r] = jacobi_update(w[r], op, g[r], dt);
        }
    }

    double residual_range(std::span<const double> w, std::span<const double> g, std::uint64_t b,
                          std::uint64_t e) const {
        double res = 0.0;
        for (std::uint64_t r = b; r < e; ++r) {
            if (!interior[r]) continue;
            const double op = operator_value(best_difference(w, r), half_inv_h2);
            const double t = equation_residual(w[r], op, g[r]);
            if (!(t <= res)) res = t;
        }
        return res;
    }
};

inline void validate_options(const SolveOptions& opt, double h, double& dt, double& tol) {
    dt = opt.dt.value_or(monotone_dt_bound(h));
    if (!(dt > 0.0) || dt > 1.0)
        throw std::invalid_argument("SolveOptions: dt must lie in (0, 1]");
    if (dt > monotone_dt_bound(h) * (1.0 + 1e-12) && !opt.allow_non_monotone)
        throw std::invalid_argument(
            "SolveOptions: dt above the monotone bound h^2/(1+h^2); "
            "pass allow_non_monotone to override");
    tol = opt.residual_tolerance.value_or(h * h / 100.0);
    if (!(tol > 0.0)) throw std::invalid_argument("SolveOptions: residual_tolerance must be > 0");
    if (opt.residual_check_interval == 0)
        throw std::invalid_argument("SolveOptions: residual_check_interval must be >= 1");
}

inline std::uint64_t default_max_iterations(double r0, double tol, double dt) {
    // contraction factor (1-dt) per sweep; generous 4x safety margin
    const double sweeps = std::ceil(std::log(r0 / tol) / dt) * 4.0;
    const double capped = std::min(sweeps, 1e8);
    return capped < 1.0 ? 1 : static_cast<std::uint64_t>(capped);
}

// Shared driver: `kern` provides sweep/residual over equation-enforced
// nodes, `n_sweep` is the rank range the sweeps cover.
template <class Kernels>
SolveStats iterate_to_convergence(const Kernels& kern, std::vector<double>& w,
                                  std::vector<double>& wn, const std::vector<double>& g,
                                  std::uint64_t n_sweep, double dt, double tol, int workers,
                                  const SolveOptions& opt, GridKind kind, const GridConfig& cfg) {
    SolveStats stats;
    stats.dt = dt;
    stats.tolerance = tol;
    stats.workers = workers;

    const auto residual_now = [&]() {
        return parallel_max(n_sweep, workers, [&](std::uint64_t b, std::uint64_t e) {
            return kern.residual_range(w, g, b, e);
        });
    };

    double res = residual_now();
    stats.final_residual = res;
    stats.iterations = opt.iteration_offset;
    if (!std::isfinite(res))
        throw SolveFailure("solve: non-finite values in the initial iterate", res,
                           stats.iterations);
    if (res <= tol) return stats;

    const std::uint64_t max_iters =
        opt.max_iterations.value_or(default_max_iterations(res, tol, dt));
    if (max_iters == 0) throw SolveFailure("solve: max_iterations is zero", res, stats.iterations);

    for (std::uint64_t k = 1; k <= max_iters; ++k) {
        parallel_ranges(n_sweep, workers, [&](std::uint64_t b, std::uint64_t e, int) {
            kern.sweep(w, wn, g, dt, b, e);
        });
        w.swap(wn);
        stats.iterations = opt.iteration_offset + k;

        if (opt.checkpoint_interval > 0 && opt.checkpoint_sink &&
            k % opt.checkpoint_interval == 0) {
            Field snap{kind, cfg, w};
            stats.final_residual = res;  // last known value
            opt.checkpoint_sink(snap, stats);
        }

        if (k % opt.residual_check_interval == 0 || k == max_iters) {
            res = residual_now();
            stats.final_residual = res;
            if (!std::isfinite(res))
                throw SolveFailure("solve: non-finite value detected at iteration " +
                                       std::to_string(stats.iterations),
                                   res, stats.iterations);
            if (res <= tol) return stats;
        }
    }
    throw SolveFailure("solve: residual " + std::to_string(res) + " above tolerance " +
                           std::to_string(tol) + " after max_iterations",
                       res, stats.iterations);
}

inline void apply_warm_start(std::vector<double>& w, const SolveOptions& opt, GridKind kind,
                             const GridConfig& cfg, std::uint64_t n_nodes) {
    if (!opt.warm_start) return;
    const Field& ws = *opt.warm_start;
    if (ws.kind != kind || !(ws.config == cfg) || ws.values.size() != n_nodes)
        throw std::invalid_argument("solve: warm start field does not match the grid");
    w = ws.values;
}

}  // namespace detail

// --- standalone operator evaluation --------------------------------------

/// Centered second difference of the field along a binary direction,
/// scaled by 1/h^2. Throws for boundary nodes.
inline double discrete_hessian(const Field& f, std::uint64_t rank, std::uint32_t dir_mask) {
    const double h = f.config.h;
    const double inv_h2 = 1.0 / (h * h);
    if (f.kind == GridKind::sector) {
        const SectorGrid grid(f.config);
        const StencilEntry e = resolve_neighbors(grid, grid.unrank(rank), dir_mask);
        return detail::second_difference_unscaled(f.values[e.plus_rank], f.values[e.minus_rank],
                                                  e.correction, f.values[rank], h) *
               inv_h2;
    }
    const FullGrid grid(f.config);
    const Coords node = grid.unrank(rank);
    if (!grid.is_interior(node))
        throw std::invalid_argument("discrete_hessian: boundary node has no stencil");
    if (dir_mask == 0 || dir_mask >= (1u << grid.dim()))
        throw std::invalid_argument("discrete_hessian: direction mask out of range");
    std::uint64_t off = 0;
    for (int k = 0; k < grid.dim(); ++k)
        if ((dir_mask >> k) & 1u) off += grid.stride(k);
    return detail::second_difference_unscaled(f.values[rank + off], f.values[rank - off], 0,
                                              f.values[rank], h) *
           inv_h2;
}

/// F(w) at a node: half the largest second difference over binary
/// directions, floored at zero (the zero direction contributes 0).
inline double apply_operator(const Field& f, std::uint64_t rank) {
    const double h = f.config.h;
    const double half_inv_h2 = 0.5 / (h * h);
    if (f.kind == GridKind::sector) {
        const SectorGrid grid(f.config);
        detail::SectorKernels kern{grid, nullptr, h, half_inv_h2, direction_count(grid.dim())};
        return detail::operator_value(kern.best_difference_fly(f.values, rank, grid.unrank(rank)),
                                      half_inv_h2);
    }
    const FullGrid grid(f.config);
    const Coords node = grid.unrank(rank);
    if (!grid.is_interior(node))
        throw std::invalid_argument("apply_operator: boundary node has no stencil");
    const int n_dirs = direction_count(grid.dim());
    std::vector<std::uint64_t> offsets(n_dirs);
    for (std::uint32_t mask = 1; mask <= static_cast<std::uint32_t>(n_dirs); ++mask) {
        std::uint64_t off = 0;
        for (int k = 0; k < grid.dim(); ++k)
            if ((mask >> k) & 1u) off += grid.stride(k);
        offsets[mask - 1] = off;
    }
    std::vector<std::uint8_t> dummy;
    detail::FullKernels kern{grid, dummy, offsets, h, half_inv_h2, n_dirs};
    return detail::operator_value(kern.best_difference(f.values, rank), half_inv_h2);
}

/// Sup-norm equation residual over equation-enforced (interior) nodes.
inline double residual(const Field& f, const PayoffFn& payoff) {
    const double h = f.config.h;
    const double half_inv_h2 = 0.5 / (h * h);
    const int d = f.config.dim;
    if (f.kind == GridKind::sector) {
        const SectorGrid grid(f.config);
        if (f.values.size() != grid.count())
            throw std::invalid_argument("residual: field size does not match grid");
        std::vector<double> g(grid.count());
        Coords c{};
        std::array<double, kMaxDim> xr{};
        for (std::uint64_t r = 0; r < grid.count(); ++r) {
            for (int k = 0; k < d; ++k) xr[k] = h * c[k];
            g[r] = payoff(std::span<const double>(xr.data(), d));
            grid.next_node(c);
        }
        detail::SectorKernels kern{grid, nullptr, h, half_inv_h2, direction_count(d)};
        return kern.residual_range(f.values, g, 0, grid.interior_count());
    }
    const FullGrid grid(f.config);
    if (f.values.size() != grid.count())
        throw std::invalid_argument("residual: field size does not match grid");
    std::vector<double> g(grid.count());
    std::vector<std::uint8_t> interior(grid.count());
    Coords c = grid.first_node();
    std::array<double, kMaxDim> xr{};
    for (std::uint64_t r = 0; r < grid.count(); ++r) {
        for (int k = 0; k < d; ++k) xr[k] = h * c[k];
        g[r] = payoff(std::span<const double>(xr.data(), d));
        interior[r] = grid.is_interior(c) ? 1 : 0;
        grid.next_node(c);
    }
    const int n_dirs = direction_count(d);
    std::vector<std::uint64_t> offsets(n_dirs);
    for (std::uint32_t mask = 1; mask <= static_cast<std::uint32_t>(n_dirs); ++mask) {
        std::uint64_t off = 0;
        for (int k = 0; k < d; ++k)
            if ((mask >> k) & 1u) off += grid.stride(k);
        offsets[mask - 1] = off;
    }
    detail::FullKernels kern{grid, interior, offsets, h, half_inv_h2, n_dirs};
    return kern.residual_range(f.values, g, 0, grid.count());
}

inline double residual(const Field& f) {
    return residual(f, [](std::span<const double> x) { return max_payoff(x); });
}

/// Solver working-set estimate: payoff cache + iteration double-buffer +
/// stencil table when it fits the budget. Matches the solver's actual
/// allocation accounting (SolveStats::allocated_bytes).
inline std::uint64_t sector_solver_memory_estimate(const SectorGrid& grid,
                                                   std::uint64_t stencil_memory_budget) {
    const std::uint64_t table = StencilTable::estimate_bytes(grid);
    return 3 * grid.count() * sizeof(double) +
           (table <= stencil_memory_budget ? table : 0);
}

// --- solvers --------------------------------------------------------------

/// Solves the sector-reduced equation. Boundary nodes (first coordinate at
/// the box edge) carry frozen Dirichlet data payoff + boundary_offset; the
/// iteration starts from the payoff unless a warm start is given.
inline SolveResult solve_sector(const GridConfig& cfg, const SolveOptions& opt,
                                const PayoffFn& payoff) {
    const SectorGrid grid(cfg);
    const std::uint64_t n = grid.count();
    const std::uint64_t n_int = grid.interior_count();
    const int workers = resolve_workers(opt.workers);
    const double h = cfg.h;

    double dt = 0.0, tol = 0.0;
    detail::validate_options(opt, h, dt, tol);

    std::vector<double> g(n);
    {
        Coords c{};
        std::array<double, kMaxDim> xr{};
        for (std::uint64_t r = 0; r < n; ++r) {
            for (int k = 0; k < cfg.dim; ++k) xr[k] = h * c[k];
            g[r] = payoff(std::span<const double>(xr.data(), cfg.dim));
            grid.next_node(c);
        }
    }

    std::vector<double> w = g;
    detail::apply_warm_start(w, opt, GridKind::sector, cfg, n);
    for (std::uint64_t r = n_int; r < n; ++r) w[r] = g[r] + opt.boundary_offset;
    std::vector<double> wn = w;

    std::optional<StencilTable> table = build_stencils(grid, opt.stencil_memory_budget, workers);
    detail::SectorKernels kern{grid, table ? &*table : nullptr, h, 0.5 / (h * h),
                               direction_count(cfg.dim)};

    SolveStats stats = detail::iterate_to_convergence(kern, w, wn, g, n_int, dt, tol, workers, opt,
                                                      GridKind::sector, cfg);
    stats.precomputed_stencils = table.has_value();
    stats.allocated_bytes = 3 * n * sizeof(double) + (table ? table->bytes() : 0);
    return {Field{GridKind::sector, cfg, std::move(w)}, stats};
}

inline SolveResult solve_sector(const GridConfig& cfg, const SolveOptions& opt = {}) {
    return solve_sector(cfg, opt, [](std::span<const double> x) { return max_payoff(x); });
}

/// Solves on the full box grid (dim <= 3) with Dirichlet data on the
/// width-1 shell. Used to cross-validate the sector solver.
inline SolveResult solve_full(const GridConfig& cfg, const SolveOptions& opt,
                              const PayoffFn& payoff) {
    const FullGrid grid(cfg);
    const std::uint64_t n = grid.count();
    const int workers = resolve_workers(opt.workers);
    const double h = cfg.h;

    double dt = 0.0, tol = 0.0;
    detail::validate_options(opt, h, dt, tol);

    std::vector<double> g(n);
    std::vector<std::uint8_t> interior(n);
    {
        Coords c = grid.first_node();
        std::array<double, kMaxDim> xr{};
        for (std::uint64_t r = 0; r < n; ++r) {
            for (int k = 0; k < cfg.dim; ++k) xr[k] = h * c[k];
            g[r] = payoff(std::span<const double>(xr.data(), cfg.dim));
            interior[r] = grid.is_interior(c) ? 1 : 0;
            grid.next_node(c);
        }
    }

    std::vector<double> w = g;
    detail::apply_warm_start(w, opt, GridKind::full, cfg, n);
    for (std::uint64_t r = 0; r < n; ++r)
        if (!interior[r]) w[r] = g[r] + opt.boundary_offset;
    std::vector<double> wn = w;

    const int n_dirs = direction_count(cfg.dim);
    std::vector<std::uint64_t> offsets(n_dirs);
    for (std::uint32_t mask = 1; mask <= static_cast<std::uint32_t>(n_dirs); ++mask) {
        std::uint64_t off = 0;
        for (int k = 0; k < cfg.dim; ++k)
            if ((mask >> k) & 1u) off += grid.stride(k);
        offsets[mask - 1] = off;
    }
    detail::FullKernels kern{grid, interior, offsets, h, 0.5 / (h * h), n_dirs};

    SolveStats stats = detail::iterate_to_convergence(kern, w, wn, g, n, dt, tol, workers, opt,
                                                      GridKind::full, cfg);
    stats.precomputed_stencils = false;
    stats.allocated_bytes = 3 * n * sizeof(double) + n;
    return {Field{GridKind::full, cfg, std::move(w)}, stats};
}

inline SolveResult solve_full(const GridConfig& cfg, const SolveOptions& opt = {}) {
    return solve_full(cfg, opt, [](std::span<const double> x) { return max_payoff(x); });
}

}  // namespace expertpde
