// SPDX-License-Identifier: MIT
/**
 * @file analysis.hpp
 * @brief Experiment layer: adversary-strategy optimality scores, player
 *        strategies, convergence and localization studies, and solution
 *        property audits.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "expertpde/closed_form.hpp"
#include "expertpde/field.hpp"
#include "expertpde/solver.hpp"

namespace expertpde {

// --- adversary strategy identifiers ---------------------------------------

/// A full-space adversary direction: binary vector over the n experts,
/// named by the decimal value of its bits read most-significant-first.
/// A direction and its complement act identically, so the canonical
/// representative is the one whose leading bit is 0 (id < 2^(n-1)).
struct StrategyId {
    std::uint32_t id = 0;
    std::vector<std::uint8_t> bits;  ///< bits[i] is the entry for expert i+1

    std::string bit_string() const {
        std::string s(bits.size(), '0');
        for (std::size_t i = 0; i < bits.size(); ++i) s[i] = bits[i] ? '1' : '0';
        return s;
    }
};

/// Canonical strategy for a reduced direction mask (bit k of the mask moves
/// reduced coordinate k+1). The full vector appends a trailing 0 for the
/// eliminated expert, then is complemented if its leading bit is 1.
inline StrategyId canonical_strategy(std::uint32_t reduced_mask, int n_experts) {
    const int d = n_experts - 1;
    if (reduced_mask == 0 || reduced_mask >= (1u << d))
        throw std::invalid_argument("canonical_strategy: reduced direction must be nonzero");
    StrategyId s;
    s.bits.assign(n_experts, 0);
    for (int k = 0; k < d; ++k) s.bits[k] = (reduced_mask >> k) & 1u;
    if (s.bits[0] == 1)
        for (auto& b : s.bits) b = 1 - b;
    for (int i = 0; i < n_experts; ++i)
        s.id = (s.id << 1) | s.bits[i];
    return s;
}

/// The alternating strategy (0,1,0,1,...) over the regret-sorted experts.
inline StrategyId comb_strategy(int n_experts) {
    if (n_experts < 2) throw std::invalid_argument("comb_strategy: need at least 2 experts");
    StrategyId s;
    s.bits.assign(n_experts, 0);
    for (int i = 1; i < n_experts; i += 2) s.bits[i] = 1;
    for (int i = 0; i < n_experts; ++i) s.id = (s.id << 1) | s.bits[i];
    return s;
}

// --- optimality scores -----------------------------------------------------

struct StrategyScore {
    std::uint32_t id = 0;
    std::string bits;
    bool is_comb = false;
    double min_score = 0.0;
    double mean_score = 0.0;
    double max_score = 0.0;
};

struct StrategyReport {
    GridConfig config;
    double region_bound = 0.0;
    std::uint64_t nodes_evaluated = 0;
    std::uint64_t nodes_skipped = 0;
    std::vector<StrategyScore> strategies;  ///< ascending id
    std::string warning;                    ///< empty when the field converged
};

namespace detail {

/// Largest sector index with real coordinate <= bound.
inline std::int64_t region_index_limit(double bound, double h) {
    return static_cast<std::int64_t>(std::floor(bound / h + 1e-9));
}

}  // namespace detail

/**
 * Per-strategy optimality over the sector nodes whose real coordinates all
 * lie within region_bound. A strategy's score at a node is its second
 * difference divided by the largest second difference over all strategies
 * there, so the best strategy scores exactly 1 at every node. Nodes where
 * that denominator is within 10x the residual tolerance are skipped (the
 * ratio degenerates to 0/0) and counted.
 */
inline StrategyReport optimality_report(const Field& f, double region_bound,
                                        double residual_tolerance = -1.0) {
    const SectorGrid grid = sector_grid(f);
    const GridConfig& cfg = f.config;
    if (f.values.size() != grid.count())
        throw std::invalid_argument("optimality_report: field size does not match grid");
    const double h = cfg.h;
    const double tol = residual_tolerance > 0.0 ? residual_tolerance : h * h / 100.0;
    const std::int64_t limit = detail::region_index_limit(region_bound, h);
    if (limit < 0) throw std::invalid_argument("optimality_report: empty evaluation region");
    if (limit > cfg.m - 1)
        throw std::invalid_argument("optimality_report: region_bound must be <= box - h");

    const int d = cfg.dim;
    const int n_dirs = direction_count(d);
    const std::uint64_t region_count = grid.binom(limit + d, d);

    struct Acc {
        double min = std::numeric_limits<double>::infinity();
        double max = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
    };
    std::vector<Acc> acc(n_dirs);

    StrategyReport report;
    report.config = cfg;
    report.region_bound = region_bound;

    const double inv_h2 = 1.0 / (h * h);
    std::vector<double> diffs(n_dirs);
    Coords node{};
    for (std::uint64_t r = 0; r < region_count; ++r) {
        const double wr = f.values[r];
        double den = 0.0;  // the zero direction's contribution
        for (std::uint32_t mask = 1; mask <= static_cast<std::uint32_t>(n_dirs); ++mask) {
            const StencilEntry e = resolve_neighbors(grid, node, mask);
            const double s = detail::second_difference_unscaled(
                f.values[e.plus_rank], f.values[e.minus_rank], e.correction, wr, h);
            diffs[mask - 1] = s;
            if (s > den) den = s;
        }
        grid.next_node(node);
        if (den * inv_h2 <= 10.0 * tol) {
            ++report.nodes_skipped;
            continue;
        }
        ++report.nodes_evaluated;
        for (int j = 0; j < n_dirs; ++j) {
            const double score = diffs[j] / den;
            acc[j].min = std::min(acc[j].min, score);
            acc[j].max = std::max(acc[j].max, score);
            acc[j].sum += score;
        }
    }
    if (report.nodes_evaluated == 0)
        throw std::invalid_argument("optimality_report: no evaluable nodes in region");

    const StrategyId comb = comb_strategy(cfg.n_experts);
    for (std::uint32_t mask = 1; mask <= static_cast<std::uint32_t>(n_dirs); ++mask) {
        const StrategyId sid = canonical_strategy(mask, cfg.n_experts);
        StrategyScore sc;
        sc.id = sid.id;
        sc.bits = sid.bit_string();
        sc.is_comb = (sid.id == comb.id);
        sc.min_score = acc[mask - 1].min;
        sc.max_score = acc[mask - 1].max;
        sc.mean_score = acc[mask - 1].sum / static_cast<double>(report.nodes_evaluated);
        report.strategies.push_back(std::move(sc));
    }
    std::sort(report.strategies.begin(), report.strategies.end(),
              [](const StrategyScore& a, const StrategyScore& b) { return a.id < b.id; });

    const double res = residual(f);
    if (!(res <= tol))
        report.warning = "field residual " + std::to_string(res) +
                         " exceeds tolerance " + std::to_string(tol);
    return report;
}

// --- player strategy --------------------------------------------------------

/// Probability weights over the n experts at an interior sector node:
/// forward difference quotients of the solution along each reduced axis,
/// with the eliminated expert receiving the complement so the components
/// sum to 1 exactly.
inline std::vector<double> player_strategy(const Field& f, const Coords& node) {
    const SectorGrid grid = sector_grid(f);
    const GridConfig& cfg = f.config;
    if (!grid.in_sector(node) || node[0] > cfg.m - 1)
        throw std::invalid_argument("player_strategy: need an interior sector node");
    const std::uint64_t r = grid.rank(node);
    std::vector<double> alpha(cfg.n_experts, 0.0);
    double sum = 0.0;
    for (int k = 0; k < cfg.dim; ++k) {
        Coords plus = node;
        plus[k] += 1;
        const std::uint64_t pr = grid.rank(sort_point(plus, cfg.dim));
        alpha[k] = (f.values[pr] - f.values[r]) / cfg.h;
        sum += alpha[k];
    }
    alpha[cfg.n_experts - 1] = 1.0 - sum;
    return alpha;
}

// --- convergence studies -----------------------------------------------------

struct ConvergenceRow {
    std::int64_t m = 0;
    double h = 0.0;
    double sup_error = 0.0;
    double fitted_slope = 0.0;  ///< common log-log OLS slope across all rows
};

struct ConvergenceStudy {
    std::vector<ConvergenceRow> rows;  ///< sorted by decreasing h
    double fitted_slope = 0.0;
    std::string oracle;  ///< "closed-form" or "reference h=<spacing>"
};

namespace detail {

inline double fit_loglog_slope(const std::vector<ConvergenceRow>& rows) {
    const std::size_t n = rows.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& r : rows) {
        const double x = std::log(r.h), y = std::log(r.sup_error);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    return (n * sxy - sx * sy) / denom;
}

inline std::vector<GridConfig> sorted_resolutions(std::span<const GridConfig> resolutions) {
    if (resolutions.size() < 2)
        throw std::invalid_argument("convergence_study: need at least 2 resolutions");
    std::vector<GridConfig> sorted(resolutions.begin(), resolutions.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const GridConfig& a, const GridConfig& b) { return a.h > b.h; });
    return sorted;
}

inline double sector_region_sup_error(const Field& f, double region_bound,
                                      const std::function<double(std::span<const double>)>& ref) {
    const SectorGrid grid = sector_grid(f);
    const int d = f.config.dim;
    const std::int64_t limit = region_index_limit(region_bound, f.config.h);
    const std::uint64_t region_count = grid.binom(limit + d, d);
    double err = 0.0;
    Coords c{};
    std::array<double, kMaxDim> xr{};
    for (std::uint64_t r = 0; r < region_count; ++r) {
        for (int k = 0; k < d; ++k) xr[k] = f.config.h * c[k];
        err = std::max(err, std::fabs(f.values[r] - ref(std::span<const double>(xr.data(), d))));
        grid.next_node(c);
    }
    return err;
}

}  // namespace detail

/// Solves at each resolution and reports the sup error against the exact
/// solution over the region, plus the fitted log-log convergence slope.
/// Requires n_experts <= 4 (where an exact solution exists).
inline ConvergenceStudy convergence_study(int n_experts, std::span<const GridConfig> resolutions,
                                          double region_bound, const SolveOptions& opt = {}) {
    if (n_experts > 4)
        throw std::invalid_argument(
            "convergence_study: no exact solution above 4 experts; supply a reference field");
    ConvergenceStudy study;
    study.oracle = "closed-form";
    for (const GridConfig& cfg : detail::sorted_resolutions(resolutions)) {
        if (cfg.n_experts != n_experts)
            throw std::invalid_argument("convergence_study: resolution expert count mismatch");
        const SolveResult sol = solve_sector(cfg, opt);
        ConvergenceRow row;
        row.m = cfg.m;
        row.h = cfg.h;
        row.sup_error = detail::sector_region_sup_error(
            sol.field, region_bound,
            [n_experts](std::span<const double> x) { return exact_reduced(n_experts, x); });
        study.rows.push_back(row);
    }
    study.fitted_slope = detail::fit_loglog_slope(study.rows);
    for (auto& r : study.rows) r.fitted_slope = study.fitted_slope;
    return study;
}

/// Convergence study against a finest-grid reference field (for expert
/// counts with no exact solution). Every resolution's node set must embed
/// in the reference grid: same box, reference m divisible by each m.
inline ConvergenceStudy convergence_study_vs_reference(const Field& reference,
                                                       std::span<const GridConfig> resolutions,
                                                       double region_bound,
                                                       const SolveOptions& opt = {}) {
    const SectorGrid ref_grid = sector_grid(reference);
    const GridConfig& ref_cfg = reference.config;
    ConvergenceStudy study;
    study.oracle = "reference h=" + std::to_string(ref_cfg.h);
    for (const GridConfig& cfg : detail::sorted_resolutions(resolutions)) {
        if (cfg.n_experts != ref_cfg.n_experts)
            throw std::invalid_argument("convergence_study: reference expert count mismatch");
        if (ref_cfg.m % cfg.m != 0)
            throw std::invalid_argument(
                "convergence_study: reference resolution must refine each grid (m | ref m)");
        if (std::fabs(cfg.box() - ref_cfg.box()) > 1e-9 * ref_cfg.box())
            throw std::invalid_argument("convergence_study: reference box mismatch");
        const std::int64_t stride = ref_cfg.m / cfg.m;
        const SolveResult sol = solve_sector(cfg, opt);
        const SectorGrid grid(cfg);

        const std::int64_t limit = detail::region_index_limit(region_bound, cfg.h);
        const std::uint64_t region_count = grid.binom(limit + cfg.dim, cfg.dim);
        double err = 0.0;
        Coords c{};
        for (std::uint64_t r = 0; r < region_count; ++r) {
            Coords rc{};
            for (int k = 0; k < cfg.dim; ++k)
                rc[k] = static_cast<std::int32_t>(c[k] * stride);
            err = std::max(err,
                           std::fabs(sol.field.values[r] - reference.values[ref_grid.rank(rc)]));
            grid.next_node(c);
        }
        ConvergenceRow row;
        row.m = cfg.m;
        row.h = cfg.h;
        row.sup_error = err;
        study.rows.push_back(row);
    }
    study.fitted_slope = detail::fit_loglog_slope(study.rows);
    for (auto& r : study.rows) r.fitted_slope = study.fitted_slope;
    return study;
}

// --- localization study -------------------------------------------------------

struct LocalizationRow {
    double box = 0.0;             ///< actual box half-width m*h
    double sup_difference = 0.0;  ///< over nodes with coordinates <= region_bound
};

/// Solves twice per box size (Dirichlet data payoff vs payoff + delta) and
/// records how far the boundary perturbation reaches into the region.
inline std::vector<LocalizationRow> localization_study(int n_experts, double h,
                                                       std::span<const double> boxes, double delta,
                                                       double region_bound = 1.0,
                                                       const SolveOptions& opt = {}) {
    if (!(delta > 0.0)) throw std::invalid_argument("localization_study: delta must be > 0");
    std::vector<LocalizationRow> rows;
    for (const double box : boxes) {
        const auto m = static_cast<std::int64_t>(std::ceil(box / h - 1e-9));
        const GridConfig cfg = GridConfig::make(n_experts, m, h);
        SolveOptions base = opt;
        base.boundary_offset = 0.0;
        SolveOptions shifted = opt;
        shifted.boundary_offset = delta;
        const SolveResult a = solve_sector(cfg, base);
        const SolveResult b = solve_sector(cfg, shifted);

        const SectorGrid grid(cfg);
        const std::int64_t limit = detail::region_index_limit(region_bound, h);
        const std::uint64_t region_count = grid.binom(limit + cfg.dim, cfg.dim);
        double diff = 0.0;
        for (std::uint64_t r = 0; r < region_count; ++r)
            diff = std::max(diff, std::fabs(a.field.values[r] - b.field.values[r]));
        rows.push_back({cfg.box(), diff});
    }
    std::sort(rows.begin(), rows.end(),
              [](const LocalizationRow& a, const LocalizationRow& b) { return a.box < b.box; });
    return rows;
}

// --- property audit -------------------------------------------------------------

struct PropertyCheck {
    std::string name;
    bool passed = false;
    double observed = 0.0;   ///< worst-case value over the audited set
    double threshold = 0.0;  ///< bound the observed value is held to
};

struct PropertyReport {
    std::vector<PropertyCheck> checks;
    bool all_passed = false;
    double residual_value = 0.0;
};

/**
 * Audits a solved field against the structural bounds its limit solution
 * satisfies: residual level, dominance over the payoff, the directional
 * Lipschitz bound, and discrete convexity on the localized region.
 * Failures are report entries, never exceptions.
 *
 * The Lipschitz bound holds over the whole sector solve; on the full grid
 * the exposed box corners develop a Dirichlet boundary layer with steeper
 * steps, so there the check is confined to the localized region (like the
 * convexity check, which needs it on both grids).
 */
inline PropertyReport property_report(const Field& f, double residual_tolerance = -1.0,
                                      double region_bound = 1.0) {
    const GridConfig& cfg = f.config;
    const double h = cfg.h;
    const double tol = residual_tolerance > 0.0 ? residual_tolerance : h * h / 100.0;
    const int d = cfg.dim;
    const double inv_h2 = 1.0 / (h * h);

    PropertyReport report;
    const double res = residual(f);
    report.residual_value = res;
    report.checks.push_back({"residual", res <= tol, res, tol});

    // payoff dominance: min(w - g) over every node
    double min_gap = std::numeric_limits<double>::infinity();
    // directional Lipschitz: max |one-sided difference| over interior nodes
    double max_step = 0.0;
    // discrete convexity: min scaled second difference over the region
    double min_hess = std::numeric_limits<double>::infinity();

    std::array<double, kMaxDim> xr{};
    if (f.kind == GridKind::sector) {
        const SectorGrid grid(cfg);
        const std::uint64_t n_int = grid.interior_count();
        const std::int64_t limit = detail::region_index_limit(region_bound, h);
        Coords c{};
        for (std::uint64_t r = 0; r < grid.count(); ++r) {
            for (int k = 0; k < d; ++k) xr[k] = h * c[k];
            min_gap = std::min(min_gap,
                               f.values[r] - max_payoff(std::span<const double>(xr.data(), d)));
            if (r < n_int) {
                const double wr = f.values[r];
                const bool in_region = c[0] <= limit;
                for (std::uint32_t mask = 1; mask < (1u << d); ++mask) {
                    const StencilEntry e = resolve_neighbors(grid, c, mask);
                    const double up = f.values[e.plus_rank] - wr;
                    const double down =
                        f.values[e.minus_rank] - h * static_cast<double>(e.correction) - wr;
                    max_step = std::max({max_step, std::fabs(up), std::fabs(down)});
                    if (in_region) min_hess = std::min(min_hess, (up + down) * inv_h2);
                }
            }
            grid.next_node(c);
        }
    } else {
        const FullGrid grid(cfg);
        Coords c = grid.first_node();
        for (std::uint64_t r = 0; r < grid.count(); ++r) {
            for (int k = 0; k < d; ++k) xr[k] = h * c[k];
            min_gap = std::min(min_gap,
                               f.values[r] - max_payoff(std::span<const double>(xr.data(), d)));
            if (grid.is_interior(c)) {
                const double wr = f.values[r];
                bool in_region = true;
                for (int k = 0; k < d; ++k)
                    if (std::abs(c[k]) > detail::region_index_limit(region_bound, h))
                        in_region = false;
                if (in_region) {
                    for (std::uint32_t mask = 1; mask < (1u << d); ++mask) {
                        std::uint64_t off = 0;
                        for (int k = 0; k < d; ++k)
                            if ((mask >> k) & 1u) off += grid.stride(k);
                        const double up = f.values[r + off] - wr;
                        const double down = f.values[r - off] - wr;
                        max_step = std::max({max_step, std::fabs(up), std::fabs(down)});
                        min_hess = std::min(min_hess, (up + down) * inv_h2);
                    }
                }
            }
            grid.next_node(c);
        }
    }

    report.checks.push_back({"lower_bound", min_gap >= -tol, min_gap, -tol});
    report.checks.push_back(
        {"directional_lipschitz", max_step <= h + 2.0 * tol, max_step, h + 2.0 * tol});
    report.checks.push_back(
        {"discrete_convexity", min_hess >= -4.0 * tol * inv_h2, min_hess, -4.0 * tol * inv_h2});

    report.all_passed = true;
    for (const auto& c : report.checks) report.all_passed = report.all_passed && c.passed;
    return report;
}

/// Sup |w - exact| over the nodes whose real coordinates all lie within
/// region_bound (in absolute value for full grids). Needs n_experts <= 4.
inline double closed_form_sup_error(const Field& f, double region_bound) {
    const GridConfig& cfg = f.config;
    if (cfg.n_experts > 4)
        throw std::invalid_argument("closed_form_sup_error: no exact solution above 4 experts");
    const int d = cfg.dim;
    const double h = cfg.h;
    const std::int64_t limit = detail::region_index_limit(region_bound, h);
    std::array<double, kMaxDim> xr{};
    double err = 0.0;
    if (f.kind == GridKind::sector) {
        const SectorGrid grid(cfg);
        const std::uint64_t region_count = grid.binom(limit + d, d);
        Coords c{};
        for (std::uint64_t r = 0; r < region_count; ++r) {
            for (int k = 0; k < d; ++k) xr[k] = h * c[k];
            err = std::max(err, std::fabs(f.values[r] -
                                          exact_reduced(cfg.n_experts,
                                                        std::span<const double>(xr.data(), d))));
            grid.next_node(c);
        }
        return err;
    }
    const FullGrid grid(cfg);
    Coords c = grid.first_node();
    for (std::uint64_t r = 0; r < grid.count(); ++r) {
        bool in_region = true;
        for (int k = 0; k < d; ++k)
            if (std::abs(c[k]) > limit) in_region = false;
        if (in_region) {
            for (int k = 0; k < d; ++k) xr[k] = h * c[k];
            err = std::max(err, std::fabs(f.values[r] -
                                          exact_reduced(cfg.n_experts,
                                                        std::span<const double>(xr.data(), d))));
        }
        grid.next_node(c);
    }
    return err;
}

// --- solver cross-validation ------------------------------------------------------

/// Sup difference between a sector solution and a full-grid solution on the
/// sector nodes they share within region_bound. Both fields must describe
/// the same instance. The two solvers pin Dirichlet data at different
/// places (the plane x_1 = T versus the shell at T + h), so their boundary
/// layers disagree at O(h) near the box edge; the comparison is meaningful
/// on the localized region where that influence has decayed.
inline double sector_vs_full_difference(const Field& sector_field, const Field& full_field,
                                        double region_bound = 1.0) {
    const SectorGrid sgrid = sector_grid(sector_field);
    const FullGrid fgrid = full_grid(full_field);
    if (!(sector_field.config == full_field.config))
        throw std::invalid_argument("sector_vs_full_difference: configurations differ");
    const GridConfig& cfg = sector_field.config;
    const std::int64_t limit =
        std::min<std::int64_t>(detail::region_index_limit(region_bound, cfg.h), cfg.m);
    const std::uint64_t region_count = sgrid.binom(limit + cfg.dim, cfg.dim);
    double diff = 0.0;
    Coords c{};
    for (std::uint64_t r = 0; r < region_count; ++r) {
        diff = std::max(diff,
                        std::fabs(sector_field.values[r] - full_field.values[fgrid.rank(c)]));
        sgrid.next_node(c);
    }
    return diff;
}

}  // namespace expertpde
