// SPDX-License-Identifier: MIT
/**
 * @file grid.hpp
 * @brief Lattice grids for the regret equation: the ordered nonnegative
 *        sector with its rank/unrank bijection, and the boxed full grid.
 *
 * All lattice geometry is carried out in integer index units; a node's real
 * coordinate is h times its index. The sector grid stores only the tuples
 * with non-increasing nonnegative coordinates, ordered lexicographically, so
 * a solution array indexed by rank covers the whole symmetric solution.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace expertpde {

/// Maximum reduced dimension supported (12 experts -> dimension 11).
inline constexpr int kMaxDim = 11;

/// Lattice point in index units. Only the first `dim` entries are meaningful.
using Coords = std::array<std::int32_t, kMaxDim>;

/// Discrete problem instance: number of experts, reduced dimension,
/// per-axis resolution and spacing. The box half-width T is always the
/// exact product m*h and is never stored independently.
struct GridConfig {
    int n_experts = 0;    ///< number of experts n (2..12)
    int dim = 0;          ///< reduced dimension d = n - 1
    std::int64_t m = 0;   ///< lattice nodes per axis above zero (>= 2)
    double h = 0.0;       ///< grid spacing in regret units

    double box() const { return static_cast<double>(m) * h; }

    static GridConfig make(int n_experts, std::int64_t m, double h) {
        if (n_experts < 2 || n_experts > kMaxDim + 1)
            throw std::invalid_argument("GridConfig: n_experts must be in [2, " +
                                        std::to_string(kMaxDim + 1) + "], got " +
                                        std::to_string(n_experts));
        if (m < 2)
            throw std::invalid_argument("GridConfig: m must be >= 2 (one interior layer), got " +
                                        std::to_string(m));
        if (!(h > 0.0))
            throw std::invalid_argument("GridConfig: h must be positive");
        GridConfig cfg;
        cfg.n_experts = n_experts;
        cfg.dim = n_experts - 1;
        cfg.m = m;
        cfg.h = h;
        return cfg;
    }

    bool operator==(const GridConfig&) const = default;
};

/// Number of lattice points with m >= i_1 >= i_2 >= ... >= i_d >= 0,
/// i.e. binomial(m + d, d). Throws std::overflow_error instead of wrapping.
inline std::uint64_t grid_count(int dim, std::int64_t m) {
    if (dim < 1) throw std::invalid_argument("grid_count: dim must be >= 1");
    if (m < 0) throw std::invalid_argument("grid_count: m must be >= 0");
    // running value is the exact binomial C(m + i, i) after each step
    unsigned __int128 r = 1;
    for (int i = 1; i <= dim; ++i) {
        r *= static_cast<unsigned __int128>(m + i);
        r /= static_cast<unsigned>(i);
        if (r > std::numeric_limits<std::uint64_t>::max())
            throw std::overflow_error("grid_count: node count exceeds 64 bits for dim=" +
                                      std::to_string(dim) + " m=" + std::to_string(m));
    }
    return static_cast<std::uint64_t>(r);
}

/// Sorts the first `dim` entries into non-increasing order.
inline Coords sort_point(Coords t, int dim) {
    for (int i = 1; i < dim; ++i) {
        const std::int32_t v = t[i];
        int j = i;
        while (j > 0 && t[j - 1] < v) {
            t[j] = t[j - 1];
            --j;
        }
        t[j] = v;
    }
    return t;
}

struct LiftResult {
    Coords coords;
    bool corrected = false;  ///< true when the point was translated back into the sector
};

/// Maps a non-increasing tuple with trailing -1 entries back into the
/// nonnegative sector by adding (1,...,1) + e_i at the first negative slot.
/// The caller owes a value correction of -h per unit shift wherever this
/// fires. Tuples that are already nonnegative pass through unchanged.
inline LiftResult lift(Coords t, int dim) {
    for (int i = 1; i < dim; ++i)
        if (t[i - 1] < t[i]) throw std::invalid_argument("lift: tuple is not non-increasing");
    int first_neg = -1;
    for (int i = 0; i < dim; ++i) {
        if (t[i] < 0) {
            first_neg = i;
            break;
        }
    }
    if (first_neg < 0) return {t, false};
    for (int i = first_neg; i < dim; ++i)
        if (t[i] != -1) throw std::invalid_argument("lift: negative entries must all equal -1");
    for (int i = 0; i < dim; ++i) t[i] += 1;
    t[first_neg] += 1;
    return {t, true};
}

/**
 * Enumeration of the ordered nonnegative sector {m >= i_1 >= ... >= i_d >= 0}
 * with a rank <-> tuple bijection in ascending lexicographic order.
 *
 * Ranking uses combinatorial-number-system arithmetic (no per-node keys), so
 * grids with 1e8 nodes index in O(d) per query. Because ranks are
 * lexicographic in (i_1, ...), the interior nodes (i_1 <= m-1) occupy the
 * contiguous rank prefix [0, interior_count()).
 */
class SectorGrid {
public:
    explicit SectorGrid(const GridConfig& cfg) : cfg_(cfg) {
        if (cfg.dim < 1 || cfg.dim > kMaxDim)
            throw std::invalid_argument("SectorGrid: dim out of range");
        build_binomials();
        count_ = binom(cfg_.m + cfg_.dim, cfg_.dim);
        interior_count_ = binom(cfg_.m - 1 + cfg_.dim, cfg_.dim);
    }

    const GridConfig& config() const { return cfg_; }
    int dim() const { return cfg_.dim; }
    std::int64_t m() const { return cfg_.m; }
    double h() const { return cfg_.h; }

    std::uint64_t count() const { return count_; }
    std::uint64_t interior_count() const { return interior_count_; }

    bool in_sector(const Coords& c) const {
        if (c[0] > cfg_.m) return false;
        for (int k = 1; k < cfg_.dim; ++k)
            if (c[k - 1] < c[k]) return false;
        return c[cfg_.dim - 1] >= 0;
    }

    /// Position of `c` in ascending lexicographic order over sector tuples.
    std::uint64_t rank(const Coords& c) const {
        if (!in_sector(c)) throw std::invalid_argument("SectorGrid::rank: point outside sector");
        const int d = cfg_.dim;
        std::uint64_t r = 0;
        for (int k = 0; k < d; ++k) r += binom(c[k] + d - 1 - k, d - k);
        return r;
    }

    Coords unrank(std::uint64_t r) const {
        if (r >= count_) throw std::invalid_argument("SectorGrid::unrank: rank out of range");
        const int d = cfg_.dim;
        Coords c{};
        std::uint64_t rem = r;
        std::int64_t cap = cfg_.m;
        for (int k = 0; k < d; ++k) {
            // largest t <= cap with C(t + d-1-k, d-k) <= rem
            std::int64_t lo = 0, hi = cap;
            while (lo < hi) {
                const std::int64_t mid = (lo + hi + 1) / 2;
                if (binom(mid + d - 1 - k, d - k) <= rem)
                    lo = mid;
                else
                    hi = mid - 1;
            }
            c[k] = static_cast<std::int32_t>(lo);
            rem -= binom(lo + d - 1 - k, d - k);
            cap = lo;
        }
        return c;
    }

    /// Advances `c` to its lexicographic successor within the sector.
    /// Returns false (leaving `c` untouched) after the last node.
    bool next_node(Coords& c) const {
        const int d = cfg_.dim;
        for (int k = d - 1; k >= 0; --k) {
            const std::int64_t cap = (k == 0) ? cfg_.m : c[k - 1];
            if (c[k] < cap) {
                ++c[k];
                for (int j = k + 1; j < d; ++j) c[j] = 0;
                return true;
            }
        }
        return false;
    }

    /// Binomial lookup used by rank arithmetic; also handy for callers
    /// partitioning rank ranges. C(a, b) for 0 <= b <= dim, a <= m + dim.
    std::uint64_t binom(std::int64_t a, int b) const {
        if (b < 0 || a < b) return 0;
        if (b == 0) return 1;
        return binom_[static_cast<std::size_t>(a) * (cfg_.dim + 1) + b];
    }

private:
    void build_binomials() {
        const std::int64_t rows = cfg_.m + cfg_.dim + 1;
        const int cols = cfg_.dim + 1;
        binom_.assign(static_cast<std::size_t>(rows) * cols, 0);
        for (std::int64_t a = 0; a < rows; ++a) {
            binom_[static_cast<std::size_t>(a) * cols + 0] = 1;
            for (int b = 1; b <= std::min<std::int64_t>(a, cfg_.dim); ++b) {
                const std::uint64_t x = binom_[static_cast<std::size_t>(a - 1) * cols + b - 1];
                const std::uint64_t y = binom_[static_cast<std::size_t>(a - 1) * cols + b];
                std::uint64_t s = 0;
                if (__builtin_add_overflow(x, y, &s))
                    throw std::overflow_error("SectorGrid: binomial table exceeds 64 bits");
                binom_[static_cast<std::size_t>(a) * cols + b] = s;
            }
        }
        // note binom_[a][b] stays 0 for b > a; binom() guards that case anyway
    }

    GridConfig cfg_;
    std::vector<std::uint64_t> binom_;
    std::uint64_t count_ = 0;
    std::uint64_t interior_count_ = 0;
};

/**
 * Full (unreduced-symmetry) grid on the box: every lattice point with
 * |i_k| <= m + 1, where the outermost layer is the width-1 Dirichlet shell
 * and the nodes with max_k |i_k| <= m are equation-enforced. Row-major rank
 * order with axis 0 most significant. Limited to dim <= 3.
 */
class FullGrid {
public:
    explicit FullGrid(const GridConfig& cfg) : cfg_(cfg) {
        if (cfg.dim < 1 || cfg.dim > 3)
            throw std::invalid_argument("FullGrid: dim must be <= 3");
        side_ = 2 * (cfg.m + 1) + 1;
        std::uint64_t c = 1;
        for (int k = 0; k < cfg.dim; ++k) c *= static_cast<std::uint64_t>(side_);
        count_ = c;
    }

    const GridConfig& config() const { return cfg_; }
    int dim() const { return cfg_.dim; }
    std::int64_t m() const { return cfg_.m; }
    double h() const { return cfg_.h; }
    std::int64_t side() const { return side_; }
    std::uint64_t count() const { return count_; }

    bool contains(const Coords& c) const {
        for (int k = 0; k < cfg_.dim; ++k)
            if (c[k] < -(cfg_.m + 1) || c[k] > cfg_.m + 1) return false;
        return true;
    }

    bool is_interior(const Coords& c) const {
        for (int k = 0; k < cfg_.dim; ++k)
            if (c[k] < -cfg_.m || c[k] > cfg_.m) return false;
        return true;
    }

    std::uint64_t rank(const Coords& c) const {
        if (!contains(c)) throw std::invalid_argument("FullGrid::rank: point outside grid");
        std::uint64_t r = 0;
        for (int k = 0; k < cfg_.dim; ++k)
            r = r * static_cast<std::uint64_t>(side_) +
                static_cast<std::uint64_t>(c[k] + cfg_.m + 1);
        return r;
    }

    Coords unrank(std::uint64_t r) const {
        if (r >= count_) throw std::invalid_argument("FullGrid::unrank: rank out of range");
        Coords c{};
        for (int k = cfg_.dim - 1; k >= 0; --k) {
            c[k] = static_cast<std::int32_t>(r % static_cast<std::uint64_t>(side_)) -
                   static_cast<std::int32_t>(cfg_.m + 1);
            r /= static_cast<std::uint64_t>(side_);
        }
        return c;
    }

    /// Rank stride of +1 along axis k.
    std::uint64_t stride(int k) const {
        std::uint64_t s = 1;
        for (int j = cfg_.dim - 1; j > k; --j) s *= static_cast<std::uint64_t>(side_);
        return s;
    }

    bool next_node(Coords& c) const {
        for (int k = cfg_.dim - 1; k >= 0; --k) {
            if (c[k] < cfg_.m + 1) {
                ++c[k];
                for (int j = k + 1; j < cfg_.dim; ++j) c[j] = -(cfg_.m + 1);
                return true;
            }
        }
        return false;
    }

    Coords first_node() const {
        Coords c{};
        for (int k = 0; k < cfg_.dim; ++k) c[k] = static_cast<std::int32_t>(-(cfg_.m + 1));
        return c;
    }

private:
    GridConfig cfg_;
    std::int64_t side_ = 0;
    std::uint64_t count_ = 0;
};

}  // namespace expertpde
