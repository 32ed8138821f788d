// SPDX-License-Identifier: MIT
/**
 * @file stencil.hpp
 * @brief Second-difference stencils on the sector grid.
 *
 * For an interior sector node x and a nonzero binary direction v, the plus
 * neighbor x + v leaves the sector only by losing its ordering, and the
 * minus neighbor x - v additionally may pick up trailing -1 entries. Both
 * are folded back with sort_point/lift; a lift records a correction flag
 * worth -h on the looked-up value.
 */
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "expertpde/grid.hpp"
#include "expertpde/parallel.hpp"

namespace expertpde {

struct StencilEntry {
    std::uint32_t plus_rank = 0;
    std::uint32_t minus_rank = 0;
    std::uint8_t correction = 0;  ///< 1 when the minus neighbor was lifted
};

/// Direction masks: bit k (LSB first) set means coordinate k+1 moves.
/// Valid masks are 1 .. 2^dim - 1; mask 0 (the zero direction) has an
/// identically zero second difference and is handled analytically.
inline int direction_count(int dim) { return (1 << dim) - 1; }

/// Resolves the plus/minus neighbor ranks of an interior node along a
/// binary direction. Throws for boundary nodes (i_1 = m).
inline StencilEntry resolve_neighbors(const SectorGrid& grid, const Coords& node,
                                      std::uint32_t dir_mask) {
    const int d = grid.dim();
    if (dir_mask == 0 || dir_mask >= (1u << d))
        throw std::invalid_argument("resolve_neighbors: direction mask out of range");
    if (!grid.in_sector(node))
        throw std::invalid_argument("resolve_neighbors: node outside sector");
    if (node[0] > grid.m() - 1)
        throw std::invalid_argument("resolve_neighbors: boundary node has no stencil");

    Coords plus{}, minus{};
    for (int k = 0; k < d; ++k) {
        const std::int32_t vk = (dir_mask >> k) & 1u;
        plus[k] = node[k] + vk;
        minus[k] = node[k] - vk;
    }
    plus = sort_point(plus, d);
    const LiftResult lifted = lift(sort_point(minus, d), d);

    StencilEntry e;
    e.plus_rank = static_cast<std::uint32_t>(grid.rank(plus));
    e.minus_rank = static_cast<std::uint32_t>(grid.rank(lifted.coords));
    e.correction = lifted.corrected ? 1 : 0;
    return e;
}

/**
 * Precomputed stencil table over all (interior rank, direction) pairs,
 * stored node-major as parallel arrays. Content is a pure function of the
 * grid; construction may be partitioned by rank ranges.
 */
class StencilTable {
public:
    static std::uint64_t bytes_per_entry() {
        return 2 * sizeof(std::uint32_t) + sizeof(std::uint8_t);
    }

    static std::uint64_t estimate_bytes(const SectorGrid& grid) {
        return grid.interior_count() * static_cast<std::uint64_t>(direction_count(grid.dim())) *
               bytes_per_entry();
    }

    static StencilTable build(const SectorGrid& grid, int workers = 1) {
        if (grid.count() > std::numeric_limits<std::uint32_t>::max())
            throw std::invalid_argument("StencilTable: grid too large for 32-bit ranks");
        StencilTable t;
        t.n_interior_ = grid.interior_count();
        t.n_dirs_ = direction_count(grid.dim());
        const std::uint64_t total = t.n_interior_ * static_cast<std::uint64_t>(t.n_dirs_);
        t.plus_.resize(total);
        t.minus_.resize(total);
        t.corr_.resize(total);
        parallel_ranges(t.n_interior_, workers, [&](std::uint64_t b, std::uint64_t e, int) {
            Coords node = grid.unrank(b);
            for (std::uint64_t r = b; r < e; ++r) {
                const std::uint64_t base = r * t.n_dirs_;
                for (std::uint32_t mask = 1; mask <= static_cast<std::uint32_t>(t.n_dirs_);
                     ++mask) {
                    const StencilEntry s = resolve_neighbors(grid, node, mask);
                    t.plus_[base + mask - 1] = s.plus_rank;
                    t.minus_[base + mask - 1] = s.minus_rank;
                    t.corr_[base + mask - 1] = s.correction;
                }
                grid.next_node(node);
            }
        });
        return t;
    }

    std::uint64_t interior_count() const { return n_interior_; }
    int n_dirs() const { return n_dirs_; }
    std::uint64_t entries() const { return plus_.size(); }
    std::uint64_t bytes() const { return entries() * bytes_per_entry(); }

    StencilEntry at(std::uint64_t interior_rank, std::uint32_t dir_mask) const {
        if (interior_rank >= n_interior_ || dir_mask == 0 ||
            dir_mask > static_cast<std::uint32_t>(n_dirs_))
            throw std::invalid_argument("StencilTable::at: key out of range");
        const std::uint64_t i = interior_rank * n_dirs_ + dir_mask - 1;
        return {plus_[i], minus_[i], corr_[i]};
    }

    const std::uint32_t* plus_data() const { return plus_.data(); }
    const std::uint32_t* minus_data() const { return minus_.data(); }
    const std::uint8_t* corr_data() const { return corr_.data(); }

private:
    std::uint64_t n_interior_ = 0;
    int n_dirs_ = 0;
    std::vector<std::uint32_t> plus_;
    std::vector<std::uint32_t> minus_;
    std::vector<std::uint8_t> corr_;
};

/// Builds the table when the estimate fits the byte budget; an empty result
/// signals that the caller should resolve stencils on the fly.
inline std::optional<StencilTable> build_stencils(const SectorGrid& grid,
                                                  std::uint64_t memory_budget_bytes,
                                                  int workers = 1) {
    if (StencilTable::estimate_bytes(grid) > memory_budget_bytes) return std::nullopt;
    return StencilTable::build(grid, workers);
}

}  // namespace expertpde
