// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "expertpde/grid.hpp"

namespace expertpde {

enum class GridKind : std::uint32_t { sector = 0, full = 1 };

/// One scalar value per grid node, stored in ascending rank order.
struct Field {
    GridKind kind = GridKind::sector;
    GridConfig config;
    std::vector<double> values;
};

inline SectorGrid sector_grid(const Field& f) {
    if (f.kind != GridKind::sector)
        throw std::invalid_argument("expected a sector field");
    return SectorGrid(f.config);
}

inline FullGrid full_grid(const Field& f) {
    if (f.kind != GridKind::full)
        throw std::invalid_argument("expected a full-grid field");
    return FullGrid(f.config);
}

inline std::uint64_t expected_count(GridKind kind, const GridConfig& cfg) {
    return kind == GridKind::sector ? grid_count(cfg.dim, cfg.m) : FullGrid(cfg).count();
}

}  // namespace expertpde
