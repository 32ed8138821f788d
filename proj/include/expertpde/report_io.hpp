// SPDX-License-Identifier: MIT
/**
 * @file report_io.hpp
 * @brief Plot-ready CSV/JSON serialization of reports. Data files carry no
 *        wall-clock values, so identical runs produce identical bytes.
 */
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "expertpde/analysis.hpp"

namespace expertpde {

namespace detail {

/// Shortest round-trippable decimal form of a double.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec <= 16; ++prec) {
            char probe[32];
            std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
            std::sscanf(probe, "%lf", &back);
            if (back == v) return probe;
        }
    }
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace detail

inline std::string optimality_csv(const StrategyReport& report) {
    std::string s = "strategy_id,bits,min,mean,max,is_comb,nodes_evaluated,nodes_skipped\n";
    for (const StrategyScore& sc : report.strategies) {
        s += std::to_string(sc.id) + "," + sc.bits + "," + detail::fmt_double(sc.min_score) +
             "," + detail::fmt_double(sc.mean_score) + "," + detail::fmt_double(sc.max_score) +
             "," + (sc.is_comb ? "1" : "0") + "," + std::to_string(report.nodes_evaluated) + "," +
             std::to_string(report.nodes_skipped) + "\n";
    }
    return s;
}

inline void write_optimality_csv(const StrategyReport& report, const std::filesystem::path& path) {
    detail::write_text_file(path, optimality_csv(report));
}

inline std::string convergence_csv(const ConvergenceStudy& study) {
    std::string s = "h,m,sup_error,fitted_slope,oracle\n";
    for (const ConvergenceRow& r : study.rows)
        s += detail::fmt_double(r.h) + "," + std::to_string(r.m) + "," +
             detail::fmt_double(r.sup_error) + "," + detail::fmt_double(r.fitted_slope) + "," +
             study.oracle + "\n";
    return s;
}

inline void write_convergence_csv(const ConvergenceStudy& study,
                                  const std::filesystem::path& path) {
    detail::write_text_file(path, convergence_csv(study));
}

inline std::string localization_csv(const std::vector<LocalizationRow>& rows) {
    std::string s = "box,sup_difference\n";
    for (const LocalizationRow& r : rows)
        s += detail::fmt_double(r.box) + "," + detail::fmt_double(r.sup_difference) + "\n";
    return s;
}

inline void write_localization_csv(const std::vector<LocalizationRow>& rows,
                                   const std::filesystem::path& path) {
    detail::write_text_file(path, localization_csv(rows));
}

inline nlohmann::json to_json(const PropertyReport& report) {
    nlohmann::json checks = nlohmann::json::array();
    for (const PropertyCheck& c : report.checks)
        checks.push_back({{"name", c.name},
                          {"passed", c.passed},
                          {"observed", c.observed},
                          {"threshold", c.threshold}});
    return {{"all_passed", report.all_passed},
            {"residual", report.residual_value},
            {"checks", checks}};
}

inline nlohmann::json to_json(const GridConfig& cfg, GridKind kind) {
    return {{"n_experts", cfg.n_experts},
            {"dim", cfg.dim},
            {"m", cfg.m},
            {"h", cfg.h},
            {"box", cfg.box()},
            {"grid_kind", kind == GridKind::sector ? "sector" : "full"}};
}

}  // namespace expertpde
