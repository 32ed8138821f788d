// SPDX-License-Identifier: MIT
/**
 * @file cli.hpp
 * @brief Command-line surface: solve / verify / optimality / convergence /
 *        localization / grid-info subcommands, each writing its data files
 *        plus a JSON run manifest.
 *
 * Data files are byte-reproducible for identical invocations; wall-clock
 * timestamps appear only in manifests.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "expertpde/analysis.hpp"
#include "expertpde/report_io.hpp"
#include "expertpde/snapshot.hpp"
#include "expertpde/solver.hpp"
#include "expertpde/version.hpp"

namespace expertpde::cli {

namespace detail {

using nlohmann::json;

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Rounds a requested box half-width up to a whole number of grid cells,
/// warning when the request was not already a multiple of h.
inline std::int64_t resolve_box(double box, double h) {
    if (!(box > 0.0)) throw std::invalid_argument("--box must be positive");
    if (!(h > 0.0)) throw std::invalid_argument("--resolution must be positive");
    const auto m = static_cast<std::int64_t>(std::ceil(box / h - 1e-9));
    if (std::fabs(static_cast<double>(m) * h - box) > 1e-9 * std::max(1.0, box))
        std::cerr << "warning: box " << box << " is not a multiple of h=" << h
                  << "; rounded up to " << static_cast<double>(m) * h << " (m=" << m << ")\n";
    return m;
}

struct ManifestWriter {
    json doc;
    std::filesystem::path path;

    ManifestWriter(const std::string& command, const std::vector<std::string>& argv) {
        doc["command"] = command;
        doc["argv"] = argv;
        doc["library_version"] = kVersion;
        doc["started_at"] = utc_timestamp();
        doc["outputs"] = json::array();
    }

    void add_output(const std::filesystem::path& p) { doc["outputs"].push_back(p.string()); }

    void finish(const std::string& status) {
        if (path.empty()) return;
        doc["status"] = status;
        doc["finished_at"] = utc_timestamp();
        expertpde::detail::write_text_file(path, doc.dump(2) + "\n");
    }
};

inline std::vector<double> parse_double_list(const std::string& csv, const char* flag) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        const std::string tok = csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw std::invalid_argument(std::string(flag) + ": cannot parse '" + tok + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw std::invalid_argument(std::string(flag) + ": empty list");
    return out;
}

}  // namespace detail

/// Entry point shared by the binary and the tests. `args` are the
/// command-line arguments without the program name. Returns the exit code.
inline int run_command(const std::vector<std::string>& args) {
    using detail::json;

    CLI::App app{"Solver and experiment harness for the adversarial "
                 "prediction-with-expert-advice value function"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    // ---- solve ----
    auto* solve = app.add_subcommand("solve", "solve the equation and write a field snapshot");
    int sv_experts = 0;
    double sv_resolution = 0.0, sv_box = 0.0, sv_dt = -1.0, sv_tolerance = -1.0;
    double sv_boundary_offset = 0.0;
    std::string sv_grid_kind = "sector", sv_output, sv_resume;
    std::uint64_t sv_max_iterations = 0, sv_check_interval = 100, sv_checkpoint_interval = 0;
    std::uint64_t sv_memory_budget = std::uint64_t{8} << 30;
    int sv_workers = 0;
    bool sv_allow_non_monotone = false;
    solve->add_option("--experts", sv_experts, "number of experts (2..12)");
    solve->add_option("--resolution", sv_resolution, "grid spacing h");
    solve->add_option("--box", sv_box, "box half-width (rounded up to a multiple of h)");
    solve->add_option("--grid-kind", sv_grid_kind, "sector or full")
        ->check(CLI::IsMember({"sector", "full"}));
    solve->add_option("--dt", sv_dt, "relaxation step (default h^2/(1+h^2))");
    solve->add_option("--tolerance", sv_tolerance, "residual tolerance (default h^2/100)");
    solve->add_option("--max-iterations", sv_max_iterations, "iteration cap (default automatic)");
    solve->add_option("--check-interval", sv_check_interval, "residual check interval");
    solve->add_option("--checkpoint-interval", sv_checkpoint_interval,
                      "write a resumable checkpoint every K iterations");
    solve->add_option("--memory-budget", sv_memory_budget,
                      "stencil table byte budget; exceeded -> on-the-fly stencils");
    solve->add_option("--workers", sv_workers, "worker threads (0: EXPERTPDE_WORKERS/auto)");
    solve->add_flag("--allow-non-monotone", sv_allow_non_monotone,
                    "permit dt above the monotone bound");
    solve->add_option("--boundary-offset", sv_boundary_offset,
                      "constant added to the Dirichlet data");
    solve->add_option("--resume", sv_resume, "snapshot to continue from");
    solve->add_option("--output", sv_output, "snapshot path")->required();

    // ---- verify ----
    auto* verify = app.add_subcommand(
        "verify", "audit a snapshot (closed-form comparison for <= 4 experts, property audit)");
    std::string vf_input, vf_output;
    double vf_region = 1.0;
    verify->add_option("--input", vf_input, "field snapshot")->required();
    verify->add_option("--region-bound", vf_region, "comparison region (default 1.0)");
    verify->add_option("--output", vf_output, "verification report JSON")->required();

    // ---- optimality ----
    auto* optimality =
        app.add_subcommand("optimality", "per-strategy optimality scores over a region");
    std::string op_input, op_output;
    double op_region = 1.0;
    optimality->add_option("--input", op_input, "field snapshot")->required();
    optimality->add_option("--region-bound", op_region, "evaluation region (default 1.0)");
    optimality->add_option("--output", op_output, "report CSV path")->required();

    // ---- convergence ----
    auto* convergence =
        app.add_subcommand("convergence", "sup-error convergence study across resolutions");
    int cv_experts = 0;
    double cv_box = 5.0, cv_region = 1.0;
    std::string cv_resolutions, cv_reference, cv_output;
    convergence->add_option("--experts", cv_experts, "number of experts")->required();
    convergence->add_option("--resolutions", cv_resolutions, "comma-separated h list")
        ->required();
    convergence->add_option("--box", cv_box, "box half-width (default 5)");
    convergence->add_option("--region-bound", cv_region, "error region (default 1.0)");
    convergence->add_option("--reference", cv_reference,
                            "reference snapshot (required above 4 experts)");
    convergence->add_option("--output", cv_output, "study CSV path")->required();

    // ---- localization ----
    auto* localization = app.add_subcommand(
        "localization", "boundary-perturbation decay study across box sizes");
    int lc_experts = 0;
    double lc_resolution = 0.0, lc_delta = 1.0, lc_region = 1.0;
    std::string lc_boxes, lc_output;
    localization->add_option("--experts", lc_experts, "number of experts")->required();
    localization->add_option("--resolution", lc_resolution, "grid spacing h")->required();
    localization->add_option("--boxes", lc_boxes, "comma-separated box half-widths")->required();
    localization->add_option("--delta", lc_delta, "boundary data perturbation (default 1)");
    localization->add_option("--region-bound", lc_region, "difference region (default 1.0)");
    localization->add_option("--output", lc_output, "study CSV path")->required();

    // ---- grid-info ----
    auto* grid_info =
        app.add_subcommand("grid-info", "node counts and memory estimates for an instance");
    int gi_experts = 0;
    double gi_resolution = 0.0, gi_box = 5.0;
    std::uint64_t gi_budget = std::uint64_t{8} << 30;
    std::string gi_json;
    grid_info->add_option("--experts", gi_experts, "number of experts")->required();
    grid_info->add_option("--resolution", gi_resolution, "grid spacing h")->required();
    grid_info->add_option("--box", gi_box, "box half-width (default 5)");
    grid_info->add_option("--memory-budget", gi_budget, "stencil table byte budget");
    grid_info->add_option("--json", gi_json, "also write the report as JSON");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (solve->parsed()) {
            detail::ManifestWriter manifest("solve", args);
            manifest.path = sv_output + ".manifest.json";

            GridKind kind = sv_grid_kind == "full" ? GridKind::full : GridKind::sector;
            GridConfig cfg;
            Field warm;
            SnapshotMeta warm_meta;
            bool resuming = !sv_resume.empty();
            if (resuming) {
                std::tie(warm, warm_meta) = load_field(sv_resume);
                cfg = warm.config;
                kind = warm.kind;
                if (sv_experts != 0 && sv_experts != cfg.n_experts)
                    throw std::invalid_argument("--experts conflicts with the resume snapshot");
            } else {
                if (sv_experts == 0 || sv_resolution <= 0.0 || sv_box <= 0.0)
                    throw std::invalid_argument(
                        "solve requires --experts, --resolution and --box (or --resume)");
                cfg = GridConfig::make(sv_experts, detail::resolve_box(sv_box, sv_resolution),
                                       sv_resolution);
            }

            SolveOptions opt;
            if (sv_dt > 0.0) opt.dt = sv_dt;
            if (sv_tolerance > 0.0) opt.residual_tolerance = sv_tolerance;
            if (sv_max_iterations > 0) opt.max_iterations = sv_max_iterations;
            opt.residual_check_interval = sv_check_interval;
            opt.allow_non_monotone = sv_allow_non_monotone;
            opt.workers = sv_workers;
            opt.stencil_memory_budget = sv_memory_budget;
            opt.boundary_offset = sv_boundary_offset;
            if (resuming) {
                opt.warm_start = &warm;
                opt.iteration_offset = warm_meta.iterations;
            }

            const std::filesystem::path ckpt_path = sv_output + ".ckpt";
            bool wrote_checkpoint = false;
            if (sv_checkpoint_interval > 0) {
                opt.checkpoint_interval = sv_checkpoint_interval;
                opt.checkpoint_sink = [&](const Field& f, const SolveStats& s) {
                    save_field(f, {s.dt, s.final_residual, s.iterations}, ckpt_path);
                    wrote_checkpoint = true;
                };
            }

            try {
                const SolveResult result = kind == GridKind::sector ? solve_sector(cfg, opt)
                                                                    : solve_full(cfg, opt);
                save_field(result.field,
                           {result.stats.dt, result.stats.final_residual,
                            result.stats.iterations},
                           sv_output);
                manifest.add_output(sv_output);
                if (wrote_checkpoint) std::filesystem::remove(ckpt_path);
                manifest.doc["configuration"] = to_json(cfg, kind);
                manifest.doc["solve"] = {{"iterations", result.stats.iterations},
                                         {"final_residual", result.stats.final_residual},
                                         {"dt", result.stats.dt},
                                         {"tolerance", result.stats.tolerance},
                                         {"precomputed_stencils",
                                          result.stats.precomputed_stencils},
                                         {"workers", result.stats.workers},
                                         {"allocated_bytes", result.stats.allocated_bytes}};
                manifest.finish("completed");
                std::cout << "solved: nodes=" << result.field.values.size()
                          << " iterations=" << result.stats.iterations
                          << " residual=" << result.stats.final_residual << " -> " << sv_output
                          << "\n";
            } catch (const SolveFailure& e) {
                manifest.doc["configuration"] = to_json(cfg, kind);
                manifest.doc["error"] = e.what();
                if (wrote_checkpoint) manifest.add_output(ckpt_path);
                manifest.finish("failed");
                std::cerr << "solve failed: " << e.what()
                          << " (last residual " << e.last_residual() << " after "
                          << e.iterations() << " iterations";
                if (wrote_checkpoint)
                    std::cerr << "; resumable checkpoint at " << ckpt_path.string();
                std::cerr << ")\n";
                return 2;
            }
            return 0;
        }

        if (verify->parsed()) {
            detail::ManifestWriter manifest("verify", args);
            manifest.path = vf_output + ".manifest.json";
            const auto [field, meta] = load_field(vf_input);
            const PropertyReport props = property_report(field, -1.0, vf_region);

            json doc;
            doc["input"] = vf_input;
            doc["configuration"] = to_json(field.config, field.kind);
            doc["snapshot_metadata"] = {{"dt", meta.dt},
                                        {"final_residual", meta.final_residual},
                                        {"iterations", meta.iterations}};
            doc["property_report"] = to_json(props);
            if (field.config.n_experts <= 4) {
                doc["closed_form_sup_error"] = closed_form_sup_error(field, vf_region);
                doc["region_bound"] = vf_region;
            }
            expertpde::detail::write_text_file(vf_output, doc.dump(2) + "\n");
            manifest.add_output(vf_output);
            manifest.finish("completed");
            std::cout << "verify: " << (props.all_passed ? "all checks passed" : "CHECKS FAILED")
                      << " residual=" << props.residual_value;
            if (doc.contains("closed_form_sup_error"))
                std::cout << " closed_form_sup_error=" << double(doc["closed_form_sup_error"]);
            std::cout << " -> " << vf_output << "\n";
            return props.all_passed ? 0 : 3;
        }

        if (optimality->parsed()) {
            detail::ManifestWriter manifest("optimality", args);
            manifest.path = op_output + ".manifest.json";
            const auto [field, meta] = load_field(op_input);
            const StrategyReport report = optimality_report(field, op_region);
            if (!report.warning.empty()) std::cerr << "warning: " << report.warning << "\n";
            write_optimality_csv(report, op_output);
            manifest.add_output(op_output);
            manifest.doc["configuration"] = to_json(field.config, field.kind);
            manifest.doc["region_bound"] = op_region;
            manifest.doc["nodes_evaluated"] = report.nodes_evaluated;
            manifest.doc["nodes_skipped"] = report.nodes_skipped;
            if (!report.warning.empty()) manifest.doc["warning"] = report.warning;
            manifest.finish("completed");
            std::cout << "optimality: " << report.strategies.size() << " strategies over "
                      << report.nodes_evaluated << " nodes -> " << op_output << "\n";
            return 0;
        }

        if (convergence->parsed()) {
            detail::ManifestWriter manifest("convergence", args);
            manifest.path = cv_output + ".manifest.json";
            const std::vector<double> hs =
                detail::parse_double_list(cv_resolutions, "--resolutions");
            std::vector<GridConfig> configs;
            for (const double h : hs)
                configs.push_back(
                    GridConfig::make(cv_experts, detail::resolve_box(cv_box, h), h));
            ConvergenceStudy study;
            if (!cv_reference.empty()) {
                const auto [ref, meta] = load_field(cv_reference);
                study = convergence_study_vs_reference(ref, configs, cv_region);
            } else {
                study = convergence_study(cv_experts, configs, cv_region);
            }
            write_convergence_csv(study, cv_output);
            manifest.add_output(cv_output);
            manifest.doc["fitted_slope"] = study.fitted_slope;
            manifest.doc["oracle"] = study.oracle;
            manifest.finish("completed");
            std::cout << "convergence: fitted slope " << study.fitted_slope << " (oracle "
                      << study.oracle << ") -> " << cv_output << "\n";
            return 0;
        }

        if (localization->parsed()) {
            detail::ManifestWriter manifest("localization", args);
            manifest.path = lc_output + ".manifest.json";
            const std::vector<double> boxes = detail::parse_double_list(lc_boxes, "--boxes");
            const auto rows =
                localization_study(lc_experts, lc_resolution, boxes, lc_delta, lc_region);
            write_localization_csv(rows, lc_output);
            manifest.add_output(lc_output);
            manifest.finish("completed");
            std::cout << "localization: " << rows.size() << " box sizes -> " << lc_output << "\n";
            return 0;
        }

        if (grid_info->parsed()) {
            const GridConfig cfg = GridConfig::make(
                gi_experts, detail::resolve_box(gi_box, gi_resolution), gi_resolution);
            const SectorGrid grid(cfg);
            const std::uint64_t stencil_bytes = StencilTable::estimate_bytes(grid);
            const std::uint64_t solver_bytes = sector_solver_memory_estimate(grid, gi_budget);

            json doc = to_json(cfg, GridKind::sector);
            doc["sector_nodes"] = grid.count();
            doc["interior_nodes"] = grid.interior_count();
            doc["directions_per_node"] = direction_count(cfg.dim);
            doc["stencil_table_bytes"] = stencil_bytes;
            doc["stencil_table_fits_budget"] = stencil_bytes <= gi_budget;
            doc["solver_memory_estimate_bytes"] = solver_bytes;
            if (cfg.dim <= 3) doc["full_grid_nodes"] = FullGrid(cfg).count();

            std::cout << "experts: " << cfg.n_experts << "  dim: " << cfg.dim << "  h: " << cfg.h
                      << "  m: " << cfg.m << "  box: " << cfg.box() << "\n"
                      << "sector nodes: " << grid.count() << "\n"
                      << "interior nodes: " << grid.interior_count() << "\n"
                      << "directions per node: " << direction_count(cfg.dim) << "\n"
                      << "stencil table bytes: " << stencil_bytes
                      << (stencil_bytes <= gi_budget ? " (fits budget)"
                                                     : " (exceeds budget; on-the-fly mode)")
                      << "\n"
                      << "solver memory estimate bytes: " << solver_bytes << "\n";
            if (cfg.dim <= 3)
                std::cout << "full grid nodes: " << FullGrid(cfg).count() << "\n";

            if (!gi_json.empty()) {
                detail::ManifestWriter manifest("grid-info", args);
                manifest.path = gi_json + ".manifest.json";
                expertpde::detail::write_text_file(gi_json, doc.dump(2) + "\n");
                manifest.add_output(gi_json);
                manifest.finish("completed");
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace expertpde::cli
