// mdfrac: command-line driver for mixed-dimensional fracture flow and transport.

#include "mdfrac/parallel.hpp"
#include "mdfrac/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

namespace {

struct Options {
    int threads = 0;
    std::string log_level = "info";

    std::string config;
    std::string out;

    std::string mesh;
    double threshold = 1.0;
    std::string mode = "mean_fraction";
    bool no_protect = false;

    std::string study_mode = "space";
    int levels = 4;

    std::string fractures;
    int resolution = 32;
    double grading = 1.0;
    double min_size_fraction = 1.0;
    double jitter = 0.0;
    std::uint64_t seed = 1;
};

mdfrac::SimulationConfig load(const Options& o) {
    auto cfg = mdfrac::read_config(o.config);
    if (!o.out.empty()) cfg.output_dir = o.out;
    return cfg;
}

int cmd_run(const Options& o) {
    const auto cfg = load(o);
    const auto summary = mdfrac::run_simulation(cfg);
    const auto& darcy = summary["darcy"];
    fmt::print("dofs {}  residual {:.3e}  conservation {:.3e}  pressure [{:.6g}, {:.6g}]\n",
               darcy["dofs"].get<long>(), darcy["relative_residual"].get<double>(),
               darcy["conservation"]["relative"].get<double>(), darcy["pressure_min"].get<double>(),
               darcy["pressure_max"].get<double>());
    if (darcy.contains("exact_error")) {
        fmt::print("exact error: pressure {:.3e}  flux {:.3e}\n", darcy["exact_error"]["pressure"].get<double>(),
                   darcy["exact_error"]["flux"].get<double>());
    }
    if (summary.contains("transport")) {
        const auto& t = summary["transport"];
        fmt::print("transport: {} steps  produced {:.6g}  mass error {:.3e}\n", t["steps"].get<long>(),
                   t["production"]["cumulative"].get<double>(), t["max_mass_error"].get<double>());
    }
    fmt::print("outputs in {}\n", cfg.output_dir.string());
    return 0;
}

int cmd_coarsen(const Options& o) {
    mdfrac::CoarsenConfig cc;
    cc.threshold_value = o.threshold;
    cc.threshold_mode = o.mode == "absolute" ? mdfrac::ThresholdMode::absolute : mdfrac::ThresholdMode::mean_fraction;
    cc.protect_fracture_faces = !o.no_protect;
    const auto res = mdfrac::coarsen_mesh_file(o.mesh, cc, o.out);
    fmt::print("{} -> {} cells (threshold {:.6g}), partition {}\n", res.fine_cells, res.coarse_cells, res.threshold,
               res.report.ok() ? "valid" : "INVALID");
    for (const auto& m : res.report.messages) fmt::print("  {}\n", m);
    return res.report.ok() ? 0 : 1;
}

int cmd_study(const Options& o) {
    const auto cfg = load(o);
    const auto mode = o.study_mode == "time" ? mdfrac::StudyMode::time : mdfrac::StudyMode::space;
    const auto res = mdfrac::run_study(cfg, mode, o.levels);
    mdfrac::write_study(res, cfg.output_dir);
    if (mode == mdfrac::StudyMode::space) {
        fmt::print("{:>5} {:>12} {:>14} {:>14}\n", "level", "h", "pressure", "velocity");
        for (const auto& r : res.rows)
            fmt::print("{:>5} {:>12.5g} {:>14.6e} {:>14.6e}\n", r.level, r.h, r.pressure_error, r.velocity_error);
        fmt::print("fitted order: pressure {:.3f}  velocity {:.3f}\n", res.pressure_order, res.velocity_order);
    } else {
        fmt::print("{:>5} {:>8} {:>12} {:>14}\n", "level", "steps", "dt", "error");
        for (const auto& r : res.rows)
            fmt::print("{:>5} {:>8} {:>12.5g} {:>14.6e}\n", r.level, r.steps, r.dt, r.concentration_error);
        fmt::print("reference {} steps, fitted order {:.3f}\n", res.reference_steps, res.concentration_order);
    }
    return 0;
}

int cmd_mesh(const Options& o) {
    mdfrac::StructuredOptions opt;
    opt.resolution = o.resolution;
    opt.grading = o.grading;
    opt.min_size_fraction = o.min_size_fraction;
    opt.jitter = o.jitter;
    opt.seed = o.seed;
    const auto raw = mdfrac::structured_mesh(mdfrac::read_fracture_file(o.fractures), opt);
    mdfrac::write_gmsh(o.out, raw);
    fmt::print("{} nodes, {} elements -> {}\n", raw.nodes.size(), raw.elements.size(), o.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed-dimensional fracture flow (VEM Darcy + upwind transport)"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--threads", o.threads, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
    app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error, off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

    auto* run = app.add_subcommand("run", "run the full pipeline from a config file");
    run->add_option("config", o.config)->required()->check(CLI::ExistingFile);
    run->add_option("--out", o.out, "override output.directory");

    auto* coarsen = app.add_subcommand("coarsen", "coarsen the matrix cells of a Gmsh mesh");
    coarsen->add_option("mesh", o.mesh)->required();
    coarsen->add_option("--threshold", o.threshold, "merge threshold (0 = identity)")->required();
    coarsen->add_option("--out", o.out, "output directory")->required();
    coarsen->add_option("--mode", o.mode)->check(CLI::IsMember({"mean_fraction", "absolute"}));
    coarsen->add_flag("--no-protect", o.no_protect, "allow merges across fracture faces");

    auto* study = app.add_subcommand("study", "convergence study");
    study->add_option("config", o.config)->required()->check(CLI::ExistingFile);
    study->add_option("--mode", o.study_mode)->check(CLI::IsMember({"space", "time"}));
    study->add_option("--levels", o.levels);
    study->add_option("--out", o.out, "override output.directory");

    auto* mesh = app.add_subcommand("mesh", "generate a fracture-aligned simplex mesh");
    mesh->add_option("fractures", o.fractures)->required()->check(CLI::ExistingFile);
    mesh->add_option("--out", o.out, "output .msh file")->required();
    mesh->add_option("--resolution", o.resolution);
    mesh->add_option("--grading", o.grading);
    mesh->add_option("--min-size-fraction", o.min_size_fraction);
    mesh->add_option("--jitter", o.jitter);
    mesh->add_option("--seed", o.seed);

    CLI11_PARSE(app, argc, argv);

    spdlog::set_default_logger(spdlog::stderr_color_mt("mdfrac"));
    spdlog::set_level(spdlog::level::from_str(o.log_level));
    if (o.threads > 0) mdfrac::set_thread_count(o.threads);

    try {
        if (run->parsed()) return cmd_run(o);
        if (coarsen->parsed()) return cmd_coarsen(o);
        if (study->parsed()) return cmd_study(o);
        if (mesh->parsed()) return cmd_mesh(o);
    } catch (const mdfrac::ConfigError& e) {
        spdlog::error("configuration error: {}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
